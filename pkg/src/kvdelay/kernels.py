"""Backend selection for the time-stepping kernel.

The compiled extension is used when it imports; otherwise the numpy/scipy
fallback with the same signature.  Set ``KVDELAY_PURE_PYTHON=1`` to force the
fallback.
"""

from __future__ import annotations

import os

from . import _march_py

if os.environ.get("KVDELAY_PURE_PYTHON", "").strip() not in ("", "0"):
    march = _march_py.march
    BACKEND = "python"
else:
    try:
        from ._march import march
        BACKEND = "cython"
    except ImportError:
        march = _march_py.march
        BACKEND = "python"


def available_backends() -> dict:
    out = {"python": _march_py.march}
    try:
        from ._march import march as compiled
    except ImportError:
        pass
    else:
        out["cython"] = compiled
    return out
