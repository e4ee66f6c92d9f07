"""Parameter sweeps: spectral abscissa and decay-rate maps over (mu1, mu2, alpha, tau)."""

from __future__ import annotations

import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import functionals, simulate, spectral
from .discretization import Mesh, assemble, initial_state
from .params import (
    StabilityVerdict,
    SystemParams,
    XiPolicy,
    classify_case,
    choose_xi,
    domain_constants,
    exploratory_xi,
)

log = logging.getLogger(__name__)

AXIS_NAMES = ("alpha", "mu1", "mu2", "tau", "length")
PER_POINT = ("spectrum", "trajectory", "both")
CSV_COLUMNS = ("mu1", "mu2", "alpha", "tau", "xi", "case", "abscissa", "gamma_hat", "feasible")
ABSCISSA_TOL = 1e-8


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ValueError(f"axis name must be one of {AXIS_NAMES}, got {self.name!r}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"axis {self.name}: count must be an integer >= 2")
        if not self.min < self.max:
            raise ValueError(f"axis {self.name}: need min < max")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"axis {self.name}: scale must be 'linear' or 'log'")
        if self.scale == "log" and self.min <= 0:
            raise ValueError(f"axis {self.name}: log scale needs min > 0")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.min, self.max, int(self.count))
        return np.linspace(self.min, self.max, int(self.count))


@dataclass(frozen=True)
class SweepPlan:
    axes: tuple[Axis, ...]
    fixed: dict
    mesh: Mesh
    per_point: str = "spectrum"
    t_end: float = 20.0
    dt: Optional[float] = None
    theta: float = 0.5
    xi_policy: XiPolicy = XiPolicy.MIDPOINT
    spectrum_cap: int = spectral.DENSE_CAP

    def __post_init__(self):
        if len(self.axes) > 3:
            raise ValueError("a sweep takes at most 3 axes")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate axis names")
        if self.per_point not in PER_POINT:
            raise ValueError(f"per_point must be one of {PER_POINT}")
        unknown = set(self.fixed) - set(AXIS_NAMES)
        if unknown:
            raise ValueError(f"unknown fixed parameters: {sorted(unknown)}")
        missing = set(AXIS_NAMES) - set(names) - set(self.fixed) - {"length"}
        if missing:
            raise ValueError(f"parameters neither swept nor fixed: {sorted(missing)}")

    def points(self) -> list[dict]:
        grids = [a.values() for a in self.axes]
        out = []
        for combo in itertools.product(*grids):
            p = dict(self.fixed)
            p.setdefault("length", self.mesh.length)
            for a, val in zip(self.axes, combo):
                p[a.name] = float(val)
            out.append(p)
        return out


@dataclass
class SweepRecord:
    index: int
    params: SystemParams
    verdict: Optional[StabilityVerdict]
    abscissa: float = math.nan
    gamma_hat: float = math.nan
    feasible: bool = False
    error: Optional[str] = None


def analyze_point(index: int, values: dict, plan: SweepPlan) -> SweepRecord:
    """Classify, pick xi, assemble and analyze one grid point; never raises."""
    try:
        base = SystemParams(**values)
    except (TypeError, ValueError) as exc:
        dummy = SystemParams(alpha=0.0, mu1=0.0, mu2=0.0, tau=1.0)
        return SweepRecord(index, dummy, None, error=f"invalid parameters: {exc}")
    rec = SweepRecord(index, base, None)
    try:
        mesh = plan.mesh if math.isclose(base.length, plan.mesh.length) else Mesh(
            plan.mesh.n_cells, plan.mesh.n_rho, base.length, plan.mesh.lumped)
        consts = domain_constants(float(base.length), int(mesh.n_cells))
        verdict = classify_case(base, consts)
        if verdict.feasible:
            xi = choose_xi(verdict, plan.xi_policy, params=base)
        else:
            xi = exploratory_xi(base)
        params = base.with_xi(xi)
        rec.params = params
        rec.verdict = StabilityVerdict(verdict.case_tag, verdict.xi_low, verdict.xi_high,
                                       verdict.xi_high_strict, xi)
        rec.feasible = verdict.feasible
        pair = assemble(params, mesh)
        if plan.per_point in ("spectrum", "both"):
            rec.abscissa = spectral.spectrum(pair, plan.spectrum_cap).abscissa
        if plan.per_point in ("trajectory", "both"):
            grid = (simulate.TimeGrid(plan.dt, plan.t_end, plan.theta) if plan.dt
                    else simulate.TimeGrid.default_for(params.tau, mesh.n_rho, plan.t_end, plan.theta))
            s0 = default_initial_state(mesh, params.tau)
            traj = simulate.integrate(s0, pair, grid, stride=max(grid.n_steps, 1))
            rec.gamma_hat = functionals.fit_decay(traj.times, traj.energy).gamma_hat
    except Exception as exc:  # per-point failures are recorded, never fatal
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("sweep point %d failed: %s", index, rec.error)
    return rec


def default_initial_state(mesh: Mesh, tau: float):
    L = mesh.length
    return initial_state(
        lambda x: np.sin(np.pi * x / (2 * L)),
        lambda x: np.zeros_like(x),
        lambda x, s: np.zeros_like(x),
        mesh,
        tau,
    )


def _blocks(n: int, workers: int) -> list[range]:
    workers = max(1, min(workers, n))
    size, extra = divmod(n, workers)
    out, start = [], 0
    for w in range(workers):
        stop = start + size + (1 if w < extra else 0)
        out.append(range(start, stop))
        start = stop
    return out


def run_sweep(plan: SweepPlan, threads: int = 1) -> list[SweepRecord]:
    """Analyze every grid point; output is ordered by grid index.

    Points are split into contiguous static blocks, one per worker.
    """
    points = plan.points()
    results: list[Optional[SweepRecord]] = [None] * len(points)

    def work(block: range):
        for i in block:
            results[i] = analyze_point(i, points[i], plan)

    blocks = _blocks(len(points), threads)
    if len(blocks) == 1:
        work(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            for fut in [pool.submit(work, b) for b in blocks]:
                fut.result()
    return [r for r in results if r is not None]


def feasibility_violations(records: Sequence[SweepRecord], tol: float = ABSCISSA_TOL) -> list[SweepRecord]:
    """Feasible points whose abscissa is positive beyond ``tol``."""
    return [r for r in records if r.feasible and not math.isnan(r.abscissa) and r.abscissa > tol]


def monotonicity_violations(records: Sequence[SweepRecord], axis: str = "alpha",
                            tol: float = 1e-10) -> list[tuple[SweepRecord, SweepRecord]]:
    """Consecutive pairs along ``axis`` where the abscissa increases.

    Reported, not asserted: for large viscous damping the overdamped branch
    near -1/alpha moves toward the imaginary axis.
    """
    groups: dict = {}
    for r in records:
        key = tuple((n, getattr(r.params, n)) for n in AXIS_NAMES if n != axis)
        groups.setdefault(key, []).append(r)
    out = []
    for recs in groups.values():
        recs = sorted(recs, key=lambda r: getattr(r.params, axis))
        for a, b in zip(recs, recs[1:]):
            if not (math.isnan(a.abscissa) or math.isnan(b.abscissa)) and b.abscissa > a.abscissa + tol:
                out.append((a, b))
    return out


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in records:
        p = r.params
        case = r.verdict.case_tag.value if r.verdict is not None else "Error"
        row = [_fmt(p.mu1), _fmt(p.mu2), _fmt(p.alpha), _fmt(p.tau),
               _fmt(p.xi if p.xi is not None else math.nan), case,
               _fmt(r.abscissa), _fmt(r.gamma_hat), "true" if r.feasible else "false"]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
