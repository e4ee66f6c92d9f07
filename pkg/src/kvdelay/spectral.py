"""Eigen-analysis of the discrete generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.sparse import linalg as splinalg

from .discretization import GeneratorPair

DENSE_CAP = 1200


class DimensionTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    abscissa: float
    n_unstable: int
    gap_to_fit: Optional[float] = None

    def with_fit(self, gamma_hat: float) -> "SpectrumReport":
        return SpectrumReport(self.eigenvalues, self.abscissa, self.n_unstable,
                              abs(-2.0 * self.abscissa - gamma_hat))


@dataclass(frozen=True)
class DissipativityReport:
    sampled_max: float
    exact_max: float


@dataclass(frozen=True)
class ResolventReport:
    lam: float
    max_residual: float
    recovery_error: float


def spectrum(pair: GeneratorPair, cap: int = DENSE_CAP) -> SpectrumReport:
    """All eigenvalues of A, sorted by real part, largest first."""
    if pair.size > cap:
        raise DimensionTooLarge(
            f"generator dimension {pair.size} exceeds the dense cap {cap}; "
            "reduce n_cells or n_rho"
        )
    ev = linalg.eigvals(pair.GA.toarray(), pair.G.toarray())
    ev = ev[np.isfinite(ev)]
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    abscissa = float(ev[0].real)
    return SpectrumReport(ev, abscissa, int(np.count_nonzero(ev.real > 0)))


def dissipativity_certificate(pair: GeneratorPair, n_samples: int = 100, seed: int = 0) -> DissipativityReport:
    """Largest <AV, V>_G over unit states, sampled and exact.

    The exact value is the top eigenvalue of the pencil
    (sym(GA), G), sym(X) = (X + X^T) / 2.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((pair.size, n_samples))
    GX = pair.G @ X
    norms = np.einsum("ij,ij->j", X, GX)
    quad = np.einsum("ij,ij->j", X, pair.GA @ X)
    sampled = float(np.max(quad / norms))
    GA = pair.GA.toarray()
    S = 0.5 * (GA + GA.T)
    top = linalg.eigh(S, pair.G.toarray(), eigvals_only=True,
                      subset_by_index=[pair.size - 1, pair.size - 1])
    return DissipativityReport(sampled, float(top[0]))


def _gnorm(pair: GeneratorPair, x: np.ndarray) -> float:
    return math.sqrt(max(float(x @ (pair.G @ x)), 0.0))


def _ginv_norm(pair: GeneratorPair, lu, r: np.ndarray) -> float:
    """||G^{-1} r||_G = sqrt(r^T G^{-1} r)."""
    return math.sqrt(max(float(r @ lu.solve(r)), 0.0))


def resolvent_test(pair: GeneratorPair, lam: float, trials: int = 5, seed: int = 0,
                   tol: Optional[float] = None) -> ResolventReport:
    """Solve (lam I - A) V = F for random F and a manufactured V*.

    With ``tol`` set, an iterative GMRES solve replaces the sparse LU.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    rng = np.random.default_rng(seed)
    op = (lam * pair.G - pair.GA).tocsc()
    g_lu = splinalg.splu(pair.G.tocsc())
    if tol is None:
        try:
            lu = splinalg.splu(op)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"resolvent is singular at lambda={lam}: {exc}") from exc
        solve = lu.solve
    else:
        def solve(b):
            x, info = splinalg.gmres(op, b, rtol=tol, atol=0.0, restart=op.shape[0], maxiter=10)
            if info < 0:
                raise np.linalg.LinAlgError("gmres breakdown")
            return x

    worst = 0.0
    for _ in range(trials):
        F = rng.standard_normal(pair.size)
        V = solve(pair.G @ F)
        r = lam * (pair.G @ V) - pair.GA @ V - pair.G @ F
        worst = max(worst, _ginv_norm(pair, g_lu, r) / _gnorm(pair, F))
    Vstar = rng.standard_normal(pair.size)
    V = solve(op @ Vstar)
    recovery = _gnorm(pair, V - Vstar) / _gnorm(pair, Vstar)
    return ResolventReport(float(lam), worst, recovery)


def solve_resolvent(pair: GeneratorPair, lam: float, F: np.ndarray) -> np.ndarray:
    """V with (lam I - A) V = F, solved in the Gram-weighted form."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    try:
        lu = splinalg.splu((lam * pair.G - pair.GA).tocsc())
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"resolvent is singular at lambda={lam}: {exc}") from exc
    return lu.solve(pair.G @ np.asarray(F, dtype=float))
