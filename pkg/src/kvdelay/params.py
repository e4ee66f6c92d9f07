"""Model parameters, stability-case classification and domain constants.

The two proved regimes are

* Case1: ``mu2 < mu1``; the delay-energy weight ``xi`` must lie in
  ``[tau*mu2, tau*(2*mu1 - mu2)]``.
* Case2: ``mu2 >= mu1`` and ``alpha > (mu2 - mu1) * B**2``; then
  ``xi`` must lie in ``[tau*mu2, 2*tau*(alpha/B**2 + mu1 - mu2/2))``.

Anything else is Infeasible, except ``alpha == 0`` with ``mu2 < mu1``, which
is tagged Exploratory: the boundary damping alone makes the generator
dissipative, but the decay argument leans on the viscous term.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .fem import p1_operators

XI_REL_MARGIN = 1e-6
DEFAULT_LOWER_EDGE_MARGIN = 0.05


class Case(str, enum.Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    INFEASIBLE = "Infeasible"
    EXPLORATORY = "Exploratory"


class XiPolicy(str, enum.Enum):
    MIDPOINT = "midpoint"
    LOWER_EDGE_PLUS_MARGIN = "lower_edge_plus_margin"


class InfeasibleParameters(ValueError):
    """No admissible delay-energy weight exists for these parameters."""


@dataclass(frozen=True)
class SystemParams:
    alpha: float
    mu1: float
    mu2: float
    tau: float
    length: float = 1.0
    xi: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "mu1", "mu2", "tau", "length"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length}")
        for name in ("alpha", "mu1", "mu2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.xi is not None and not (math.isfinite(self.xi) and self.xi > 0):
            raise ValueError(f"xi must be positive, got {self.xi}")

    def with_xi(self, xi: float) -> "SystemParams":
        return replace(self, xi=float(xi))


@dataclass(frozen=True)
class DomainConstants:
    trace_B: float
    poincare_C: float

    def __post_init__(self):
        if not (self.trace_B > 0 and self.poincare_C > 0):
            raise ValueError("domain constants must be positive")


@dataclass(frozen=True)
class StabilityVerdict:
    case_tag: Case
    xi_low: float
    xi_high: float
    xi_high_strict: bool = False
    chosen_xi: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return self.case_tag in (Case.CASE1, Case.CASE2)

    @property
    def empty(self) -> bool:
        if self.xi_high_strict:
            return not self.xi_low < self.xi_high
        return not self.xi_low <= self.xi_high

    def admits(self, xi: float) -> bool:
        """Whether ``xi`` lies in the (closed, or half-open in Case2) interval."""
        if self.empty:
            return False
        if self.xi_high_strict:
            return self.xi_low <= xi < self.xi_high
        return self.xi_low <= xi <= self.xi_high


def _case1_interval(p: SystemParams) -> tuple[float, float]:
    return p.tau * p.mu2, p.tau * (2.0 * p.mu1 - p.mu2)


def classify_case(params: SystemParams, constants: DomainConstants) -> StabilityVerdict:
    if params.tau <= 0 or params.length <= 0:
        raise ValueError("tau and length must be positive")
    B2 = constants.trace_B ** 2
    p = params
    if p.mu2 < p.mu1:
        lo, hi = _case1_interval(p)
        tag = Case.CASE1 if p.alpha > 0 else Case.EXPLORATORY
        return StabilityVerdict(tag, lo, hi, False, None)
    lo = p.tau * p.mu2
    if p.alpha > (p.mu2 - p.mu1) * B2:
        hi = 2.0 * p.tau * (p.alpha / B2 + p.mu1 - p.mu2 / 2.0)
        return StabilityVerdict(Case.CASE2, lo, hi, True, None)
    return StabilityVerdict(Case.INFEASIBLE, lo, lo, True, None)


def choose_xi(
    verdict: StabilityVerdict,
    policy: XiPolicy | str = XiPolicy.MIDPOINT,
    margin: float = DEFAULT_LOWER_EDGE_MARGIN,
    params: Optional[SystemParams] = None,
) -> float:
    """Pick a delay-energy weight strictly inside the feasible interval.

    ``params`` is only used to return ``tau*mu1`` exactly for the Case1
    midpoint (the arithmetic midpoint can be off by one ulp).
    """
    policy = XiPolicy(policy)
    if verdict.case_tag is Case.INFEASIBLE or verdict.empty:
        raise InfeasibleParameters(
            f"no admissible xi: {verdict.case_tag.value} interval "
            f"[{verdict.xi_low}, {verdict.xi_high}] is empty"
        )
    lo, hi = verdict.xi_low, verdict.xi_high
    width = hi - lo
    inner_lo = lo + XI_REL_MARGIN * width
    inner_hi = hi - XI_REL_MARGIN * width
    if policy is XiPolicy.MIDPOINT:
        if params is not None and verdict.case_tag in (Case.CASE1, Case.EXPLORATORY) and params.mu2 < params.mu1:
            xi = params.tau * params.mu1
        else:
            xi = lo + 0.5 * width
    else:
        xi = min(max(lo * (1.0 + margin), inner_lo), inner_hi)
    if not xi > 0:
        raise InfeasibleParameters(f"selected xi={xi} is not positive")
    return xi


def resolve_xi(
    params: SystemParams,
    constants: DomainConstants,
    policy: XiPolicy | str = XiPolicy.MIDPOINT,
) -> tuple[SystemParams, StabilityVerdict]:
    """Classify and fill in ``xi``; a user-supplied ``xi`` is checked, not replaced."""
    verdict = classify_case(params, constants)
    if params.xi is not None:
        if not verdict.feasible:
            raise InfeasibleParameters(
                f"{verdict.case_tag.value} parameters admit no proved xi (got xi={params.xi})"
            )
        if not verdict.admits(params.xi):
            raise InfeasibleParameters(
                f"xi={params.xi} outside the {verdict.case_tag.value} interval "
                f"[{verdict.xi_low}, {verdict.xi_high}{')' if verdict.xi_high_strict else ']'}"
            )
        return params, replace(verdict, chosen_xi=params.xi)
    xi = choose_xi(verdict, policy, params=params)
    return params.with_xi(xi), replace(verdict, chosen_xi=xi)


def exploratory_xi(params: SystemParams) -> float:
    """Bookkeeping weight for points outside the proved regimes."""
    if params.mu2 > 0:
        return 1.01 * params.tau * params.mu2
    return params.tau


# -- domain constants ------------------------------------------------------


def _check_cells(n_cells: int) -> None:
    if n_cells < 4:
        raise ValueError(f"n_cells must be >= 4, got {n_cells}")


def trace_constant(length: float, n_cells: int) -> float:
    """Discrete norm of the trace at x = L on {u : u(0) = 0}.

    Largest generalized eigenvalue of (boundary Gram, stiffness), square-rooted.
    """
    _check_cells(n_cells)
    ops = p1_operators(float(length), int(n_cells))
    K = ops.stiffness().toarray()
    Bg = ops.boundary_gram().toarray()
    try:
        top = linalg.eigh(Bg, K, eigvals_only=True, subset_by_index=[n_cells - 1, n_cells - 1])
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"stiffness matrix is singular: {exc}") from exc
    return math.sqrt(top[0])


def poincare_constant(length: float, n_cells: int) -> float:
    """Discrete best constant in ||u|| <= C ||u'|| on {u : u(0) = 0}."""
    _check_cells(n_cells)
    ops = p1_operators(float(length), int(n_cells))
    K = ops.stiffness().toarray()
    M = ops.mass().toarray()
    try:
        low = linalg.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"mass matrix is singular: {exc}") from exc
    if not low[0] > 0:
        raise linalg.LinAlgError("stiffness matrix is singular")
    return 1.0 / math.sqrt(low[0])


@functools.lru_cache(maxsize=64)
def domain_constants(length: float, n_cells: int) -> DomainConstants:
    return DomainConstants(trace_constant(length, n_cells), poincare_constant(length, n_cells))
