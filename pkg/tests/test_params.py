import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kvdelay.params import (
    Case,
    DomainConstants,
    InfeasibleParameters,
    SystemParams,
    XiPolicy,
    choose_xi,
    classify_case,
    domain_constants,
    exploratory_xi,
    poincare_constant,
    resolve_xi,
    trace_constant,
)

UNIT = DomainConstants(trace_B=1.0, poincare_C=2 / math.pi)


def p(**kw):
    base = dict(alpha=0.1, mu1=1.0, mu2=0.5, tau=1.0)
    base.update(kw)
    return SystemParams(**base)


class TestSystemParams:
    @pytest.mark.parametrize("field,value", [("tau", 0.0), ("tau", -1.0), ("length", 0.0),
                                             ("alpha", -0.1), ("mu1", -1.0), ("mu2", -1.0),
                                             ("tau", math.nan), ("xi", 0.0)])
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ValueError):
            p(**{field: value})

    def test_with_xi_keeps_the_rest(self):
        q = p().with_xi(0.8)
        assert q.xi == 0.8 and q.alpha == 0.1 and q.tau == 1.0


class TestClassify:
    def test_case1_interval(self):
        v = classify_case(p(), UNIT)
        assert v.case_tag is Case.CASE1
        assert (v.xi_low, v.xi_high) == (0.5, 1.5)
        assert v.feasible and not v.xi_high_strict

    def test_case2_interval(self):
        v = classify_case(p(alpha=1.0, mu1=0.5, mu2=1.0), UNIT)
        assert v.case_tag is Case.CASE2
        assert v.xi_low == 1.0 and v.xi_high == pytest.approx(2.0) and v.xi_high_strict
        assert v.admits(1.0) and not v.admits(2.0)

    def test_infeasible(self):
        v = classify_case(p(alpha=0.3, mu1=0.5, mu2=1.0), UNIT)
        assert v.case_tag is Case.INFEASIBLE and not v.feasible

    def test_threshold_is_strict(self):
        assert classify_case(p(alpha=0.5, mu1=0.5, mu2=1.0), UNIT).case_tag is Case.INFEASIBLE
        assert classify_case(p(alpha=0.5 + 1e-9, mu1=0.5, mu2=1.0), UNIT).case_tag is Case.CASE2

    def test_equal_feedbacks_go_to_case2(self):
        assert classify_case(p(alpha=0.2, mu1=1.0, mu2=1.0), UNIT).case_tag is Case.CASE2
        assert classify_case(p(alpha=0.0, mu1=1.0, mu2=1.0), UNIT).case_tag is Case.INFEASIBLE

    def test_undamped_case1_is_exploratory(self):
        v = classify_case(p(alpha=0.0), UNIT)
        assert v.case_tag is Case.EXPLORATORY and not v.feasible


class TestChooseXi:
    def test_case1_midpoint_is_tau_mu1(self):
        assert choose_xi(classify_case(p(), UNIT), XiPolicy.MIDPOINT, params=p()) == 1.0

    def test_case2_midpoint(self):
        q = p(alpha=1.0, mu1=0.5, mu2=1.0)
        assert choose_xi(classify_case(q, UNIT), params=q) == pytest.approx(1.5)

    def test_lower_edge_plus_margin(self):
        v = classify_case(p(), UNIT)
        assert choose_xi(v, XiPolicy.LOWER_EDGE_PLUS_MARGIN, margin=0.1) == pytest.approx(0.55)

    def test_lower_edge_clipped_inside(self):
        v = classify_case(p(), UNIT)
        xi = choose_xi(v, XiPolicy.LOWER_EDGE_PLUS_MARGIN, margin=10.0)
        assert v.xi_low < xi < v.xi_high

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleParameters):
            choose_xi(classify_case(p(alpha=0.3, mu1=0.5, mu2=1.0), UNIT))

    def test_resolve_keeps_user_xi(self):
        q, v = resolve_xi(p(xi=0.7), UNIT)
        assert q.xi == 0.7 and v.chosen_xi == 0.7

    def test_resolve_rejects_user_xi_outside(self):
        with pytest.raises(InfeasibleParameters):
            resolve_xi(p(xi=1.6), UNIT)

    def test_exploratory_xi(self):
        assert exploratory_xi(p(mu2=2.0, tau=0.5)) == pytest.approx(1.01)
        assert exploratory_xi(p(mu2=0.0, tau=0.5)) == 0.5


params_strategy = st.builds(
    SystemParams,
    alpha=st.floats(0.0, 5.0),
    mu1=st.floats(0.0, 5.0),
    mu2=st.floats(0.0, 5.0),
    tau=st.floats(0.05, 5.0),
)


@given(params_strategy, st.floats(0.2, 3.0))
def test_classification_partitions(q, B):
    v = classify_case(q, DomainConstants(B, 1.0))
    if q.mu2 < q.mu1:
        assert v.case_tag in (Case.CASE1, Case.EXPLORATORY)
        assert (v.case_tag is Case.EXPLORATORY) == (q.alpha == 0)
    elif q.alpha > (q.mu2 - q.mu1) * B * B:
        assert v.case_tag is Case.CASE2
    else:
        assert v.case_tag is Case.INFEASIBLE


@given(params_strategy, st.sampled_from(list(XiPolicy)))
def test_chosen_xi_strictly_inside(q, policy):
    v = classify_case(q, UNIT)
    if not v.feasible or v.xi_high - v.xi_low <= 1e-9:
        return
    xi = choose_xi(v, policy, params=q)
    assert v.xi_low < xi < v.xi_high
    if v.case_tag is Case.CASE1 and policy is XiPolicy.MIDPOINT:
        assert xi == q.tau * q.mu1


@given(params_strategy, st.floats(0.0, 5.0))
def test_case2_monotone_in_alpha(q, extra):
    if classify_case(q, UNIT).case_tag is Case.CASE2:
        bigger = SystemParams(q.alpha + extra, q.mu1, q.mu2, q.tau)
        assert classify_case(bigger, UNIT).case_tag is Case.CASE2


class TestConstants:
    def test_trace_unit(self):
        assert trace_constant(1.0, 200) == pytest.approx(1.0, rel=0.02)

    def test_trace_length_four(self):
        assert trace_constant(4.0, 200) == pytest.approx(2.0, rel=0.02)

    def test_trace_by_random_search(self):
        # brute force: max over piecewise-linear u of |u(L)| / |u'|
        rng = np.random.default_rng(1)
        L, n = 1.0, 50
        h = L / n
        best = 0.0
        for _ in range(2000):
            slopes = rng.standard_normal(n) + rng.uniform(0, 5)
            best = max(best, abs(slopes.sum() * h) / math.sqrt(h * (slopes @ slopes)))
        B = trace_constant(L, n)
        assert best <= B * (1 + 1e-12)
        assert best > 0.9 * B

    def test_poincare_oracle_by_bisection(self):
        # first eigenvalue of -u''=lam u, u(0)=0, u'(L)=0: cos(k L)=0, C=1/k
        L = 1.0
        lo, hi = 0.1, 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if math.cos(mid * L) > 0:
                lo = mid
            else:
                hi = mid
        assert poincare_constant(L, 200) == pytest.approx(1.0 / lo, rel=0.02)
        assert poincare_constant(2.0, 200) == pytest.approx(4 / math.pi, rel=0.02)

    def test_mesh_independence(self):
        assert trace_constant(1.0, 25) == pytest.approx(trace_constant(1.0, 400), rel=0.05)
        assert poincare_constant(1.0, 25) == pytest.approx(poincare_constant(1.0, 400), rel=0.05)

    def test_dilation_scaling(self):
        assert poincare_constant(2.0, 100) == pytest.approx(2 * poincare_constant(1.0, 100), rel=1e-9)
        assert trace_constant(2.0, 100) == pytest.approx(math.sqrt(2) * trace_constant(1.0, 100), rel=1e-9)

    def test_refinement_order(self):
        errs = [abs(poincare_constant(1.0, n) - 2 / math.pi) for n in (25, 50, 100, 200)]
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(r >= 1.0 for r in rates)
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_too_coarse(self):
        with pytest.raises(ValueError):
            trace_constant(1.0, 2)

    def test_cached(self):
        assert domain_constants(1.0, 64) is domain_constants(1.0, 64)
        c = domain_constants(1.0, 64)
        assert c.trace_B > 0 and c.poincare_C > 0
