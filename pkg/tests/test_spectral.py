import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kvdelay import spectral
from kvdelay.discretization import GeneratorPair, Mesh, assemble
from kvdelay.params import SystemParams, classify_case, domain_constants, resolve_xi

from conftest import CASE1, CASE2


def tip_mass_frequencies(L, count):
    """Roots of w tan(w L) = 1, one per branch of tan, by bisection."""
    roots = []
    for k in range(count):
        lo = k * math.pi / L + 1e-12
        hi = (k + 0.5) * math.pi / L - 1e-12
        f = lambda w: w * math.sin(w * L) - math.cos(w * L)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(lo) * f(mid) <= 0:
                hi = mid
            else:
                lo = mid
        roots.append(0.5 * (lo + hi))
    return np.array(roots)


def test_diagonal():
    rep = spectral.spectrum(GeneratorPair.from_matrix(np.diag([-1.0, -2.0])))
    assert rep.abscissa == -1.0 and rep.n_unstable == 0
    assert np.allclose(rep.eigenvalues, [-1.0, -2.0])


def test_cap():
    with pytest.raises(spectral.DimensionTooLarge):
        spectral.spectrum(GeneratorPair.from_matrix(np.eye(5)), cap=4)


class TestConservative:
    mesh = Mesh(200, 20)
    pair = assemble(SystemParams(0.0, 0.0, 0.0, 1.0, xi=1.0), mesh)

    def test_abscissa_near_axis(self):
        a = spectral.spectrum(self.pair).abscissa
        assert -1e-3 <= a <= 1e-8

    def test_frequencies_match_transcendental_roots(self):
        ev = spectral.spectrum(self.pair).eigenvalues
        osc = ev[(np.abs(ev.real) < 1e-6) & (ev.imag > 0)]
        freqs = np.sort(osc.imag)[:4]
        assert np.allclose(freqs, tip_mass_frequencies(1.0, 4), rtol=1e-3)


class TestStable:
    def test_case1_abscissa_negative(self):
        rep = spectral.spectrum(assemble(SystemParams(**CASE1), Mesh(50, 25)))
        assert rep.abscissa < 0 and rep.n_unstable == 0
        assert rep.with_fit(-2 * rep.abscissa).gap_to_fit == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("params", [CASE1, CASE2])
    def test_certificate(self, params):
        cert = spectral.dissipativity_certificate(assemble(SystemParams(**params), Mesh(60, 30)))
        assert cert.exact_max <= 1e-10
        assert cert.sampled_max <= cert.exact_max + 1e-12

    def test_uncompensated_delay_reported_positive(self):
        pair = assemble(SystemParams(0.0, 0.0, 1.0, 1.0, xi=1.01), Mesh(40, 20))
        assert spectral.dissipativity_certificate(pair).exact_max > 0


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.05, 3.0), mu1=st.floats(0.0, 3.0), mu2=st.floats(0.0, 3.0), tau=st.floats(0.1, 3.0))
def test_admissible_parameters_are_dissipative(alpha, mu1, mu2, tau):
    mesh = Mesh(16, 8)
    p = SystemParams(alpha, mu1, mu2, tau)
    v = classify_case(p, domain_constants(1.0, 16))
    if not v.feasible or v.xi_high - v.xi_low < 1e-8:
        return
    p, _ = resolve_xi(p, domain_constants(1.0, 16))
    pair = assemble(p, mesh)
    assert spectral.dissipativity_certificate(pair, n_samples=10).exact_max <= 1e-10
    assert spectral.spectrum(pair).abscissa <= 1e-10


class TestResolvent:
    pair = assemble(SystemParams(**CASE1), Mesh(50, 25))

    def test_zero_forcing(self):
        V = spectral.solve_resolvent(self.pair, 1.0, np.zeros(self.pair.size))
        assert np.all(V == 0)

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_direct(self, lam):
        rep = spectral.resolvent_test(self.pair, lam)
        assert rep.recovery_error <= 1e-8
        assert rep.max_residual <= 1e-10

    def test_residual_tracks_tolerance(self):
        loose = spectral.resolvent_test(self.pair, 1.0, trials=2, tol=1e-4)
        tight = spectral.resolvent_test(self.pair, 1.0, trials=2, tol=1e-8)
        assert tight.max_residual < loose.max_residual
        assert loose.max_residual <= 1e-2

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            spectral.resolvent_test(self.pair, 0.0)
        with pytest.raises(ValueError):
            spectral.solve_resolvent(self.pair, -1.0, np.zeros(self.pair.size))
