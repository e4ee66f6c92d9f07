import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kvdelay import functionals as F
from kvdelay.discretization import Mesh, assemble, initial_state, unpack, zero_state
from kvdelay.params import SystemParams
from kvdelay.simulate import TimeGrid, integrate

from conftest import CASE1, sine_start


def unit_history(mesh):
    return initial_state(lambda x: 0 * x, lambda x: 0 * x, lambda x, s: 1.0 + 0 * x, mesh, 1.0)


class TestEnergy:
    def test_zero(self, case1, small_mesh):
        assert F.energy(zero_state(small_mesh), case1, small_mesh) == 0.0

    def test_unit_history(self, small_mesh):
        p = SystemParams(0.1, 1.0, 0.5, 1.0, xi=1.0)
        assert F.energy(unit_history(small_mesh), p, small_mesh) == pytest.approx(0.5, rel=1e-14)

    def test_linear_displacement(self, case1):
        mesh = Mesh(16, 4)
        s = initial_state(lambda x: x, lambda x: 0 * x, lambda x, t: 0 * x, mesh, 1.0)
        assert F.energy(s, case1, mesh) == pytest.approx(0.5, rel=1e-14)
        assert F.energy1(s, mesh) == pytest.approx(1.0, rel=1e-14)

    def test_velocity_includes_point_mass(self, case1):
        mesh = Mesh(16, 4)
        s = initial_state(lambda x: 0 * x, lambda x: 1.0 + 0 * x, lambda x, t: 0 * x, mesh, 1.0)
        # |u_t|^2 over the interval (1) plus the boundary mass (1), z_0 excluded
        assert F.energy1(s, mesh) == pytest.approx(2.0 - 2 * mesh.h / 3, rel=1e-12)


class TestLyapunov:
    def test_weights_exact(self):
        w = F.lyapunov_weights(Mesh(4, 8), 1.0)
        assert w.sum() == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-15)

    def test_unit_history_value(self, small_mesh):
        p = SystemParams(0.1, 1.0, 0.5, 1.0, xi=1.0)
        val = F.lyapunov(unit_history(small_mesh), p, small_mesh, 1.0)
        assert val == pytest.approx(0.5 + (1 - math.exp(-2)) / 2, rel=1e-14)
        assert val == pytest.approx(0.932, abs=5e-4)

    def test_small_epsilon_limit(self, case1, small_mesh):
        s = sine_start(small_mesh, 1.0)
        E = F.energy(s, case1, small_mesh)
        assert F.lyapunov(s, case1, small_mesh, 1e-14) == pytest.approx(E, rel=1e-12)

    def test_zero_state(self, case1, small_mesh):
        assert F.lyapunov(zero_state(small_mesh), case1, small_mesh, 0.3) == 0.0

    def test_rejects_nonpositive_epsilon(self, case1, small_mesh):
        with pytest.raises(ValueError):
            F.lyapunov(zero_state(small_mesh), case1, small_mesh, 0.0)

    def test_form_matches_coefficient(self, small_pair, case1, small_mesh):
        H = F.lyapunov_form(small_pair)
        x = np.random.default_rng(1).standard_normal(small_pair.size)
        assert 0.5 * x @ H @ x == pytest.approx(F.lyapunov_coefficient(unpack(x, small_mesh), case1, small_mesh))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3),
       eps=st.floats(1e-4, 1.0))
def test_quadratic_scaling(seed, c, eps):
    mesh = Mesh(10, 6)
    p = SystemParams(0.4, 1.0, 0.5, 0.8, xi=0.6)
    s = unpack(np.random.default_rng(seed).standard_normal(mesh.packed_size), mesh)
    E = F.energy(s, p, mesh)
    assert E >= 0 and F.delay_integral(s, mesh) >= 0
    assert F.energy(s.scaled(c), p, mesh) == pytest.approx(c * c * E, rel=1e-12)
    assert F.lyapunov(s.scaled(c), p, mesh, eps) == pytest.approx(c * c * F.lyapunov(s, p, mesh, eps),
                                                                   rel=1e-10, abs=1e-12 * c * c * E)


class TestResidual:
    def test_zero(self):
        t = np.linspace(0, 1, 11)
        assert np.all(F.energy_identity_residual(t, 0 * t, 0 * t) == 0)

    def test_exact_quadratic(self):
        t = np.linspace(0, 1, 11)
        assert np.allclose(F.energy_identity_residual(t, t ** 2, 2 * t), 0, atol=1e-14)

    def test_too_short(self):
        with pytest.raises(ValueError):
            F.energy_identity_residual([0, 1], [1, 1], [0, 0])

    def test_refinement_shrinks_residual(self):
        p = SystemParams(**CASE1)
        peaks = []
        for k in (1, 2, 4):
            mesh = Mesh(25 * k, 25 * k)
            tr = integrate(sine_start(mesh, 1.0), assemble(p, mesh), TimeGrid(0.04 / k, 4.0))
            peaks.append(tr.residuals().max() / tr.energy[0])
        assert peaks[0] > peaks[1] > peaks[2]
        assert peaks[0] / peaks[2] > 3

    def test_conservative_run(self):
        mesh = Mesh(40, 20)
        p = SystemParams(0.0, 0.0, 0.0, 1.0, xi=1.0)
        tr = integrate(sine_start(mesh, 1.0), assemble(p, mesh), TimeGrid(0.01, 5.0))
        drift = np.abs(tr.energy1 - tr.energy1[0]) / tr.energy1[0]
        assert drift.max() <= 1e-8 * 5.0
        assert tr.residuals().max() <= 1e-3 * tr.energy[0]


class TestFitDecay:
    def test_exact_exponential(self):
        t = np.linspace(0, 10, 101)
        fit = F.fit_decay(t, 7 * np.exp(-2 * t), window=(0, 10))
        assert abs(fit.gamma_hat - 2) <= 1e-12 and abs(fit.r_squared - 1) <= 1e-12
        assert fit.C_hat == pytest.approx(7, rel=1e-12)

    def test_constant(self):
        t = np.linspace(0, 10, 101)
        fit = F.fit_decay(t, np.full_like(t, 3.0))
        assert abs(fit.gamma_hat) <= 1e-14 and fit.r_squared == 1.0

    def test_default_window(self):
        t = np.linspace(0, 10, 101)
        assert F.fit_decay(t, np.exp(-t)).window == (1.0, 10.0)

    def test_errors(self):
        t = np.linspace(0, 1, 11)
        with pytest.raises(ValueError):
            F.fit_decay(t, 0 * t)
        with pytest.raises(ValueError):
            F.fit_decay(t, np.exp(-t), window=(0.0, 0.2))

    def test_energy_and_lyapunov_rates_agree(self):
        mesh = Mesh(50, 25)
        p = SystemParams(**CASE1)
        pair = assemble(p, mesh)
        tr = integrate(sine_start(mesh, 1.0), pair, TimeGrid(0.02, 40.0))
        ch = F.epsilon_search(pair, p, mesh, tr)
        gE = F.fit_decay(tr.times, tr.energy, (4, 40)).gamma_hat
        gL = F.fit_decay(tr.times, tr.lyapunov(ch.epsilon), (4, 40)).gamma_hat
        assert gE > 0 and abs(gE - gL) <= 0.05 * gE


class TestEpsilonSearch:
    def test_heavily_damped(self):
        mesh = Mesh(30, 15)
        p = SystemParams(3.0, 1.0, 0.0, 1.0, xi=1.0)
        pair = assemble(p, mesh)
        tr = integrate(sine_start(mesh, 1.0), pair, TimeGrid(0.02, 10.0))
        ch = F.epsilon_search(pair, p, mesh, tr)
        assert ch.epsilon >= 2 ** -6
        assert 0 < ch.beta1 <= 1 <= ch.beta2

    def test_zero_trajectory_takes_grid_max(self, small_pair, case1, small_mesh):
        tr = integrate(zero_state(small_mesh), small_pair, TimeGrid(0.1, 1.0))
        ch = F.epsilon_search(small_pair, case1, small_mesh, tr)
        assert ch.epsilon == max(F.EPSILON_GRID)

    def test_growing_energy_rejected(self):
        mesh = Mesh(30, 15)
        p = SystemParams(0.0, 0.0, 1.0, 1.0, xi=1.01)
        pair = assemble(p, mesh)
        tr = integrate(sine_start(mesh, 1.0), pair, TimeGrid(0.02, 10.0))
        assert np.any(np.diff(tr.energy) > 0)
        with pytest.raises(F.NoAdmissibleEpsilon):
            F.epsilon_search(pair, p, mesh, tr)

    def test_equivalence_bounds_hold_samplewise(self):
        mesh = Mesh(30, 15)
        p = SystemParams(**CASE1)
        pair = assemble(p, mesh)
        tr = integrate(np.random.default_rng(0).standard_normal(pair.size), pair, TimeGrid(0.02, 5.0))
        ch = F.epsilon_search(pair, p, mesh, tr)
        L = tr.lyapunov(ch.epsilon)
        assert np.all(ch.beta1 * tr.energy <= L * (1 + 1e-12))
        assert np.all(L <= ch.beta2 * tr.energy * (1 + 1e-12))
