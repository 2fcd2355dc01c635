import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from cdpflow.constitutive import ExponentFn
from cdpflow.energies import (EnergyReport, GronwallParams, check_q, d_bar, default_q, energy_ip,
                              energy_jp, energy_report, gronwall_bound, gronwall_zeta,
                              strain_gradient_sq)
from cdpflow.errors import BlowUpBeforeT, GridMismatch, InvalidParameter
from cdpflow.torus import (ScalarField, SymTensorField, VectorField, lp_norm, make_grid,
                           random_scalar, random_solenoidal, spectral_gradient, sym_gradient)

from conftest import constant_scalar, shear

NEWTONIAN = ExponentFn.constant(2.0)
THINNING = ExponentFn.logistic(1.4, 2.0)


def zero_vector(g):
    return VectorField(g, np.zeros((g.dim,) + g.shape))


class TestDBar:
    def test_at_rest(self, grid):
        m = grid.dim * (grid.dim + 1) // 2
        assert np.all(d_bar(SymTensorField(grid, np.zeros((m,) + grid.shape))).values == 1.0)

    def test_value(self):
        g = make_grid(3, 8, 2)
        full = np.zeros((3, 3) + g.shape)
        full[0, 0] = full[1, 1] = full[2, 2] = 1.0  # |D|^2 = 3
        np.testing.assert_allclose(d_bar(SymTensorField.from_full(g, full)).values, 2.0)

    def test_lower_bound(self, grid, rng):
        assert d_bar(sym_gradient(random_solenoidal(grid, rng) * 5.0)).values.min() >= 1.0


class TestIp:
    def test_constant_velocity(self, grid):
        v = VectorField(grid, np.ones((grid.dim,) + grid.shape))
        assert energy_ip(constant_scalar(grid, 0.1), v, THINNING) == pytest.approx(0.0, abs=1e-20)

    def test_newtonian_independent_of_c(self, grid, rng):
        v = random_solenoidal(grid, rng)
        expected = np.mean(strain_gradient_sq(sym_gradient(v)))
        for c in (constant_scalar(grid, -3.0), random_scalar(grid, rng)):
            assert energy_ip(c, v, NEWTONIAN) == pytest.approx(expected, rel=1e-12)

    def test_shear_mode(self, grid):
        # |grad D|^2 = 2 (2 pi^2 sin)^2, mean (2 pi^2)^2
        assert energy_ip(constant_scalar(grid, 0.0), shear(grid), NEWTONIAN) == pytest.approx(
            (2 * math.pi**2) ** 2, rel=1e-12)

    def test_full_frobenius_of_grad_D(self, grid, rng):
        v = random_solenoidal(grid, rng)
        G = spectral_gradient(spectral_gradient(v)).values  # G[i, j, k] = d_k d_j v_i
        gradD = 0.5 * (G + np.swapaxes(G, 0, 1))
        assert np.mean(strain_gradient_sq(sym_gradient(v))) == pytest.approx(
            np.mean(np.sum(gradD**2, axis=(0, 1, 2))), rel=1e-12)

    def test_grid_mismatch(self):
        a, b = make_grid(2, 16, 5), make_grid(2, 32, 5)
        with pytest.raises(GridMismatch):
            energy_ip(constant_scalar(a, 0.0), shear(b), THINNING)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.1, 20.0))
    def test_weight_bounded_by_one(self, seed, amp):
        g = make_grid(2, 16, 5)
        rng = np.random.default_rng(seed)
        v = random_solenoidal(g, rng) * amp
        c = random_scalar(g, rng)
        ip = energy_ip(c, v, THINNING)
        assert 0 <= ip <= energy_ip(c, v, NEWTONIAN) * (1 + 1e-12)


class TestJp:
    def test_zero_rate(self, grid, rng):
        v = random_solenoidal(grid, rng)
        assert energy_jp(constant_scalar(grid, 0.0), v, zero_vector(grid), THINNING) == 0.0

    def test_newtonian(self, grid, rng):
        v, vd = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
        expected = np.mean(sym_gradient(vd).magnitude() ** 2)
        assert energy_jp(constant_scalar(grid, 0.0), v, vd, NEWTONIAN) == pytest.approx(expected, rel=1e-12)

    def test_decay_mode(self):
        g = make_grid(3, 16, 5)
        w = random_solenoidal(g, np.random.default_rng(5)) * 3.0
        lam, t = 2.5, 0.3
        v = w * math.exp(-lam * t)
        c = random_scalar(g, np.random.default_rng(6)) * 0.1
        Dv = sym_gradient(v).full()
        n2 = np.sum(Dv**2, axis=(0, 1))
        weight = (1 + n2) ** ((THINNING(c.values) - 2) / 2)
        expected = lam**2 * np.mean(weight * n2)
        assert energy_jp(c, v, v * (-lam), THINNING) == pytest.approx(expected, rel=1e-6)


class TestZeta:
    def test_q_rules(self):
        assert default_q(3) == 4 and default_q(2) == 3
        with pytest.raises(InvalidParameter):
            check_q(3.0, 3)
        with pytest.raises(InvalidParameter):
            check_q(2.0, 2)
        assert check_q(2.5, 2) == 2.5

    def test_rest_state_3d(self):
        g = make_grid(3, 8, 2)
        z = zero_vector(g)
        c = constant_scalar(g, 0.4)
        assert gronwall_zeta(z, z, c, constant_scalar(g, 0.0), 4.0) == pytest.approx(1.0, rel=1e-15)

    def test_rest_state_2d(self):
        g = make_grid(2, 8, 2)
        z = zero_vector(g)
        assert gronwall_zeta(z, z, constant_scalar(g, 0.4), constant_scalar(g, 0.0), 3.0) == 0.0

    def test_report_matches_recomputation(self, grid, rng):
        v, vd = random_solenoidal(grid, rng), random_solenoidal(grid, rng)
        c, cd = random_scalar(grid, rng), random_scalar(grid, rng)
        q = default_q(grid.dim)
        r = energy_report(0.5, v, vd, c, cd, THINNING, q)
        assert r.zeta == pytest.approx(gronwall_zeta(v, vd, c, cd, q), rel=1e-12)
        assert r.zeta == r.dbar_s + r.dtv2 + r.gradc_q + r.dtc_q
        assert r.kinetic == pytest.approx(0.5 * lp_norm(v, 2) ** 2)
        assert r.mass_c == pytest.approx(c.mean(), abs=1e-15)
        assert all(getattr(r, k) >= 0 for k in EnergyReport.columns() if k != "mass_c")

    def test_columns(self):
        assert EnergyReport.columns() == ["t", "kinetic", "ip", "jp", "dbar_s", "dtv2", "gradc_q", "dtc_q",
                                          "zeta", "modular_gradv", "mass_c"]


class TestGronwallBound:
    def test_initial_value(self):
        assert gronwall_bound(GronwallParams(3.0, 0.5, 2.0), 0.0) == 3.0

    def test_lemma_formula(self):
        g = GronwallParams(1.0, 1.0, 1.0)
        assert gronwall_bound(g, 0.5) == pytest.approx(2.0, rel=1e-15)
        with pytest.raises(BlowUpBeforeT):
            gronwall_bound(g, 1.0)

    def test_validation(self):
        with pytest.raises(InvalidParameter):
            GronwallParams(1.0, 0.0, 1.0)
        with pytest.raises(InvalidParameter):
            GronwallParams(1.0, 1.0, 1.0, (0.0, 1.0), (1.0, -1.0))
        with pytest.raises(InvalidParameter):
            gronwall_bound(GronwallParams(1.0, 1.0, 1.0), -0.1)

    def test_trapezoid_phi(self):
        g = GronwallParams(1.0, 1.0, 0.1, (0.0, 0.5, 1.0), (0.0, 1.0, 2.0))
        assert g.big_phi(1.0) == pytest.approx(2.0)
        assert g.big_phi(0.25) == pytest.approx(1.0 + 0.5 * 0.25 * 0.5)

    @settings(max_examples=40, deadline=None)
    @given(z0=st.floats(0.1, 3.0), alpha=st.floats(0.2, 2.0), c0=st.floats(0.1, 2.0))
    def test_matches_ode_solution(self, z0, alpha, c0):
        g = GronwallParams(z0, alpha, c0)
        T = 0.9 * g.horizon()
        sol = solve_ivp(lambda t, z: c0 * z ** (1 + alpha), (0, T), [z0], rtol=1e-11, atol=1e-12,
                        dense_output=True)
        ts = np.linspace(0, T, 25)
        bound = np.array([gronwall_bound(g, t) for t in ts])
        exact = z0 * (1 - alpha * c0 * z0**alpha * ts) ** (-1 / alpha)
        np.testing.assert_allclose(bound, exact, rtol=1e-12)
        assert np.all(sol.sol(ts)[0] <= bound * (1 + 1e-6))
        assert np.all(np.diff(bound) >= 0)

    @settings(max_examples=30, deadline=None)
    @given(phi=st.lists(st.floats(0.0, 5.0), min_size=5, max_size=5))
    def test_nondecreasing_with_forcing(self, phi):
        ts = tuple(np.linspace(0, 0.2, 5))
        g = GronwallParams(0.5, 1.0, 1.0, ts, tuple(phi))
        vals = []
        for t in np.linspace(0, 0.2, 11):
            try:
                vals.append(gronwall_bound(g, t))
            except BlowUpBeforeT:
                break
        assert np.all(np.diff(vals) >= -1e-12)
