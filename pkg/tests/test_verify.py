import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdpflow.constitutive import ExponentFn, StressModel
from cdpflow.energies import GronwallParams, gronwall_bound
from cdpflow.errors import EmptyRun, FitFailure, InvalidParameter, UnderResolved
from cdpflow.solver import RunReport, SolverConfig, run
from cdpflow.torus import ScalarField, VectorField, make_grid, random_scalar, random_solenoidal, sym_gradient
from cdpflow.verify import (check_energy_balance, check_gronwall_chain, check_gronwall_series,
                            check_lemma_difference, check_lemma_hessian, check_stress_constants,
                            difference_sides, energy_slack, estimate_stress_constants,
                            fd_dc_error, fd_jacobian_error, gronwall_fit, read_report)

from conftest import constant_scalar, shear

TWO_PI = 2 * math.pi


def logistic(nu0=1.0, lo=1.4, hi=2.0):
    return StressModel(nu0, ExponentFn.logistic(lo, hi))


def newtonian(nu0=0.05):
    return StressModel(nu0, ExponentFn.constant(2.0))


class TestEnergyBalance:
    def test_zero_data(self, grid):
        cfg = SolverConfig(grid, newtonian(), dt=1e-3, t_end=0.01)
        r = run(cfg, VectorField(grid, np.zeros((grid.dim,) + grid.shape)), constant_scalar(grid, 0.0),
                report_every=1)
        rep = check_energy_balance(r)
        assert rep.satisfied
        assert rep.extras["dissipated"] == 0.0 and rep.extras["energy_drop"] == 0.0
        assert rep.extras["identity_residual"] == 0.0

    def test_newtonian_identity(self):
        g = make_grid(2, 32, 10)
        cfg = SolverConfig(g, newtonian(), dt=1e-4, t_end=0.05, delta=0.0)
        r = run(cfg, shear(g), constant_scalar(g, 0.0))
        rep = check_energy_balance(r)
        assert rep.satisfied
        assert rep.extras["identity_residual"] < 1e-3
        # Stokes shear: E(t) = E0 exp(-2 nu k^2 t), all of it dissipated
        e0 = 0.25
        assert rep.extras["energy_drop"] == pytest.approx(e0 * (1 - math.exp(-2 * 0.05 * TWO_PI**2 * 0.05)),
                                                          rel=1e-3)

    def test_shear_thinning(self, grid):
        rng = np.random.default_rng(1)
        cfg = SolverConfig(grid, logistic(0.05, 1.5), dt=5e-4, t_end=0.02)
        c0 = ScalarField(grid, 0.15 + 0.02 * random_scalar(grid, rng, kmax=2).values)
        r = run(cfg, random_solenoidal(grid, rng, kmax=3) * 2.0, c0)
        rep = check_energy_balance(r)
        assert rep.satisfied and rep.extras["identity_residual"] < 5e-2
        assert energy_slack(r)["increase"] == 0.0

    def test_empty(self, grid):
        with pytest.raises(EmptyRun):
            check_energy_balance(RunReport(rows=[], diagnostics={}, termination="Completed"))
        with pytest.raises(EmptyRun):
            energy_slack(RunReport(rows=[], diagnostics={"t": np.zeros(1)}, termination="Completed"))


class TestHessianLemma:
    @pytest.mark.parametrize("A", [0.3, 1.0, 2.0])
    def test_single_mode_oracle(self, A):
        g = make_grid(2, 16, 5)
        v = shear(g, A)
        rep = check_lemma_hessian(constant_scalar(g, 0.0), v, 2.0)
        k2, k4 = TWO_PI**2, TWO_PI**4
        expected = (A**2 * k4 / 2) / (A**2 * k4 / 4 + 1 + A**2 * k2 / 4)
        assert rep.empirical_constant == pytest.approx(expected, rel=1e-12)
        assert rep.extras["ratio_refined"] == pytest.approx(expected, rel=1e-12)
        assert rep.satisfied

    def test_constant_field(self, grid):
        v = VectorField(grid, np.zeros((grid.dim,) + grid.shape))
        rep = check_lemma_hessian(constant_scalar(grid, 0.1), v, 1.5)
        assert rep.empirical_constant == 0.0 and rep.satisfied

    def test_shear_thinning_resolved(self):
        g = make_grid(3, 16, 5)
        rng = np.random.default_rng(3)
        v = random_solenoidal(g, rng, kmax=3)
        c = ScalarField(g, 0.15 + 0.02 * random_scalar(g, rng, kmax=2).values)
        rep = check_lemma_hessian(c, v, 1.5, ExponentFn.logistic(1.5, 2.0))
        assert rep.satisfied and rep.empirical_constant > 0

    def test_under_resolved(self):
        g = make_grid(2, 16, 5)
        vals = shear(g).values.copy()
        vals[0] += 1e-3 * np.sin(TWO_PI * 7 * g.coords()[1])
        v = VectorField(g, vals)
        with pytest.raises(UnderResolved):
            check_lemma_hessian(constant_scalar(g, 0.0), v, 1.5)


class TestDifferenceLemma:
    def test_equal_fields(self, grid, rng):
        v = random_solenoidal(grid, rng, kmax=3)
        rep = check_lemma_difference(constant_scalar(grid, 0.0), v, v, 1.6, ExponentFn.logistic(1.4, 2.0))
        assert rep.lhs_series[0] == 0.0 and rep.rhs_series[0] == 0.0 and rep.satisfied

    def test_newtonian_closed_form(self, grid, rng):
        v1 = random_solenoidal(grid, rng, kmax=3)
        v2 = random_solenoidal(grid, rng, kmax=3)
        lhs, rhs = difference_sides(constant_scalar(grid, 0.0), v1, v2, 1.6, ExponentFn.constant(2.0))
        dD = sym_gradient(v1 - v2).magnitude()
        assert rhs == pytest.approx(2 * math.sqrt(np.mean(dD**2)), rel=1e-12)
        assert lhs == pytest.approx(np.mean(dD**1.6) ** (1 / 1.6), rel=1e-12)

    @pytest.mark.parametrize("l", [2.0, 0.5, 2.5])
    def test_bad_exponent(self, grid, rng, l):
        v = random_solenoidal(grid, rng, kmax=3)
        with pytest.raises(InvalidParameter):
            difference_sides(constant_scalar(grid, 0.0), v, v * 0.5, l, ExponentFn.constant(1.5))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), l=st.floats(1.0, 1.99), lo=st.floats(1.1, 2.0),
           amp=st.floats(0.01, 20.0))
    def test_holds_for_random_pairs(self, seed, l, lo, amp):
        g = make_grid(2, 16, 5)
        rng = np.random.default_rng(seed)
        v1 = random_solenoidal(g, rng, kmax=4) * amp
        v2 = random_solenoidal(g, rng, kmax=4) * amp
        c = random_scalar(g, rng, kmax=3)
        e = ExponentFn.constant(lo) if lo >= 1.999 else ExponentFn.logistic(lo, 2.0, c_mid=0.0)
        assert check_lemma_difference(c, v1, v2, l, e).satisfied


class TestStressConstants:
    def test_newtonian(self):
        k = estimate_stress_constants(newtonian(0.7), 10_000, 10.0, seed=1, polish=0)
        assert k.K1 == pytest.approx(1.4, rel=1e-12)
        assert k.K2 == pytest.approx(1.4, rel=1e-12)
        assert k.K3 == 0.0
        assert k.K4 > 0

    def test_logistic_floor_and_order(self):
        m = logistic(1.0)
        rep = check_stress_constants(m, 20_000, 10.0, seed=2, dim=3)
        assert rep.satisfied
        x = rep.extras
        assert x["K1"] >= 2 * (1.4 - 1) * (1 - 1e-9)
        assert x["K1"] <= x["K2"] and x["K3"] > 0 and x["K4"] > 0

    def test_too_few_samples(self):
        with pytest.raises(InvalidParameter):
            estimate_stress_constants(logistic(), 100, 10.0)
        with pytest.raises(InvalidParameter):
            estimate_stress_constants(logistic(), 10_000, 0.0)

    def test_finite_differences(self):
        rng = np.random.default_rng(5)
        D = rng.standard_normal((200, 3, 3))
        D = 0.5 * (D + np.swapaxes(D, 1, 2)) * 3
        c = rng.uniform(-0.2, 0.5, 200)
        m = StressModel(1.0, ExponentFn.logistic(1.4, 2.0, c_mid=0.15, slope=10.0))
        assert fd_jacobian_error(m, c, D) < 1e-6
        assert fd_dc_error(m, c, D) < 1e-6


class TestGronwall:
    def _manufactured(self, n=2001, t_max=0.9):
        t = np.linspace(0.0, t_max, n)
        return t, 1.0 / (1.0 - t)

    def test_fit_recovers_riccati(self):
        t, z = self._manufactured()
        fit = gronwall_fit(t, z)
        assert fit["alpha"] == pytest.approx(1.0, abs=1e-3)
        assert fit["c0"] == pytest.approx(1.0, abs=1e-3)

    def test_bound_matches_solution(self):
        t, z = self._manufactured()
        rep = check_gronwall_series(t, z)
        assert rep.satisfied
        np.testing.assert_allclose(rep.rhs_series, z, rtol=1e-2)

    def test_matches_energies_bound(self):
        t, z = self._manufactured()
        fit = gronwall_fit(t, z)
        gp = GronwallParams(1.0, fit["alpha"], fit["c0"])
        rep = check_gronwall_series(t, z)
        ref = np.array([gronwall_bound(gp, s) for s in t])
        np.testing.assert_allclose(rep.rhs_series, ref, rtol=1e-12)

    def test_no_growth(self):
        t = np.linspace(0, 1, 50)
        rep = check_gronwall_series(t, np.exp(-t))
        assert rep.satisfied and math.isinf(rep.extras["horizon"])
        np.testing.assert_allclose(rep.rhs_series, 1.0)
        assert gronwall_fit(t, np.ones(50)) == {}

    def test_fit_failures(self):
        with pytest.raises(FitFailure):
            gronwall_fit(np.linspace(0, 1, 5), np.ones(5))
        z = np.ones(20)
        z[3] = np.nan
        with pytest.raises(FitFailure):
            gronwall_fit(np.linspace(0, 1, 20), z)

    def test_horizon_reported(self):
        t = np.linspace(0, 1.2, 601)
        z = 1.0 / np.abs(1.0 - t + 1e-9)
        z[t >= 1.0] = 1e9
        rep = check_gronwall_series(t[t < 0.95], z[t < 0.95])
        assert rep.extras["horizon"] > 0.9

    def test_chain_on_run(self, grid):
        cfg = SolverConfig(grid, logistic(0.05, 1.5), dt=1e-3, t_end=0.02)
        rng = np.random.default_rng(0)
        c0 = ScalarField(grid, 0.15 + 0.02 * random_scalar(grid, rng, kmax=2).values)
        r = run(cfg, random_solenoidal(grid, rng, kmax=3), c0, report_every=1)
        assert check_gronwall_chain(r).satisfied
        with pytest.raises(EmptyRun):
            check_gronwall_chain(RunReport(rows=[], diagnostics={}, termination="Completed"))


def test_report_round_trip(tmp_path):
    t = np.linspace(0, 0.5, 30)
    rep = check_gronwall_series(t, 1 / (1 - t))
    rp, cp = rep.write(tmp_path / "v")
    back = read_report(rp)
    assert back["name"] == "gronwall_chain" and back["satisfied"] == "true"
    assert float(back["alpha"]) == rep.extras["alpha"]
    assert float(back["empirical_constant"]) == rep.empirical_constant
    data = np.loadtxt(cp, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 0], t)
    np.testing.assert_array_equal(data[:, 2], rep.rhs_series)
