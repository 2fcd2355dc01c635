"""Numerical checks of the structural and energy inequalities on fields and runs.

Every check returns an :class:`InequalityReport`. Empirical constants are
reported rather than proven; ``satisfied`` records whether the sampled data meet
the inequality under the tolerance stored on the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .constitutive import (ExponentFn, StressConstants, StressModel, dstress_dc, dstress_dD,
                           frob2, monotonicity_gap, stress)
from .energies import GronwallParams, energy_ip
from .errors import EmptyRun, FitFailure, InvalidParameter, UnderResolved
from .torus import (ScalarField, VectorField, interpolate, make_grid, spectral_gradient,
                    spectral_tail, sym_gradient)

RESOLUTION_TAIL = 1e-8
QUADRATURE_TOL = 1e-8


@dataclass
class InequalityReport:
    """``lhs <= empirical_constant * rhs`` sampled along ``t``."""

    name: str
    t: np.ndarray
    lhs_series: np.ndarray
    rhs_series: np.ndarray
    empirical_constant: float
    satisfied: bool
    tolerance: float
    extras: dict = field(default_factory=dict)

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        """Write ``<name>.report`` (key = value) and ``<name>.csv`` (series)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        rep = d / f"{self.name}.report"
        lines = [f"name = {self.name}",
                 f"satisfied = {str(self.satisfied).lower()}",
                 f"empirical_constant = {self.empirical_constant!r}",
                 f"tolerance = {self.tolerance!r}",
                 f"samples = {len(self.t)}"]
        lines += [f"{k} = {v!r}" for k, v in sorted(self.extras.items())]
        rep.write_text("\n".join(lines) + "\n")
        csv = d / f"{self.name}.csv"
        np.savetxt(csv, np.column_stack([self.t, self.lhs_series, self.rhs_series]),
                   delimiter=",", header="t,lhs,rhs", comments="", fmt="%.17g")
        return rep, csv


def read_report(path: str | Path) -> dict:
    """Parse a ``.report`` file back into a dict of strings."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _ratio(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))


# -- energy balance -------------------------------------------------------------

def check_energy_balance(r, fit_fraction: float = 0.5, margin: float = 2.0) -> InequalityReport:
    """Running ``sup |v|_2^2`` plus accumulated modulars against a data budget.

    The budget is ``|v0|_2^2 + 2 int |f.v| + t``; the last term absorbs the unit
    shift in the modulars. The constant is fitted on the leading ``fit_fraction``
    of the samples and must hold on the whole run with factor ``margin``. The
    discrete energy identity residual is reported in ``extras``.
    """
    dg = r.diagnostics
    if not len(dg.get("t", ())):
        raise EmptyRun("run report has no samples")
    t = dg["t"]
    v2 = 2.0 * dg["kinetic"]
    lhs = np.maximum.accumulate(v2) + dg["modular_int"]
    work_abs = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * np.abs(dg["power"][1:] + dg["power"][:-1]))])
    rhs = v2[0] + 2.0 * work_abs + t
    ratios = _ratio(lhs, rhs)
    n_fit = max(1, int(math.ceil(fit_fraction * len(t))))
    C = float(np.max(ratios[:n_fit]))
    satisfied = bool(np.all(lhs <= margin * C * rhs + 1e-300))
    e0 = 0.5 * v2[0]
    balance = 0.5 * v2 + dg["dissipation_int"] - dg["work_int"]
    scale = max(e0, float(np.max(np.abs(dg["dissipation_int"]))), np.finfo(float).tiny)
    identity_residual = float(np.max(np.abs(balance - e0)) / scale)
    return InequalityReport("energy_balance", t, lhs, rhs, C, satisfied, margin,
                            {"identity_residual": identity_residual,
                             "dissipated": float(dg["dissipation_int"][-1]),
                             "energy_drop": float(e0 - 0.5 * v2[-1])})


def energy_slack(r) -> dict[str, float]:
    """Per-step energy increase and energy-identity defect of a run.

    ``increase`` is the largest one-step growth of the kinetic energy; ``defect`` is
    the largest ``|dE + dissipation*dt - work*dt|`` with trapezoidal quadrature.
    """
    dg = r.diagnostics
    if len(dg.get("t", ())) < 2:
        raise EmptyRun("need at least two samples")
    dE = np.diff(dg["kinetic"])
    defect = dE + np.diff(dg["dissipation_int"]) - np.diff(dg["work_int"])
    return {"increase": float(max(0.0, dE.max())), "defect": float(np.abs(defect).max())}


# -- field lemmas ---------------------------------------------------------------

def _require_resolved(*fs):
    for f in fs:
        band = f.grid.n // 3
        tail = spectral_tail(f, band)
        if tail > RESOLUTION_TAIL:
            raise UnderResolved(f"spectral tail {tail:.2e} above |k| = {band} exceeds {RESOLUTION_TAIL:g}")


def _hessian_ratio(c: ScalarField, v: VectorField, p_minus: float, exponent: ExponentFn):
    H = spectral_gradient(spectral_gradient(v))
    lhs = float(np.mean(H.magnitude() ** p_minus))
    D = sym_gradient(v)
    rhs = energy_ip(c, v, exponent) + float(np.mean((1.0 + D.magnitude() ** 2) ** (p_minus / 2.0)))
    return lhs, rhs


def check_lemma_hessian(c: ScalarField, v: VectorField, p_minus: float,
                        exponent: Optional[ExponentFn] = None) -> InequalityReport:
    """``|grad^2 v|_{p-}^{p-}`` against ``I_p + |Dbar v|_{p-}^{p-}``.

    The ratio is recomputed after interpolation to ``2n`` and must agree within
    a factor 2. ``exponent`` defaults to the constant ``p_minus``.
    """
    exponent = ExponentFn.constant(p_minus) if exponent is None else exponent
    _require_resolved(c, v)
    lhs, rhs = _hessian_ratio(c, v, p_minus, exponent)
    g = v.grid
    fine = make_grid(g.dim, 2 * g.n, g.K)
    lhs2, rhs2 = _hessian_ratio(interpolate(c, fine), interpolate(v, fine), p_minus, exponent)
    r1 = float(_ratio(lhs, rhs))
    r2 = float(_ratio(lhs2, rhs2))
    stable = (r1 == r2 == 0.0) or (r1 > 0 and r2 > 0 and 0.5 <= r2 / r1 <= 2.0)
    return InequalityReport("lemma_hessian", np.array([0.0, 1.0]), np.array([lhs, lhs2]),
                            np.array([rhs, rhs2]), r1, bool(stable and math.isfinite(r1)), 2.0,
                            {"ratio_refined": r2, "n": g.n, "n_refined": fine.n})


def difference_sides(c: ScalarField, v1: VectorField, v2: VectorField, l: float,
                     exponent: ExponentFn) -> tuple[float, float]:
    """Left and right side of the weighted strain-difference Hölder bound."""
    if not 1.0 <= l < 2.0:
        raise InvalidParameter(f"need 1 <= l < 2, got {l}")
    D1 = sym_gradient(v1).magnitude() ** 2
    D2 = sym_gradient(v2).magnitude() ** 2
    dD = sym_gradient(v1 - v2).magnitude()
    p = exponent(c.values)
    lhs = float(np.mean(dD**l)) ** (1.0 / l)
    weighted = float(np.mean((1.0 + D1 + D2) ** ((p - 2.0) / 2.0) * dD**2))
    r = 2.0 * l / (2.0 - l)
    beta = (2.0 - p) / 4.0
    g = (1.0 + D1) ** beta + (1.0 + D2) ** beta
    top = float(g.max())
    # scale before the power: r grows without bound as l -> 2
    tail = top * float(np.mean((g / top) ** r)) ** (1.0 / r)
    return lhs, math.sqrt(weighted) * tail


def check_lemma_difference(c: ScalarField, v1: VectorField, v2: VectorField, l: float,
                           exponent: ExponentFn) -> InequalityReport:
    lhs, rhs = difference_sides(c, v1, v2, l, exponent)
    C = float(_ratio(lhs, rhs))
    tol = 1.0 + QUADRATURE_TOL
    return InequalityReport("lemma_difference", np.array([0.0]), np.array([lhs]), np.array([rhs]),
                            C, bool(lhs <= tol * rhs), tol, {"l": l})


# -- stress constants -----------------------------------------------------------

def _random_sym(rng, n, d, cap):
    """Symmetric matrices with uniformly distributed Frobenius norm in ``[0, cap]``."""
    A = rng.standard_normal((n, d, d))
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    A /= np.sqrt(frob2(A))[:, None, None]
    return rng.uniform(0.0, cap, n)[:, None, None] * A


def stress_samples(m: StressModel, samples: int, magnitude_cap: float, seed: int = 0, dim: int = 3,
                   c_range: tuple[float, float] = (-1.0, 1.0)) -> dict[str, np.ndarray]:
    """Per-sample coercivity, Jacobian, concentration and monotonicity ratios."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(*c_range, samples)
    D = _random_sym(rng, samples, dim, magnitude_cap)
    D2 = _random_sym(rng, samples, dim, magnitude_cap)
    B = _random_sym(rng, samples, dim, magnitude_cap)
    # a zero direction carries no information; redraw its radius away from 0
    B[frob2(B) == 0] = np.eye(dim) * magnitude_cap / math.sqrt(dim)
    p = m.exponent(c)
    nD = frob2(D)
    w = (1.0 + nD) ** ((p - 2.0) / 2.0)
    J = dstress_dD(m, c, D)
    coerc = np.einsum("nijkl,nij,nkl->n", J, B, B) / (w * frob2(B))
    jac = np.linalg.norm(J.reshape(samples, dim * dim, dim * dim), ord=2, axis=(1, 2)) / w
    dc = np.sqrt(frob2(dstress_dc(m, c, D, strict=False)))
    dc_weight = (1.0 + nD) ** ((p - 1.0) / 2.0) * np.log(2.0 + np.sqrt(nD))
    gap = monotonicity_gap(m, c, D, D2)
    keep = gap.weight > 0
    return {"coercivity": coerc, "jacobian": jac, "dc": dc / dc_weight,
            "monotonicity": gap.lhs[keep] / gap.weight[keep],
            "pair_c": c[keep], "pair_D1": D[keep], "pair_D2": D2[keep]}


def _unpack_pair(x, dim, cap, c_range):
    m6 = dim * (dim + 1) // 2
    iu = np.triu_indices(dim)

    def mat(y):
        M = np.zeros((dim, dim))
        M[iu] = y
        M = M + M.T - np.diag(np.diag(M))
        nrm = math.sqrt(frob2(M))
        return M * (cap / nrm) if nrm > cap else M

    return float(np.clip(x[0], *c_range)), mat(x[1:1 + m6]), mat(x[1 + m6:])


def _polish_monotonicity(m: StressModel, starts, dim, cap, c_range) -> float:
    """Local minimisation of the monotonicity ratio from the given sample points."""
    from scipy.optimize import minimize

    def ratio(x):
        c, D1, D2 = _unpack_pair(x, dim, cap, c_range)
        gap = monotonicity_gap(m, c, D1, D2)
        return float(gap.lhs / gap.weight) if gap.weight > 0 else math.inf

    best = math.inf
    for x0 in starts:
        res = minimize(ratio, x0, method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000})
        best = min(best, float(res.fun), ratio(x0))
    return best


def estimate_stress_constants(m: StressModel, samples: int, magnitude_cap: float, seed: int = 0,
                              dim: int = 3, polish: int = 4,
                              c_range: tuple[float, float] = (-1.0, 1.0)) -> StressConstants:
    """Empirical ``K1..K4`` over uniformly sampled ``(c, D, B)`` with ``|D|, |B| <= cap``.

    The raw minimum of the monotonicity ratio is a noisy extreme statistic, so the
    ``polish`` smallest samples are refined by a local minimiser inside the same
    box before ``K4`` is reported.
    """
    if samples < 10_000:
        raise InvalidParameter("at least 1e4 samples are required")
    if not magnitude_cap > 0:
        raise InvalidParameter("magnitude cap must be positive")
    s = stress_samples(m, samples, magnitude_cap, seed, dim, c_range)
    K4 = float(s["monotonicity"].min())
    if polish:
        iu = np.triu_indices(dim)
        order = np.argsort(s["monotonicity"])[:polish]
        starts = [np.concatenate([[s["pair_c"][i]], s["pair_D1"][i][iu], s["pair_D2"][i][iu]]) for i in order]
        K4 = min(K4, _polish_monotonicity(m, starts, dim, magnitude_cap, c_range))
    return StressConstants(K1=float(s["coercivity"].min()), K2=float(s["jacobian"].max()),
                           K3=float(s["dc"].max()), K4=K4)


def check_stress_constants(m: StressModel, samples: int, magnitude_cap: float, seed: int = 0,
                           dim: int = 3) -> InequalityReport:
    """``K1`` against the closed-form floor ``2 nu0 (p_minus - 1)`` plus ordering checks."""
    k = estimate_stress_constants(m, samples, magnitude_cap, seed, dim)
    floor = 2.0 * m.nu0 * (m.exponent.p_minus - 1.0)
    ok = k.K1 >= floor * (1.0 - 1e-9) and k.K1 <= k.K2 * (1.0 + 1e-12) and k.K4 > 0
    return InequalityReport("stress_constants", np.array([0.0]), np.array([floor]), np.array([k.K1]),
                            k.K1 / floor if floor > 0 else math.inf, bool(ok), 1e-9,
                            {"K1": k.K1, "K2": k.K2, "K3": k.K3, "K4": k.K4, "samples": samples,
                             "magnitude_cap": magnitude_cap, "seed": seed})


def _rel_err(a, b, S, h) -> float:
    """Largest per-sample relative discrepancy over the trailing matrix axes.

    The first ``16 eps |S| / h`` of each discrepancy is forgiven: that much is
    cancellation noise of a central difference of ``S`` with step ``h``.
    """
    scale = np.maximum(np.abs(a).max(axis=(-2, -1)), np.abs(b).max(axis=(-2, -1)))
    noise = 16.0 * np.finfo(float).eps * np.abs(S).max(axis=(-2, -1)) / h
    err = np.maximum(np.abs(a - b).max(axis=(-2, -1)) - noise, 0.0)
    return float(np.max(np.where(scale > 0, err / np.where(scale > 0, scale, 1.0), 0.0)))


def fd_jacobian_error(m: StressModel, c, D, h: float = 1e-6) -> float:
    """Relative discrepancy of ``dS/dD`` against central differences along symmetric directions."""
    D = np.asarray(D, dtype=float)
    d = D.shape[-1]
    J = dstress_dD(m, c, D)
    S = stress(m, c, D)
    worst = 0.0
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            fd = (stress(m, c, D + h * E) - stress(m, c, D - h * E)) / (2.0 * h)
            worst = max(worst, _rel_err(np.einsum("...ijkl,kl->...ij", J, E), fd, S, h))
    return worst


def fd_dc_error(m: StressModel, c, D, h: float = 1e-6) -> float:
    """Relative discrepancy of ``dS/dc`` against a central difference in ``c``."""
    c = np.asarray(c, dtype=float)
    an = dstress_dc(m, c, D)
    fd = (stress(m, c + h, D) - stress(m, c - h, D)) / (2.0 * h)
    return _rel_err(an, fd, stress(m, c, D), h)


# -- Gronwall chain -------------------------------------------------------------

MIN_ALPHA = 0.05


def gronwall_fit(t: np.ndarray, zeta: np.ndarray, phi: Optional[np.ndarray] = None) -> dict:
    """Fit ``zeta' <= phi + c0 zeta^(1+alpha)`` on samples with positive excess growth.

    ``alpha`` comes from a least-squares line through ``log(zeta' - phi)`` versus
    ``log zeta``; ``c0`` is the smallest constant making the inequality hold at every
    sample for that ``alpha``. Returns ``{}`` when ``zeta`` never grows faster than
    ``phi`` allows.
    """
    t = np.asarray(t, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if len(t) < 10:
        raise FitFailure(f"need at least 10 samples, got {len(t)}")
    if not np.all(np.isfinite(zeta)):
        raise FitFailure("zeta series is not finite")
    phi = np.zeros_like(zeta) if phi is None else np.asarray(phi, dtype=float)
    dz = np.gradient(zeta, t, edge_order=2)
    excess = dz - phi
    # differencing roundoff of a flat series is not growth
    floor = 64.0 * np.finfo(float).eps * (np.abs(zeta).max() / np.diff(t).min() + np.abs(phi).max())
    use = (excess > floor) & (zeta > 0)
    if not np.any(use):
        return {}
    x = np.log(zeta[use])
    y = np.log(excess[use])
    if use.sum() >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
    else:
        slope, intercept = 1.0 + MIN_ALPHA, float(y[0] - (1.0 + MIN_ALPHA) * x[0])
    alpha = max(float(slope) - 1.0, MIN_ALPHA)
    c0 = float(np.max(excess[use] / zeta[use] ** (1.0 + alpha)))
    if not (math.isfinite(alpha) and math.isfinite(c0)):
        raise FitFailure("Gronwall fit produced non-finite constants")
    return {"alpha": alpha, "c0": c0, "c0_lsq": float(np.exp(intercept)), "fit_samples": int(use.sum())}


def check_gronwall_series(t, zeta, phi=None, tolerance: float = 1e-3) -> InequalityReport:
    """Compare ``zeta`` with the local Gronwall bound built from the fitted constants."""
    t = np.asarray(t, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    fit = gronwall_fit(t, zeta, phi)
    phi_t = tuple(t) if phi is not None else ()
    phi_v = tuple(np.maximum(np.asarray(phi, dtype=float), 0.0)) if phi is not None else ()
    if not fit:
        gp = GronwallParams(float(zeta[0]), 1.0, 1.0, phi_t, phi_v)
        bound = np.array([gp.big_phi(s) for s in t])
        ok = bool(np.all(zeta <= bound * (1.0 + tolerance)))
        return InequalityReport("gronwall_chain", t, zeta, bound, 0.0, ok, tolerance,
                                {"alpha": math.nan, "c0": 0.0, "horizon": math.inf})
    gp = GronwallParams(float(zeta[0]), fit["alpha"], fit["c0"], phi_t, phi_v)
    bound = np.full_like(zeta, np.inf)
    for i, s in enumerate(t):
        if gp.bracket(s) <= 0:
            break
        Phi = gp.big_phi(s)
        bound[i] = Phi * (1.0 - gp.alpha * gp.c0 * Phi**gp.alpha * s) ** (-1.0 / gp.alpha)
    pre = np.isfinite(bound)
    ok = bool(np.all(zeta[pre] <= bound[pre] * (1.0 + tolerance)))
    emp = float(np.max(_ratio(zeta[pre], bound[pre]))) if pre.any() else 0.0
    horizon = float(t[~pre][0]) if (~pre).any() else math.inf
    return InequalityReport("gronwall_chain", t, zeta, bound, emp, ok, tolerance,
                            dict(fit, horizon=horizon))


def check_gronwall_chain(r, tolerance: float = 1e-3) -> InequalityReport:
    """Gronwall comparison on a run's energy rows, with ``phi = |d_t f|_2^2``."""
    if not r.rows:
        raise EmptyRun("run report has no energy rows")
    t = r.series("t")
    zeta = r.series("zeta")
    phi = None
    dg = r.diagnostics
    if "dtf2" in dg and len(dg["t"]) and np.any(dg["dtf2"] > 0):
        phi = np.interp(t, dg["t"], dg["dtf2"])
    return check_gronwall_series(t, zeta, phi, tolerance)
