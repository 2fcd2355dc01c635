"""Pseudo-spectral Galerkin integration of the coupled velocity/concentration system.

Velocity lives on the divergence-free Fourier modes with ``max_i |k_i| <= K``;
the concentration lives on all modes kept by the 2/3 rule. Both linear diffusion
operators (``nu0 * Laplacian`` for the velocity, ``Laplacian`` for the
concentration) are integrated exactly by their exponential multipliers
(integrating-factor / Lawson schemes); convection, the concentration flux and the
non-Newtonian remainder ``div(S - 2 nu0 Dv)`` are explicit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constitutive import StressModel
from .energies import (STRAIN_EXPONENT_3D, EnergyReport, check_q, default_q,
                       energy_report)
from .errors import BlowUpDetected, GridMismatch, InvalidParameter, NonFinite
from .torus import (GridSpec, ScalarField, VectorField, leray_hat, mollify,
                    random_solenoidal, sym_pairs)

log = logging.getLogger(__name__)

SCHEMES = ("imex_euler", "imex_rk2")


# -- forcing ------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroForcing:
    def spectral(self, grid: GridSpec, t: float):
        return None

    def dt_spectral(self, grid: GridSpec, t: float):
        return None

    def validate(self, grid: GridSpec, t_end: float):
        pass


@dataclass(frozen=True)
class SingleModeForcing:
    """``amplitude * sin(2 pi k.x)`` in velocity component ``component``."""

    k: tuple[int, ...]
    amplitude: float
    component: int = 0

    def _coeffs(self, grid: GridSpec):
        x = grid.coords()
        phase = 2.0 * np.pi * sum(kj * xj for kj, xj in zip(self.k, x))
        f = np.zeros((grid.dim,) + grid.shape)
        f[self.component] = self.amplitude * np.sin(phase)
        return grid.fft(f)

    def spectral(self, grid, t):
        return _cached_coeffs(self, grid)

    def dt_spectral(self, grid, t):
        return None

    def validate(self, grid, t_end):
        if len(self.k) != grid.dim:
            raise InvalidParameter(f"forcing wavevector {self.k} does not match dim {grid.dim}")
        if max(abs(int(kj)) for kj in self.k) > grid.K:
            raise InvalidParameter(f"forcing wavevector {self.k} is not resolved by cutoff K={grid.K}")
        if not 0 <= self.component < grid.dim:
            raise InvalidParameter(f"forcing component {self.component} out of range")
        if not math.isfinite(self.amplitude):
            raise InvalidParameter("forcing amplitude must be finite")


@dataclass(frozen=True)
class TimeRampForcing:
    """``(1 + rate * t) * base``."""

    base: SingleModeForcing
    rate: float

    def spectral(self, grid, t):
        return (1.0 + self.rate * t) * self.base.spectral(grid, t)

    def dt_spectral(self, grid, t):
        return self.rate * self.base.spectral(grid, t)

    def validate(self, grid, t_end):
        self.base.validate(grid, t_end)
        if not math.isfinite(self.rate):
            raise InvalidParameter("ramp rate must be finite")


@dataclass(frozen=True, eq=False)
class CustomForcing:
    """Sampled forcing series, linearly interpolated in time."""

    times: tuple[float, ...]
    samples: tuple[VectorField, ...]

    def _bracket(self, t):
        ts = self.times
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        return i, (t - ts[i]) / (ts[i + 1] - ts[i])

    def spectral(self, grid, t):
        if len(self.times) == 1:
            return self.samples[0].spectral
        i, a = self._bracket(t)
        return (1.0 - a) * self.samples[i].spectral + a * self.samples[i + 1].spectral

    def dt_spectral(self, grid, t):
        if len(self.times) == 1:
            return None
        i, _ = self._bracket(t)
        return (self.samples[i + 1].spectral - self.samples[i].spectral) / (self.times[i + 1] - self.times[i])

    def validate(self, grid, t_end):
        if not self.times or len(self.times) != len(self.samples):
            raise InvalidParameter("custom forcing needs one sample per time")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameter("custom forcing times must increase")
        if self.times[0] > 0 or (len(self.times) > 1 and self.times[-1] < t_end):
            raise InvalidParameter("custom forcing series must cover [0, t_end]")
        for f in self.samples:
            if (f.grid.dim, f.grid.n) != (grid.dim, grid.n) or not f.is_finite():
                raise InvalidParameter("custom forcing samples must be finite fields on the run grid")


_COEFF_CACHE: dict = {}


def _cached_coeffs(forcing: SingleModeForcing, grid: GridSpec):
    key = (forcing, grid)
    if key not in _COEFF_CACHE:
        _COEFF_CACHE[key] = forcing._coeffs(grid)
    return _COEFF_CACHE[key]


# -- configuration and state --------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    stress: StressModel
    dt: float
    t_end: float
    q: Optional[float] = None
    delta: float = 0.05
    forcing: object = field(default_factory=ZeroForcing)
    scheme: str = "imex_euler"
    blowup_threshold: float = 1e8
    strain_exponent: float = STRAIN_EXPONENT_3D
    cfl: float = 0.25
    max_substeps: int = 64
    analysis: bool = False

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", default_q(self.grid.dim))
        check_q(self.q, self.grid.dim)
        if not self.dt > 0 or not self.t_end > 0:
            raise InvalidParameter("dt and t_end must be positive")
        if self.delta < 0:
            raise InvalidParameter("mollification width must be >= 0")
        if self.scheme not in SCHEMES:
            raise InvalidParameter(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.strain_exponent != STRAIN_EXPONENT_3D and not self.analysis:
            raise InvalidParameter("the strain exponent is only configurable in analysis mode")
        self.stress.exponent.check_regime(self.analysis)
        self.forcing.validate(self.grid, self.t_end)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass(frozen=True, eq=False)
class _Eval:
    """Explicit tendencies and integrands at one (v, c, t)."""

    nv_hat: np.ndarray
    nc_hat: np.ndarray
    dissipation: float
    modular_gradv: float
    modular_stress: float
    power: float
    vmax: float


@dataclass(frozen=True, eq=False)
class State:
    """Spectral velocity (divergence-free, truncated, mean-zero) and concentration."""

    grid: GridSpec
    v_hat: np.ndarray
    c_hat: np.ndarray
    t: float
    prev_v_hat: Optional[np.ndarray] = None
    prev_c_hat: Optional[np.ndarray] = None
    prev_t: Optional[float] = None
    ev: Optional[_Eval] = None

    @property
    def v(self) -> VectorField:
        return VectorField.from_spectral(self.grid, self.v_hat)

    @property
    def c(self) -> ScalarField:
        return ScalarField.from_spectral(self.grid, self.c_hat)

    @property
    def mass(self) -> float:
        return float(self.c_hat[(0,) * self.grid.dim].real) / self.grid.n**self.grid.dim

    def divergence_ratio(self) -> float:
        """``max |k.v_hat| / max |k||v_hat|`` (0 for the zero field)."""
        k = self.grid.ik.imag
        kdv = np.abs(np.sum(k * self.v_hat, axis=0)).max()
        scale = (np.sqrt(np.sum(k * k, axis=0)) * np.sqrt(np.sum(np.abs(self.v_hat) ** 2, axis=0))).max()
        return float(kdv / scale) if scale > 0 else 0.0


def _check_grid(f, grid: GridSpec, name: str):
    if (f.grid.dim, f.grid.n) != (grid.dim, grid.n):
        raise GridMismatch(f"{name} lives on {f.grid}, run grid is {grid}")
    f.require_finite()


def evaluate(v_hat: np.ndarray, c_hat: np.ndarray, t: float, cfg: SolverConfig) -> _Eval:
    g = cfg.grid
    d = g.dim
    m = cfg.stress
    nu0 = m.nu0
    ik = g.ik
    v = g.ifft(v_hat)
    if not np.all(np.isfinite(v)):
        raise BlowUpDetected("non-finite velocity", t=t)
    G = g.ifft(ik[None, :] * v_hat[:, None])  # G[i, j] = d_j v_i
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    D2 = np.sum(D * D, axis=(0, 1))
    c = g.ifft(c_hat)
    p = m.exponent(c)
    w = (1.0 + D2) ** (0.5 * (p - 2.0))

    conv = np.einsum("j...,ij...->i...", v, G)
    pairs = sym_pairs(d)
    R_hat = g.fft(np.stack([2.0 * nu0 * (w - 1.0) * D[i, j] for i, j in pairs]))
    rhs = -g.fft(conv)
    for a, (i, j) in enumerate(pairs):
        rhs[i] += ik[j] * R_hat[a]
        if i != j:
            rhs[j] += ik[i] * R_hat[a]
    f_hat = cfg.forcing.spectral(g, t)
    if f_hat is not None:
        rhs = rhs + f_hat
    nv_hat = np.where(g.galerkin_mask, leray_hat(g, rhs), 0.0)

    flux_hat = np.where(g.dealias_mask, g.fft(c[None] * v), 0.0)
    nc_hat = -np.sum(ik * flux_hat, axis=0)

    Gmag = np.sqrt(np.sum(G * G, axis=(0, 1)))
    smag = 2.0 * nu0 * w * np.sqrt(D2)
    power = 0.0
    if f_hat is not None:
        power = float(np.sum(g.parseval_weights * np.real(f_hat * np.conj(v_hat))))
    return _Eval(
        nv_hat=nv_hat,
        nc_hat=nc_hat,
        dissipation=float(np.mean(2.0 * nu0 * w * D2)),
        modular_gradv=float(np.mean(Gmag**p)),
        modular_stress=float(np.mean(smag ** (p / (p - 1.0)))),
        power=power,
        vmax=float(np.sqrt(np.sum(v * v, axis=0)).max()),
    )


def _ensure_eval(s: State, cfg: SolverConfig) -> State:
    if s.ev is None:
        s = replace(s, ev=evaluate(s.v_hat, s.c_hat, s.t, cfg))
    return s


def init_state(v0: VectorField, c0: ScalarField, cfg: SolverConfig) -> State:
    """Project ``v0`` onto the Galerkin space and mollify ``c0``."""
    g = cfg.grid
    _check_grid(v0, g, "v0")
    _check_grid(c0, g, "c0")
    v_hat = np.where(g.galerkin_mask, leray_hat(g, v0.spectral), 0.0)
    c = mollify(c0, cfg.delta)
    c_hat = np.where(g.dealias_mask, c.spectral, 0.0)
    return _ensure_eval(State(g, v_hat, c_hat, 0.0), cfg)


def full_tendencies(s: State, cfg: SolverConfig):
    """Spectral ``dv/dt`` and ``dc/dt`` from the equations at the state's time."""
    s = _ensure_eval(s, cfg)
    g = cfg.grid
    return (s.ev.nv_hat - cfg.stress.nu0 * g.k2 * s.v_hat,
            s.ev.nc_hat - g.k2 * s.c_hat)


def velocity_tendency(s: State, cfg: SolverConfig, t: Optional[float] = None) -> VectorField:
    """Projected, truncated right-hand side ``P[-(v.grad)v + div S + f]``."""
    if t is not None and t != s.t:
        s = replace(s, t=t, ev=None)
    dv, _ = full_tendencies(s, cfg)
    return VectorField.from_spectral(cfg.grid, dv)


def time_derivatives(s: State, cfg: SolverConfig):
    """Backward differences, or the equations themselves at the initial state."""
    if s.prev_v_hat is None:
        return full_tendencies(s, cfg)
    h = s.t - s.prev_t
    return (s.v_hat - s.prev_v_hat) / h, (s.c_hat - s.prev_c_hat) / h


def _lawson(s: State, h: float, cfg: SolverConfig) -> State:
    g = cfg.grid
    Ev = np.exp(-h * cfg.stress.nu0 * g.k2)
    Ec = np.exp(-h * g.k2)
    ev = s.ev
    v1 = Ev * (s.v_hat + h * ev.nv_hat)
    c1 = Ec * (s.c_hat + h * ev.nc_hat)
    if cfg.scheme == "imex_rk2":
        ev1 = evaluate(v1, c1, s.t + h, cfg)
        v1 = Ev * (s.v_hat + 0.5 * h * ev.nv_hat) + 0.5 * h * ev1.nv_hat
        c1 = Ec * (s.c_hat + 0.5 * h * ev.nc_hat) + 0.5 * h * ev1.nc_hat
    return State(g, v1, c1, s.t + h, ev=evaluate(v1, c1, s.t + h, cfg))


def step(s: State, cfg: SolverConfig) -> State:
    """Advance by ``cfg.dt``, sub-stepping when the convective CFL limit demands it."""
    s = _ensure_eval(s, cfg)
    g = cfg.grid
    vmax = s.ev.vmax
    n_sub = 1
    if vmax > 0:
        n_sub = max(1, math.ceil(cfg.dt * vmax / (cfg.cfl * g.h) - 1e-12))
    if n_sub > cfg.max_substeps:
        raise BlowUpDetected(f"CFL limit needs {n_sub} substeps (|v|_inf={vmax:.3e})", t=s.t, state=s)
    h = cfg.dt / n_sub
    cur = s
    for _ in range(n_sub):
        cur = _lawson(cur, h, cfg)
    new = State(g, cur.v_hat, cur.c_hat, s.t + cfg.dt, s.v_hat, s.c_hat, s.t, cur.ev)
    if not math.isfinite(new.ev.vmax) or new.ev.vmax > cfg.blowup_threshold:
        raise BlowUpDetected(f"|v|_inf={new.ev.vmax:.3e} exceeds threshold", t=new.t, state=new)
    return new


def recover_pressure(s: State, cfg: SolverConfig, t: Optional[float] = None) -> ScalarField:
    """Mean-zero kinematic pressure from ``-Lap pi = div[(v.grad)v - div S - f]``."""
    g = cfg.grid
    t = s.t if t is None else t
    m = cfg.stress
    v = g.ifft(s.v_hat)
    G = g.ifft(g.ik[None, :] * s.v_hat[:, None])
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    c = g.ifft(s.c_hat)
    w = (1.0 + np.sum(D * D, axis=(0, 1))) ** (0.5 * (m.exponent(c) - 2.0))
    conv_hat = np.where(g.dealias_mask, g.fft(np.einsum("j...,ij...->i...", v, G)), 0.0)
    S_hat = np.where(g.dealias_mask, g.fft(2.0 * m.nu0 * w * D), 0.0)
    div_s = np.einsum("j...,ij...->i...", g.ik, S_hat)
    G_hat = conv_hat - div_s
    f_hat = cfg.forcing.spectral(g, t)
    if f_hat is not None:
        G_hat = G_hat - f_hat
    kappa = g.ik.imag
    kk = np.sum(kappa * kappa, axis=0)
    pi_hat = 1j * np.sum(kappa * G_hat, axis=0) / np.where(kk == 0, 1.0, kk)
    pi_hat[(0,) * g.dim] = 0.0
    return ScalarField.from_spectral(g, pi_hat)


# -- runs -----------------------------------------------------------------------

DIAGNOSTIC_COLUMNS = ("t", "kinetic", "dissipation", "power", "modular_gradv", "modular_stress",
                      "dtf2", "div_rel", "mass_c", "vmax", "dissipation_int", "work_int", "modular_int")


@dataclass
class RunReport:
    rows: list[EnergyReport]
    diagnostics: dict[str, np.ndarray]
    termination: str
    message: str = ""
    horizon: float = 0.0
    snapshots: list = field(default_factory=list)
    final_state: Optional[State] = None
    config: Optional[SolverConfig] = None

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def completed(self) -> bool:
        return self.termination == "Completed"

    def write_csv(self, energies: str | Path, diagnostics: str | Path | None = None) -> list[Path]:
        """Energy rows (and optionally per-step diagnostics) as CSV with full precision."""
        out = [_write_table(energies, EnergyReport.columns(), [r.as_row() for r in self.rows])]
        if diagnostics is not None:
            cols = list(DIAGNOSTIC_COLUMNS)
            out.append(_write_table(diagnostics, cols, np.column_stack([self.diagnostics[c] for c in cols])))
        return out

    @classmethod
    def read_csv(cls, energies: str | Path, diagnostics: str | Path | None = None,
                 termination: str = "Completed") -> "RunReport":
        data = _read_table(energies)
        n = len(data["t"]) if data else 0
        rows = [EnergyReport(**{k: float(data[k][i]) for k in EnergyReport.columns()}) for i in range(n)]
        diag = _read_table(diagnostics) if diagnostics is not None else {}
        horizon = rows[-1].t if rows else 0.0
        return cls(rows, diag, termination, horizon=horizon)


def _write_table(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    return path


def _read_table(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        body = np.array([[float(x) for x in row] for row in r], dtype=float).reshape(-1, len(header))
    return {h: body[:, i] for i, h in enumerate(header)}


def _energy_row(s: State, cfg: SolverConfig) -> EnergyReport:
    g = cfg.grid
    dv, dc = time_derivatives(s, cfg)
    return energy_report(s.t, s.v, VectorField.from_spectral(g, dv), s.c, ScalarField.from_spectral(g, dc),
                         cfg.stress.exponent, cfg.q, cfg.strain_exponent)


def _diag_sample(s: State, cfg: SolverConfig) -> dict:
    g = cfg.grid
    dtf = cfg.forcing.dt_spectral(g, s.t)
    return {
        "t": s.t,
        "kinetic": 0.5 * g.mean_square(s.v_hat),
        "dissipation": s.ev.dissipation,
        "power": s.ev.power,
        "modular_gradv": s.ev.modular_gradv,
        "modular_stress": s.ev.modular_stress,
        "dtf2": 0.0 if dtf is None else g.mean_square(dtf),
        "div_rel": s.divergence_ratio(),
        "mass_c": s.mass,
        "vmax": s.ev.vmax,
    }


def run(cfg: SolverConfig, v0: VectorField, c0: ScalarField, report_every: int = 10,
        snapshot_every: int = 0) -> RunReport:
    """Integrate to ``t_end`` or until blow-up is detected.

    Energy rows are recorded at t=0, every ``report_every`` steps and at the end;
    per-step diagnostics carry trapezoidal running integrals of the dissipation,
    the power input and the two modulars.
    """
    if report_every < 1:
        raise InvalidParameter("report_every must be >= 1")
    s = init_state(v0, c0, cfg)
    rows: list[EnergyReport] = []
    diag: list[dict] = []
    snaps = []
    termination, message = "Completed", ""

    def record_row(st):
        row = _energy_row(st, cfg)
        rows.append(row)
        if not math.isfinite(row.zeta) or row.zeta > cfg.blowup_threshold:
            raise BlowUpDetected(f"zeta={row.zeta:.3e} exceeds threshold", t=st.t, state=st)

    def record_diag(st):
        d = _diag_sample(st, cfg)
        if diag:
            prev = diag[-1]
            h = d["t"] - prev["t"]
            d["dissipation_int"] = prev["dissipation_int"] + 0.5 * h * (prev["dissipation"] + d["dissipation"])
            d["work_int"] = prev["work_int"] + 0.5 * h * (prev["power"] + d["power"])
            d["modular_int"] = prev["modular_int"] + 0.5 * h * (
                prev["modular_gradv"] + prev["modular_stress"] + d["modular_gradv"] + d["modular_stress"])
        else:
            d["dissipation_int"] = d["work_int"] = d["modular_int"] = 0.0
        diag.append(d)

    n = cfg.n_steps
    try:
        record_diag(s)
        record_row(s)
        if snapshot_every:
            snaps.append((s.t, s.v, s.c))
        for i in range(1, n + 1):
            s = step(s, cfg)
            record_diag(s)
            if i % report_every == 0 or i == n:
                record_row(s)
            if snapshot_every and (i % snapshot_every == 0 or i == n):
                snaps.append((s.t, s.v, s.c))
    except (BlowUpDetected, NonFinite, FloatingPointError) as exc:
        termination, message = "BlowUpDetected", str(exc)
        log.warning("run stopped at t=%.6g: %s", s.t, exc)
    series = {k: np.array([d[k] for d in diag]) for k in DIAGNOSTIC_COLUMNS}
    return RunReport(rows, series, termination, message, horizon=s.t, snapshots=snaps,
                     final_state=s, config=cfg)


@dataclass
class ContractionReport:
    """Separation of two runs started ``eps`` apart."""

    eps: float
    t: np.ndarray
    delta: np.ndarray
    difference: np.ndarray
    rate: float
    termination: str = "Completed"

    @property
    def scaled(self) -> np.ndarray:
        return self.delta / self.eps**2 if self.eps > 0 else np.zeros_like(self.delta)


def separation(s1: State, s2: State, cfg: SolverConfig) -> tuple[float, float]:
    """``|v1-v2|_2^2 + |grad(c1-c2)|_2^2`` and the weighted strain-difference integral."""
    g = cfg.grid
    dv = s1.v_hat - s2.v_hat
    dc = s1.c_hat - s2.c_hat
    delta = g.mean_square(dv) + float(np.sum(g.parseval_weights * g.k2 * np.abs(dc) ** 2))
    D1 = _strain(s1.v_hat, g)
    D2 = _strain(s2.v_hat, g)
    p = cfg.stress.exponent(g.ifft(s1.c_hat))
    n1 = np.sum(D1 * D1, axis=(0, 1))
    n2 = np.sum(D2 * D2, axis=(0, 1))
    dd = np.sum((D1 - D2) ** 2, axis=(0, 1))
    diff = float(np.mean((1.0 + n1 + n2) ** (0.5 * (p - 2.0)) * dd))
    return delta, diff


def _strain(v_hat, g):
    G = g.ifft(g.ik[None, :] * v_hat[:, None])
    return 0.5 * (G + np.swapaxes(G, 0, 1))


def twin_run(cfg: SolverConfig, v0: VectorField, c0: ScalarField, eps: float,
             perturbation: Optional[VectorField] = None, seed: int = 0,
             report_every: int = 1) -> ContractionReport:
    """Evolve from ``v0`` and ``v0 + eps*w`` with the same concentration and compare."""
    if eps < 0:
        raise InvalidParameter("eps must be nonnegative")
    g = cfg.grid
    if perturbation is None:
        perturbation = random_solenoidal(g, np.random.default_rng(seed), kmax=min(g.K, 4))
    w = perturbation
    _check_grid(w, g, "perturbation")
    w_hat = w.spectral
    if np.sqrt(g.mean_square(leray_hat(g, w_hat) - w_hat)) > 1e-10:
        raise InvalidParameter("perturbation must be divergence-free and mean-zero")
    if abs(np.sqrt(g.mean_square(w_hat)) - 1.0) > 1e-8:
        raise InvalidParameter("perturbation must have unit L2 norm")
    s1 = init_state(v0, c0, cfg)
    s2 = init_state(VectorField(g, v0.values + eps * w.values), c0, cfg)
    ts, deltas, diffs = [], [], []

    def record(a, b):
        dl, df = separation(a, b, cfg)
        ts.append(a.t)
        deltas.append(dl)
        diffs.append(df)

    record(s1, s2)
    termination = "Completed"
    n = cfg.n_steps
    try:
        for i in range(1, n + 1):
            s1 = step(s1, cfg)
            s2 = step(s2, cfg)
            if i % report_every == 0 or i == n:
                record(s1, s2)
    except BlowUpDetected as exc:
        termination = "BlowUpDetected"
        log.warning("twin run stopped: %s", exc)
    t = np.array(ts)
    delta = np.array(deltas)
    rate = 0.0
    if delta[0] > 0 and len(t) > 1:
        rate = float(np.max(np.log(delta[1:] / delta[0]) / t[1:]))
    return ContractionReport(eps, t, delta, np.array(diffs), rate, termination)


def cutoff_refinement(cfg: SolverConfig, v0: VectorField, c0: ScalarField,
                      cutoffs: Sequence[int]) -> np.ndarray:
    """Sup-over-time L2 velocity distance between consecutive cutoffs.

    All runs share the grid size and data of ``cfg``; entry ``i`` compares
    ``cutoffs[i]`` with ``cutoffs[i + 1]``.
    """
    if len(cutoffs) < 2:
        raise InvalidParameter("need at least two cutoffs")
    g = cfg.grid
    cfgs = [replace(cfg, grid=GridSpec(g.dim, g.n, int(K))) for K in cutoffs]
    states = [init_state(v0, c0, c) for c in cfgs]

    def dists():
        return np.array([math.sqrt(g.mean_square(a.v_hat - b.v_hat)) for a, b in zip(states, states[1:])])

    sup = dists()
    for _ in range(cfg.n_steps):
        states = [step(s, c) for s, c in zip(states, cfgs)]
        sup = np.maximum(sup, dists())
    return sup
