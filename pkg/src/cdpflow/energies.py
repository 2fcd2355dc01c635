"""Diagnostic functionals of a velocity/concentration pair.

``I_p`` and ``J_p`` weight second spatial and first temporal derivatives of the
strain rate by ``(1 + |Dv|^2)**((p(c) - 2)/2)``. The Gronwall functional
``zeta`` adds the shifted strain modular (exponent 12/5 in 3D; ``|grad v|_2^2``
in 2D), ``|dv/dt|_2^2``, ``|grad c|_q^q`` and ``|dc/dt|_q^q``.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .constitutive import ExponentFn
from .errors import BlowUpBeforeT, GridMismatch, InvalidParameter
from .torus import (ScalarField, SymTensorField, VectorField, lp_norm,
                    spectral_gradient, sym_gradient)

STRAIN_EXPONENT_3D = 12.0 / 5.0


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    ip: float
    jp: float
    dbar_s: float
    dtv2: float
    gradc_q: float
    dtc_q: float
    zeta: float
    modular_gradv: float
    mass_c: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> tuple[float, ...]:
        return astuple(self)


def check_q(q: float, dim: int) -> float:
    """Concentration exponent: ``q >= 4`` in 3D, ``q > 2`` in 2D."""
    if dim == 3 and not q >= 4:
        raise InvalidParameter(f"3D monitors need q >= 4, got {q}")
    if dim == 2 and not q > 2:
        raise InvalidParameter(f"2D monitors need q > 2, got {q}")
    return q


def default_q(dim: int) -> float:
    return 4.0 if dim == 3 else 3.0


def _same_grid(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise GridMismatch(f"fields live on different grids: {g} vs {f.grid}")
    return g


def d_bar(D: SymTensorField) -> ScalarField:
    """Shifted strain magnitude ``(1 + |D|^2)**(1/2)``."""
    return ScalarField(D.grid, np.sqrt(1.0 + D.magnitude() ** 2))


def _weight(exponent: ExponentFn, c: ScalarField, D: SymTensorField) -> np.ndarray:
    p = exponent(c.values)
    return (1.0 + D.magnitude() ** 2) ** ((p - 2.0) / 2.0)


def strain_gradient_sq(D: SymTensorField) -> np.ndarray:
    """Pointwise ``|grad D|^2`` (Frobenius over all three indices)."""
    g = D.grid
    dh = D.spectral
    out = np.zeros(g.shape)
    for a, (i, j) in enumerate((i, j) for i in range(g.dim) for j in range(i, g.dim)):
        mult = 1.0 if i == j else 2.0
        for k in range(g.dim):
            out += mult * g.ifft(g.ik[k] * dh[a]) ** 2
    return out


def energy_ip(c: ScalarField, v: VectorField, exponent: ExponentFn) -> float:
    """``I_p = int (Dbar v)^(p(c)-2) |grad Dv|^2 dx``."""
    _same_grid(c, v)
    D = sym_gradient(v)
    return float(np.mean(_weight(exponent, c, D) * strain_gradient_sq(D)))


def energy_jp(c: ScalarField, v: VectorField, v_dot: VectorField, exponent: ExponentFn) -> float:
    """``J_p = int (Dbar v)^(p(c)-2) |D dv/dt|^2 dx``."""
    _same_grid(c, v, v_dot)
    D = sym_gradient(v)
    Dt = sym_gradient(v_dot)
    return float(np.mean(_weight(exponent, c, D) * Dt.magnitude() ** 2))


def strain_term(v: VectorField, s: float = STRAIN_EXPONENT_3D) -> float:
    """``|Dbar v|_s^s`` in 3D, ``|grad v|_2^2`` in 2D."""
    if v.grid.dim == 2:
        return lp_norm(spectral_gradient(v), 2) ** 2
    return float(np.mean(d_bar(sym_gradient(v)).values ** s))


def gronwall_zeta(v: VectorField, v_dot: VectorField, c: ScalarField, c_dot: ScalarField,
                  q: float, s: float = STRAIN_EXPONENT_3D) -> float:
    """Four-term Gronwall functional recomputed from raw fields."""
    g = _same_grid(v, v_dot, c, c_dot)
    check_q(q, g.dim)
    return (strain_term(v, s) + lp_norm(v_dot, 2) ** 2
            + lp_norm(spectral_gradient(c), q) ** q + lp_norm(c_dot, q) ** q)


def energy_report(t: float, v: VectorField, v_dot: VectorField, c: ScalarField, c_dot: ScalarField,
                  exponent: ExponentFn, q: float, s: float = STRAIN_EXPONENT_3D) -> EnergyReport:
    g = _same_grid(v, v_dot, c, c_dot)
    check_q(q, g.dim)
    D = sym_gradient(v)
    w = _weight(exponent, c, D)
    ip = float(np.mean(w * strain_gradient_sq(D)))
    jp = float(np.mean(w * sym_gradient(v_dot).magnitude() ** 2))
    grad_v = spectral_gradient(v)
    if g.dim == 2:
        dbar_s = lp_norm(grad_v, 2) ** 2
    else:
        dbar_s = float(np.mean((1.0 + D.magnitude() ** 2) ** (s / 2.0)))
    dtv2 = lp_norm(v_dot, 2) ** 2
    gradc_q = lp_norm(spectral_gradient(c), q) ** q
    dtc_q = lp_norm(c_dot, q) ** q
    return EnergyReport(
        t=float(t),
        kinetic=0.5 * lp_norm(v, 2) ** 2,
        ip=ip,
        jp=jp,
        dbar_s=dbar_s,
        dtv2=dtv2,
        gradc_q=gradc_q,
        dtc_q=dtc_q,
        zeta=dbar_s + dtv2 + gradc_q + dtc_q,
        modular_gradv=float(np.mean(grad_v.magnitude() ** exponent(c.values))),
        mass_c=float(np.mean(c.values)),
    )


@dataclass(frozen=True)
class GronwallParams:
    """Data of the local Gronwall comparison ``zeta' <= phi + c0 zeta^(1+alpha)``.

    ``phi`` is sampled at ``phi_t``; empty series mean ``phi = 0``.
    """

    zeta0: float
    alpha: float
    c0: float
    phi_t: tuple[float, ...] = ()
    phi: tuple[float, ...] = ()

    def __post_init__(self):
        if self.zeta0 < 0 or not self.alpha > 0 or not self.c0 > 0:
            raise InvalidParameter("need zeta0 >= 0, alpha > 0 and c0 > 0")
        if len(self.phi_t) != len(self.phi):
            raise InvalidParameter("phi samples and times differ in length")
        if any(x < 0 for x in self.phi):
            raise InvalidParameter("phi must be nonnegative")

    def big_phi(self, t: float) -> float:
        """``zeta0 + int_0^t phi`` by the trapezoidal rule on the stored samples."""
        if not self.phi:
            return self.zeta0
        ts = np.asarray(self.phi_t, dtype=float)
        ph = np.asarray(self.phi, dtype=float)
        if t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise InvalidParameter(f"phi series ends at {ts[-1]}, before t={t}")
        inside = ts < t
        tt = np.concatenate([ts[inside], [t]])
        pp = np.concatenate([ph[inside], [np.interp(t, ts, ph)]])
        if tt[0] > 0:
            tt = np.concatenate([[0.0], tt])
            pp = np.concatenate([[ph[0]], pp])
        return self.zeta0 + float(np.trapezoid(pp, tt)) if len(tt) > 1 else self.zeta0

    def bracket(self, t: float) -> float:
        Phi = self.big_phi(t)
        return 1.0 - self.alpha * self.c0 * Phi**self.alpha * t

    def horizon(self) -> float:
        """First zero of the bracket when ``phi = 0``; ``inf`` for ``zeta0 = 0``."""
        if self.zeta0 == 0:
            return math.inf
        return 1.0 / (self.alpha * self.c0 * self.zeta0**self.alpha)


def gronwall_bound(g: GronwallParams, t: float) -> float:
    """``Phi(t) (1 - alpha c0 Phi(t)^alpha t)^(-1/alpha)``; raises past the bracket zero."""
    if t < 0:
        raise InvalidParameter("time must be nonnegative")
    Phi = g.big_phi(t)
    br = 1.0 - g.alpha * g.c0 * Phi**g.alpha * t
    if br <= 0:
        raise BlowUpBeforeT(t, br)
    return Phi + Phi * (br ** (-1.0 / g.alpha) - 1.0)
