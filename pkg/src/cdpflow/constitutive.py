"""Concentration-dependent power-law stress ``S(c, D) = 2 nu(c, |D|) D``.

The viscosity is ``nu0 * (1 + |D|^2)**((p(c) - 2)/2)`` with a Lipschitz exponent
``p`` clamped into ``[p_minus, p_plus]``. Pointwise functions take ``c`` with shape
``(...)`` and ``D`` with shape ``(..., d, d)`` and broadcast over the leading axes;
``|D|`` is always the Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import expit

from .errors import (DegenerateDirection, DegeneratePair, InvalidParameter,
                     NonDifferentiable)
from .torus import ScalarField, SymTensorField, sym_to_full, full_to_sym


@dataclass(frozen=True)
class Constant:
    p: float

    def raw(self, c):
        return np.full_like(np.asarray(c, dtype=float), self.p)

    def deriv(self, c):
        return np.zeros_like(np.asarray(c, dtype=float))


@dataclass(frozen=True)
class Logistic:
    """Decreasing logistic: ``p_hi`` for ``c -> -inf``, ``p_lo`` for ``c -> +inf``."""

    p_lo: float
    p_hi: float
    c_mid: float
    slope: float

    def _g(self, c):
        return expit(-self.slope * (np.asarray(c, dtype=float) - self.c_mid))

    def raw(self, c):
        return self.p_lo + (self.p_hi - self.p_lo) * self._g(c)

    def deriv(self, c):
        g = self._g(c)
        return -(self.p_hi - self.p_lo) * self.slope * g * (1.0 - g)


@dataclass(frozen=True)
class Affine:
    a: float
    b: float

    def raw(self, c):
        return self.a + self.b * np.asarray(c, dtype=float)

    def deriv(self, c):
        return np.full_like(np.asarray(c, dtype=float), self.b)


Shape = Union[Constant, Logistic, Affine]


@dataclass(frozen=True)
class ExponentFn:
    """Lipschitz power-law index ``c -> p(c)`` with bounds and Lipschitz constant."""

    p_minus: float
    p_plus: float
    lipschitz_bound: float
    shape: Shape

    def __post_init__(self):
        if not (1.0 < self.p_minus <= self.p_plus):
            raise InvalidParameter(f"need 1 < p_minus <= p_plus, got [{self.p_minus}, {self.p_plus}]")
        if self.lipschitz_bound < 0:
            raise InvalidParameter("Lipschitz bound must be nonnegative")

    @classmethod
    def constant(cls, p: float) -> "ExponentFn":
        return cls(p, p, 0.0, Constant(p))

    @classmethod
    def logistic(cls, p_lo: float, p_hi: float, c_mid: float = 0.15, slope: float = 40.0) -> "ExponentFn":
        if p_hi < p_lo or slope < 0:
            raise InvalidParameter("logistic exponent needs p_lo <= p_hi and slope >= 0")
        return cls(p_lo, p_hi, 0.25 * (p_hi - p_lo) * slope, Logistic(p_lo, p_hi, c_mid, slope))

    @classmethod
    def affine(cls, a: float, b: float, p_minus: float, p_plus: float) -> "ExponentFn":
        return cls(p_minus, p_plus, abs(b), Affine(a, b))

    def check_regime(self, analysis: bool = False):
        """Solver mode requires the shear-thinning range ``p_plus <= 2``."""
        if self.p_plus > 2.0 and not analysis:
            raise InvalidParameter(f"p_plus={self.p_plus} > 2 is only allowed in analysis mode")
        return self

    def __call__(self, c):
        return np.clip(self.shape.raw(c), self.p_minus, self.p_plus)

    def derivative(self, c, strict: bool = True):
        """``p'(c)``; raises :class:`NonDifferentiable` where the clamp is active.

        With ``strict=False`` the derivative is returned as 0 on the clamped set.
        """
        raw = self.shape.raw(c)
        d = self.shape.deriv(c)
        if isinstance(self.shape, Affine) and self.shape.b != 0:
            clamped = (raw <= self.p_minus) | (raw >= self.p_plus)
        else:
            clamped = (raw < self.p_minus) | (raw > self.p_plus)
        if np.any(clamped):
            if strict:
                raise NonDifferentiable("exponent is clamped at the requested concentration")
            d = np.where(clamped, 0.0, d)
        return d


def p_eval(exponent: ExponentFn, c):
    """Evaluate ``p`` on reals, arrays or a :class:`ScalarField`."""
    if isinstance(c, ScalarField):
        return ScalarField(c.grid, exponent(c.values))
    out = exponent(c)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StressModel:
    nu0: float
    exponent: ExponentFn

    def __post_init__(self):
        if not self.nu0 > 0:
            raise InvalidParameter(f"nu0 must be positive, got {self.nu0}")


@dataclass(frozen=True)
class StressConstants:
    K1: float
    K2: float
    K3: float
    K4: float


class Gap(NamedTuple):
    """Numerator/denominator pair of a structural inequality sample."""

    lhs: float
    weight: float

    @property
    def ratio(self) -> float:
        if np.any(np.asarray(self.weight) == 0):
            raise DegeneratePair("zero weight: the sample carries no information")
        return self.lhs / self.weight


def frob2(D):
    return np.sum(np.asarray(D) ** 2, axis=(-2, -1))


def _shifted(m: StressModel, c, D):
    p = m.exponent(c)
    return p, (1.0 + frob2(D)) ** ((p - 2.0) / 2.0)


def viscosity(m: StressModel, c, D):
    _, w = _shifted(m, c, D)
    return m.nu0 * w


def stress(m: StressModel, c, D):
    """``S = 2 nu D``; accepts matrices or a (ScalarField, SymTensorField) pair."""
    if isinstance(D, SymTensorField):
        full = np.moveaxis(D.full(), (0, 1), (-2, -1))
        cv = c.values if isinstance(c, ScalarField) else c
        S = stress(m, cv, full)
        return SymTensorField(D.grid, full_to_sym(np.moveaxis(S, (-2, -1), (0, 1)), D.grid.dim))
    D = np.asarray(D, dtype=float)
    return 2.0 * viscosity(m, c, D)[..., None, None] * D


def sym_identity(d: int) -> np.ndarray:
    eye = np.eye(d)
    return 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))


def dstress_dD(m: StressModel, c, D):
    """Rank-4 Jacobian ``dS_ij / dD_kl`` restricted to symmetric arguments."""
    D = np.asarray(D, dtype=float)
    d = D.shape[-1]
    p, w = _shifted(m, c, D)
    a = (p - 2.0) / (1.0 + frob2(D))
    outer = np.einsum("...ij,...kl->...ijkl", D, D)
    bracket = sym_identity(d) + np.asarray(a)[..., None, None, None, None] * outer
    return 2.0 * m.nu0 * np.asarray(w)[..., None, None, None, None] * bracket


def dstress_dc(m: StressModel, c, D, strict: bool = True):
    """``dS/dc = nu0 p'(c) (1+|D|^2)^((p-2)/2) log(1+|D|^2) D``."""
    D = np.asarray(D, dtype=float)
    dp = m.exponent.derivative(c, strict=strict)
    _, w = _shifted(m, c, D)
    scale = m.nu0 * dp * w * np.log1p(frob2(D))
    return np.asarray(scale)[..., None, None] * D


def monotonicity_gap(m: StressModel, c, D1, D2) -> Gap:
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    diff = D1 - D2
    lhs = np.sum((stress(m, c, D1) - stress(m, c, D2)) * diff, axis=(-2, -1))
    p = m.exponent(c)
    weight = (1.0 + frob2(D1) + frob2(D2)) ** ((p - 2.0) / 2.0) * frob2(diff)
    return Gap(lhs, weight)


def coercivity_gap(m: StressModel, c, D, B) -> Gap:
    B = np.asarray(B, dtype=float)
    if np.any(frob2(B) == 0):
        raise DegenerateDirection("coercivity direction B must be nonzero")
    J = dstress_dD(m, c, D)
    lhs = np.einsum("...ijkl,...ij,...kl->...", J, B, B)
    _, w = _shifted(m, c, D)
    return Gap(lhs, w * frob2(B))


def sym_from_upper(sym: np.ndarray, d: int) -> np.ndarray:
    """Convenience: upper-triangle storage (components first) to full matrices (components last)."""
    return np.moveaxis(sym_to_full(sym, d), (0, 1), (-2, -1))
