"""Periodic fields on the unit torus [0, 1]^d and their spectral calculus.

Fields carry physical samples on a uniform ``n**d`` grid together with a lazily
computed real-FFT representation. All operators are spectral: derivatives are
exact for the trigonometric interpolant, the Leray projector is diagonal in
wavenumber space and truncation is a sharp cut on ``max_i |k_i|``.

Wavenumbers are integers; a derivative along axis ``j`` multiplies by
``2*pi*i*k_j`` with the Nyquist mode zeroed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import ClassVar, Iterable

import numpy as np

from .errors import InvalidGrid, InvalidParameter, NonFinite

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0, 1]^dim with Galerkin cutoff ``K``."""

    dim: int
    n: int
    K: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidGrid(f"dim must be 2 or 3, got {self.dim}")
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise InvalidGrid(f"n must be a power of two >= 8, got {n}")
        if not 1 <= self.K <= n // 3:
            raise InvalidGrid(f"cutoff K={self.K} outside [1, {n // 3}] for n={n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers, shape ``(dim, *spectral_shape)``."""
        n = self.n
        freqs = [np.fft.fftfreq(n, 1.0 / n)] * (self.dim - 1) + [np.fft.rfftfreq(n, 1.0 / n)]
        k = np.stack(np.meshgrid(*freqs, indexing="ij"))
        k.flags.writeable = False
        return k

    @cached_property
    def ik(self) -> np.ndarray:
        """Derivative multipliers ``2*pi*i*k`` with the Nyquist mode removed."""
        k = self.wavenumbers.copy()
        k[np.abs(k) == self.n // 2] = 0.0
        out = 1j * TWO_PI * k
        out.flags.writeable = False
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """Symbol of ``-Laplacian``: ``4*pi**2*|k|**2``."""
        out = TWO_PI**2 * np.sum(self.wavenumbers**2, axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def kinf(self) -> np.ndarray:
        return np.max(np.abs(self.wavenumbers), axis=0)

    def cutoff_mask(self, K: int) -> np.ndarray:
        return self.kinf <= K

    @cached_property
    def galerkin_mask(self) -> np.ndarray:
        return self.cutoff_mask(self.K)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.cutoff_mask(self.n // 3)

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Weights turning ``sum(w*|f_hat|**2)`` into the grid mean of ``|f|**2``."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w / float(self.n**self.dim) ** 2

    def coords(self) -> np.ndarray:
        """Grid point coordinates, shape ``(dim, *shape)``."""
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(values, axes=self.axes)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(coeffs, s=self.shape, axes=self.axes)

    def mean_square(self, coeffs: np.ndarray) -> float:
        """Grid mean of ``|f|**2`` summed over components, from spectral coefficients."""
        return float(np.sum(self.parseval_weights * np.abs(coeffs) ** 2))


def make_grid(dim: int, n: int, K: int) -> GridSpec:
    return GridSpec(int(dim), int(n), int(K))


def sym_pairs(dim: int) -> list[tuple[int, int]]:
    """Upper-triangle index pairs in storage order."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def sym_to_full(sym: np.ndarray, dim: int) -> np.ndarray:
    full = np.empty((dim, dim) + sym.shape[1:], dtype=sym.dtype)
    for a, (i, j) in enumerate(sym_pairs(dim)):
        full[i, j] = sym[a]
        full[j, i] = sym[a]
    return full


def full_to_sym(full: np.ndarray, dim: int) -> np.ndarray:
    return np.stack([0.5 * (full[i, j] + full[j, i]) for i, j in sym_pairs(dim)])


@dataclass(frozen=True, eq=False)
class Field:
    """Real periodic field; ``values`` has shape ``(*components, *grid.shape)``."""

    grid: GridSpec
    values: np.ndarray
    kind: ClassVar[str] = "field"

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape[vals.ndim - self.grid.dim:] != self.grid.shape:
            raise InvalidGrid(f"sample shape {vals.shape} does not end in grid shape {self.grid.shape}")
        expected = self.expected_components(self.grid.dim, vals.ndim - self.grid.dim)
        if vals.shape[: vals.ndim - self.grid.dim] != expected:
            raise InvalidGrid(f"{type(self).__name__} expects components {expected}, got {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def expected_components(cls, dim, ncomp_axes):
        raise NotImplementedError

    @property
    def components(self) -> tuple[int, ...]:
        return self.values.shape[: self.values.ndim - self.grid.dim]

    @cached_property
    def spectral(self) -> np.ndarray:
        out = self.grid.fft(self.values)
        out.flags.writeable = False
        return out

    @classmethod
    def from_spectral(cls, grid: GridSpec, coeffs: np.ndarray):
        return cls(grid, grid.ifft(coeffs))

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean/Frobenius magnitude."""
        v = self.values
        if not self.components:
            return np.abs(v)
        flat = v.reshape((-1,) + self.grid.shape)
        return np.sqrt(np.sum(flat**2, axis=0))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def require_finite(self):
        if not self.is_finite():
            raise NonFinite(f"{type(self).__name__} contains non-finite samples")
        return self

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=self.grid.axes)

    def _like(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        if isinstance(other, Field):
            return self._like(self.values + other.values)
        return self._like(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            return self._like(self.values - other.values)
        return self._like(self.values - other)

    def __mul__(self, scalar):
        return self._like(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)


class ScalarField(Field):
    kind = "scalar"

    @classmethod
    def expected_components(cls, dim, ncomp_axes):
        return ()


class VectorField(Field):
    kind = "vector"

    @classmethod
    def expected_components(cls, dim, ncomp_axes):
        return (dim,)


class TensorField(Field):
    """Full (not necessarily symmetric) tensor of rank >= 2; last index is the newest derivative."""

    kind = "tensor"

    @classmethod
    def expected_components(cls, dim, ncomp_axes):
        return (dim,) * max(ncomp_axes, 2)

    @property
    def rank(self) -> int:
        return len(self.components)


class SymTensorField(Field):
    """Symmetric rank-2 tensor stored as its upper triangle (``dim*(dim+1)/2`` components)."""

    kind = "sym"

    @classmethod
    def expected_components(cls, dim, ncomp_axes):
        return (dim * (dim + 1) // 2,)

    @classmethod
    def from_full(cls, grid: GridSpec, full: np.ndarray):
        return cls(grid, full_to_sym(np.asarray(full), grid.dim))

    def full(self) -> np.ndarray:
        return sym_to_full(self.values, self.grid.dim)

    def magnitude(self) -> np.ndarray:
        w = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(self.grid.dim)])
        return np.sqrt(np.tensordot(w, self.values**2, axes=1))


def _field_class(ncomp_axes: int):
    return {0: ScalarField, 1: VectorField}.get(ncomp_axes, TensorField)


def _as_full(f: Field) -> np.ndarray:
    return f.full() if isinstance(f, SymTensorField) else f.values


def _finite(f: Field):
    return f.require_finite()


def spectral_gradient(f: Field) -> Field:
    """Gradient raising the rank by one; the derivative index is appended last."""
    _finite(f)
    g = f.grid
    coeffs = g.fft(_as_full(f)) if isinstance(f, SymTensorField) else f.spectral
    grad_hat = np.stack([g.ik[j] * coeffs for j in range(g.dim)], axis=coeffs.ndim - g.dim)
    ncomp = grad_hat.ndim - g.dim
    return _field_class(ncomp)(g, g.ifft(grad_hat))


def sym_gradient(v: VectorField) -> SymTensorField:
    """``D v = (grad v + grad v^T) / 2`` stored as upper triangle."""
    _finite(v)
    g = v.grid
    vh = v.spectral
    comps = []
    for i, j in sym_pairs(g.dim):
        comps.append(0.5 * (g.ik[j] * vh[i] + g.ik[i] * vh[j]))
    return SymTensorField(g, g.ifft(np.stack(comps)))


def divergence(f: Field) -> Field:
    """Contract the last component index with the derivative."""
    _finite(f)
    g = f.grid
    if isinstance(f, ScalarField):
        raise InvalidParameter("divergence of a scalar field is undefined")
    coeffs = g.fft(_as_full(f)) if isinstance(f, SymTensorField) else f.spectral
    div_hat = _div_hat(g, coeffs)
    ncomp = div_hat.ndim - g.dim
    return _field_class(ncomp)(g, g.ifft(div_hat))


def _div_hat(g: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    last = coeffs.ndim - g.dim - 1
    moved = np.moveaxis(coeffs, last, 0)
    return sum(g.ik[j] * moved[j] for j in range(g.dim))


def leray_hat(g: GridSpec, vh: np.ndarray) -> np.ndarray:
    """Spectral Leray projection ``v - k (k.v)/|k|^2`` with the mean mode removed."""
    k = g.ik.imag
    kk = np.sum(k * k, axis=0)
    safe = np.where(kk == 0.0, 1.0, kk)
    kdotv = np.sum(k * vh, axis=0)
    out = vh - k * (kdotv / safe)
    out[(slice(None),) + (0,) * g.dim] = 0.0
    return out


def leray_project(v: VectorField) -> VectorField:
    _finite(v)
    return VectorField.from_spectral(v.grid, leray_hat(v.grid, v.spectral))


def truncate(f: Field, K: int) -> Field:
    """Zero every coefficient with ``max_i |k_i| > K``."""
    g = f.grid
    if K > g.K or K < 0:
        raise InvalidGrid(f"truncation radius {K} exceeds grid cutoff {g.K}")
    return type(f).from_spectral(g, np.where(g.cutoff_mask(K), f.spectral, 0.0))


def gaussian_multiplier(g: GridSpec, delta: float) -> np.ndarray:
    return np.exp(-0.5 * delta**2 * g.k2)


def mollify(c: ScalarField, delta: float) -> ScalarField:
    """Periodic Gaussian mollification; ``delta = 0`` returns ``c`` itself."""
    if delta < 0:
        raise InvalidParameter(f"mollification width must be >= 0, got {delta}")
    if delta == 0:
        return c
    g = c.grid
    out = c.spectral * gaussian_multiplier(g, delta)
    out[(0,) * g.dim] = c.spectral[(0,) * g.dim]
    return ScalarField.from_spectral(g, out)


def lp_norm(f: Field, r: float) -> float:
    if r < 1:
        raise InvalidParameter(f"Lebesgue exponent must be >= 1, got {r}")
    mag = f.magnitude()
    if np.isinf(r):
        return float(mag.max())
    return float(np.mean(mag**r) ** (1.0 / r))


def modular(f: Field, p_field: ScalarField | np.ndarray | float) -> float:
    """Grid quadrature of ``|f(x)|**p(x)``."""
    p = p_field.values if isinstance(p_field, Field) else np.asarray(p_field, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p < 1):
        raise InvalidParameter("variable exponent must take values in [1, inf)")
    return float(np.mean(f.magnitude() ** p))


def sobolev_seminorm(f: Field, k: int, r: float) -> float:
    """L^r norm of the order-``k`` derivative tensor."""
    if k not in (0, 1, 2):
        raise InvalidParameter(f"derivative order must be 0, 1 or 2, got {k}")
    if r < 1:
        raise InvalidParameter(f"Lebesgue exponent must be >= 1, got {r}")
    for _ in range(k):
        f = spectral_gradient(f)
    return lp_norm(f, r)


def interpolate(f: Field, grid: GridSpec) -> Field:
    """Spectral (zero-padding or truncating) resampling of ``f`` onto ``grid``."""
    if grid.dim != f.grid.dim:
        raise InvalidGrid("cannot resample across dimensions")
    n, m = f.grid.n, grid.n
    comp = f.values.shape[: f.values.ndim - f.grid.dim]
    axes = f.grid.axes
    F = np.fft.fftn(f.values, axes=axes)
    out = np.zeros(comp + grid.shape, dtype=complex)
    keep = min(n, m) // 2
    idx = np.r_[0:keep, -keep + 1:0]
    src = np.ix_(*([idx] * f.grid.dim))
    dst = src
    out[(Ellipsis,) + dst] = F[(Ellipsis,) + src]
    vals = np.fft.ifftn(out, axes=axes).real * (m / n) ** f.grid.dim
    return type(f)(grid, vals)


def spectral_tail(f: Field, K: int) -> float:
    """Largest coefficient magnitude above ``K`` relative to the largest overall."""
    c = np.abs(f.spectral)
    peak = c.max()
    if peak == 0:
        return 0.0
    return float(np.max(np.where(f.grid.kinf > K, c, 0.0)) / peak)


def random_solenoidal(grid: GridSpec, rng: np.random.Generator, kmax: int | None = None,
                      slope: float = 2.0) -> VectorField:
    """Smooth random divergence-free, mean-zero field with unit L2 norm."""
    kmax = grid.K if kmax is None else kmax
    shape = (grid.dim,) + grid.spectral_shape
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = np.sqrt(np.sum(grid.wavenumbers**2, axis=0))
    coeffs *= np.where(grid.cutoff_mask(kmax), (1.0 + kk) ** (-slope - 1.0), 0.0)
    # round trip through physical space enforces conjugate symmetry of the coefficients
    vh = VectorField(grid, grid.ifft(coeffs)).spectral
    vh = np.where(grid.cutoff_mask(kmax), leray_hat(grid, vh), 0.0)
    norm = np.sqrt(grid.mean_square(vh))
    return VectorField.from_spectral(grid, vh / norm)


def random_scalar(grid: GridSpec, rng: np.random.Generator, kmax: int = 4,
                  slope: float = 2.0) -> ScalarField:
    """Smooth random mean-zero scalar field with unit L2 norm."""
    coeffs = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    kk = np.sqrt(np.sum(grid.wavenumbers**2, axis=0))
    coeffs *= np.where(grid.cutoff_mask(kmax), (1.0 + kk) ** (-slope), 0.0)
    coeffs[(0,) * grid.dim] = 0.0
    f = ScalarField(grid, grid.ifft(coeffs))
    return f * (1.0 / lp_norm(f, 2))


# -- snapshot and CSV interfaces --------------------------------------------

TORF_MAGIC = b"TORF"
TORF_VERSION = 1
_RANK_CODES = {ScalarField: 0, VectorField: 1, SymTensorField: 2}
_HEADER = struct.Struct("<4sIIII12s")


def write_torf(path: str | Path, f: Field) -> Path:
    """Write a snapshot: 32-byte header then little-endian f64 samples, component-major."""
    try:
        rank = _RANK_CODES[type(f)]
    except KeyError:
        raise InvalidParameter(f"{type(f).__name__} has no snapshot encoding") from None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(TORF_MAGIC, TORF_VERSION, f.grid.dim, f.grid.n, rank, b"\0" * 12)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_torf(path: str | Path, K: int | None = None) -> Field:
    """Read a snapshot; ``K`` defaults to the largest legal cutoff for the stored grid."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidParameter(f"{path}: truncated TORF header")
    magic, version, dim, n, rank, _ = _HEADER.unpack_from(raw)
    if magic != TORF_MAGIC or version != TORF_VERSION:
        raise InvalidParameter(f"{path}: not a TORF v{TORF_VERSION} file")
    grid = GridSpec(dim, n, n // 3 if K is None else K)
    cls = {v: k for k, v in _RANK_CODES.items()}.get(rank)
    if cls is None:
        raise InvalidParameter(f"{path}: unknown rank code {rank}")
    comps = cls.expected_components(dim, rank)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    expected = int(np.prod(comps + grid.shape))
    if data.size != expected:
        raise InvalidParameter(f"{path}: expected {expected} samples, found {data.size}")
    return cls(grid, data.reshape(comps + grid.shape))


def write_norms_csv(path: str | Path, rows: Iterable[tuple[float, str, float]]) -> Path:
    """Long-format CSV with one ``t, quantity, value`` row per record."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "quantity", "value"])
        for t, name, value in rows:
            w.writerow([repr(float(t)), name, repr(float(value))])
    return path
