"""Fourier representation of periodic fields on the unit torus [0,1]^N.

Conventions
-----------
* The forward transform is unnormalized, ``f_hat[k] = sum_x f(x) exp(-2 pi i k.x)``.
* The inverse transform divides by the number of grid points.
* Coefficients are stored as full complex arrays (no real-to-complex packing),
  in the ``numpy.fft`` ordering ``0, 1, ..., M/2-1, -M/2, ..., -1`` per axis.
* First-derivative multipliers vanish on the Nyquist planes ``k_i = -M_i/2``.
  A real field cannot carry the odd derivative of that mode, so the gradient,
  divergence and Leray projection treat it as unresolved. Identities that mix
  first derivatives with the Laplacian hold exactly for fields without Nyquist
  content (see :func:`drop_nyquist`).

Every array-level helper accepts arbitrary leading batch axes; the trailing
``N`` axes are the grid axes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DomainError

MEAN_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the unit torus with per-axis even resolution ``>= 8``."""

    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        res = tuple(int(m) for m in self.resolution)
        object.__setattr__(self, "resolution", res)
        if not 1 <= len(res) <= 3:
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {len(res)}")
        for m in res:
            if m < 8 or m % 2:
                raise ConfigurationError(f"resolution {m} must be even and >= 8")

    @classmethod
    def uniform(cls, dim: int, m: int) -> "TorusGrid":
        return cls((m,) * dim)

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def npoints(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / m for m in self.resolution)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays ``x_i = j / M_i``."""
        out = []
        for i, m in enumerate(self.resolution):
            shape = [1] * self.dim
            shape[i] = m
            out.append((np.arange(m) / m).reshape(shape))
        return tuple(out)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Full coordinate arrays of shape ``grid.shape``."""
        return tuple(np.broadcast_to(c, self.shape) for c in self.coords)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable integer wavenumber arrays in FFT order."""
        out = []
        for i, m in enumerate(self.resolution):
            shape = [1] * self.dim
            shape[i] = m
            out.append(np.fft.fftfreq(m, 1.0 / m).round().astype(np.int64).reshape(shape))
        return tuple(out)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """``lambda_k = sum_i (2 pi k_i)^2`` on the full coefficient array."""
        lam = np.zeros(self.shape)
        for k in self.wavenumbers:
            lam = lam + (2.0 * np.pi * k) ** 2
        return lam

    @cached_property
    def derivative_multipliers(self) -> tuple[np.ndarray, ...]:
        """``2 pi i k_j`` with the Nyquist plane of each axis set to zero."""
        out = []
        for k, m in zip(self.wavenumbers, self.resolution):
            kk = np.where(k == -m // 2, 0, k)
            out.append(2j * np.pi * kk)
        return tuple(out)

    @cached_property
    def resolved_wavevector(self) -> tuple[np.ndarray, ...]:
        """Real wavevector ``2 pi k`` with Nyquist entries set to zero, full shape."""
        return tuple(np.broadcast_to((m / 1j).real, self.shape) for m in self.derivative_multipliers)

    @cached_property
    def resolved_eigenvalues(self) -> np.ndarray:
        """``|2 pi k|^2`` built from the resolved wavevector."""
        return sum(w**2 for w in self.resolved_wavevector)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with ``|k_i| < M_i / 3`` on every axis."""
        mask = np.ones(self.shape, dtype=bool)
        for k, m in zip(self.wavenumbers, self.resolution):
            mask = mask & (3 * np.abs(k) < m)
        return mask

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes that touch a Nyquist plane."""
        mask = np.zeros(self.shape, dtype=bool)
        for k, m in zip(self.wavenumbers, self.resolution):
            mask = mask | (k == -m // 2)
        return mask

    # ------------------------------------------------------------------ transforms
    def fft(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        self._check_shape(values)
        return sfft.fftn(values, axes=self.axes)

    def ifft(self, coefficients: np.ndarray) -> np.ndarray:
        coefficients = np.asarray(coefficients)
        self._check_shape(coefficients)
        return sfft.ifftn(coefficients, axes=self.axes).real

    def _check_shape(self, arr: np.ndarray) -> None:
        if arr.ndim < self.dim or tuple(arr.shape[-self.dim:]) != self.shape:
            raise ConfigurationError(
                f"array shape {arr.shape} does not match grid resolution {self.shape}"
            )

    def index_of(self, k: Sequence[int]) -> tuple[int, ...]:
        """Array index of wavevector ``k`` in FFT ordering."""
        WaveIndex(tuple(k)).check(self)
        return tuple(int(ki) % m for ki, m in zip(k, self.resolution))

    def eigenfunction(self, k: Sequence[int]) -> np.ndarray:
        """Complex samples of ``exp(i 2 pi k.x)``."""
        phase = sum(2.0 * np.pi * ki * x for ki, x in zip(k, self.mesh))
        return np.exp(1j * phase)

    def lattice(self) -> list[tuple[int, ...]]:
        """Every wavevector of the grid lattice."""
        ranges = [range(-m // 2, m // 2) for m in self.resolution]
        return list(itertools.product(*ranges))


def _comp(i: int, d: int) -> tuple:
    """Index selecting component ``i`` of an array with ``d`` trailing grid axes."""
    return (Ellipsis, i) + (slice(None),) * d


@dataclass(frozen=True)
class WaveIndex:
    """Integer wavevector ``k``."""

    k: tuple[int, ...]

    def check(self, grid: TorusGrid) -> "WaveIndex":
        if len(self.k) != grid.dim:
            raise ConfigurationError(f"wave index {self.k} has wrong dimension for {grid}")
        for ki, m in zip(self.k, grid.resolution):
            if not -m // 2 <= ki <= m // 2 - 1:
                raise ConfigurationError(f"wave index {self.k} outside lattice of {grid.shape}")
        return self


def laplacian_eigenvalue(k: WaveIndex | Sequence[int]) -> float:
    """``sum_i (2 pi k_i)^2``."""
    kk = k.k if isinstance(k, WaveIndex) else tuple(k)
    return float(sum((2.0 * np.pi * ki) ** 2 for ki in kk))


# ---------------------------------------------------------------------- fields
def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


class ScalarField:
    """Real scalar field with lazily synchronized spectral coefficients."""

    __slots__ = ("grid", "_values", "_coefficients", "mean_zero")

    def __init__(
        self,
        grid: TorusGrid,
        values: np.ndarray | None = None,
        coefficients: np.ndarray | None = None,
        mean_zero: bool = False,
    ):
        if values is None and coefficients is None:
            raise ConfigurationError("a field needs values or coefficients")
        self.grid = grid
        self._values = None
        self._coefficients = None
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise ConfigurationError(f"values shape {values.shape} != grid {grid.shape}")
            self._values = _frozen(values)
        if coefficients is not None:
            coefficients = np.asarray(coefficients, dtype=complex)
            if coefficients.shape != grid.shape:
                raise ConfigurationError(
                    f"coefficient shape {coefficients.shape} != grid {grid.shape}"
                )
            self._coefficients = _frozen(coefficients)
        self.mean_zero = bool(mean_zero)
        if self.mean_zero:
            _require_mean_zero(self)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable[..., np.ndarray], **kw) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.mesh), grid.shape), **kw)

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _frozen(self.grid.ifft(self._coefficients))
        return self._values

    @property
    def coefficients(self) -> np.ndarray:
        if self._coefficients is None:
            self._coefficients = _frozen(self.grid.fft(self._values))
        return self._coefficients

    def norm(self) -> float:
        """Root mean square (the L2 norm on the unit torus)."""
        return float(np.sqrt(np.mean(self.values**2)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"ScalarField(grid={self.grid.shape}, mean_zero={self.mean_zero})"


class VectorField:
    """Real vector field with ``N`` components on a shared grid.

    Values are stored as one array of shape ``(N, *grid.shape)``.
    """

    __slots__ = ("grid", "_values", "_coefficients", "divergence_free")

    def __init__(
        self,
        grid: TorusGrid,
        values: np.ndarray | None = None,
        coefficients: np.ndarray | None = None,
        divergence_free: bool = False,
    ):
        if values is None and coefficients is None:
            raise ConfigurationError("a field needs values or coefficients")
        self.grid = grid
        self._values = None
        self._coefficients = None
        shape = (grid.dim, *grid.shape)
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != shape:
                raise ConfigurationError(f"vector values shape {values.shape} != {shape}")
            self._values = _frozen(values)
        if coefficients is not None:
            coefficients = np.asarray(coefficients, dtype=complex)
            if coefficients.shape != shape:
                raise ConfigurationError(f"vector coefficient shape {coefficients.shape} != {shape}")
            self._coefficients = _frozen(coefficients)
        self.divergence_free = bool(divergence_free)

    @classmethod
    def from_components(cls, components: Sequence[ScalarField], **kw) -> "VectorField":
        grids = {c.grid for c in components}
        if len(grids) != 1:
            raise ConfigurationError("vector components must share one grid")
        grid = grids.pop()
        if len(components) != grid.dim:
            raise ConfigurationError(f"need {grid.dim} components, got {len(components)}")
        return cls(grid, np.stack([c.values for c in components]), **kw)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable[..., Sequence[np.ndarray]], **kw):
        comps = [np.broadcast_to(c, grid.shape) for c in fn(*grid.mesh)]
        return cls(grid, np.stack(comps), **kw)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim, *grid.shape)), divergence_free=True)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _frozen(self.grid.ifft(self._coefficients))
        return self._values

    @property
    def coefficients(self) -> np.ndarray:
        if self._coefficients is None:
            self._coefficients = _frozen(self.grid.fft(self._values))
        return self._coefficients

    @property
    def components(self) -> tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, v) for v in self.values)

    def norm(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.values**2, axis=0))))

    def _coerce(self, other):
        if isinstance(other, VectorField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return VectorField(self.grid, self.values + self._coerce(other))

    def __sub__(self, other):
        return VectorField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return VectorField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.values, divergence_free=self.divergence_free)

    def __repr__(self) -> str:
        return f"VectorField(grid={self.grid.shape}, divergence_free={self.divergence_free})"


# ------------------------------------------------------------ array operators
def lap_hat(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    return -grid.eigenvalues * f_hat


def inv_lap_hat(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    lam = grid.eigenvalues
    out = np.zeros_like(f_hat)
    nz = lam > 0
    out[..., nz] = -f_hat[..., nz] / lam[nz]
    return out


def grad_hat(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    """Gradient coefficients, new axis inserted before the grid axes."""
    return np.stack([m * f_hat for m in grid.derivative_multipliers], axis=-grid.dim - 1)


def div_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    d = grid.dim
    return sum(grid.derivative_multipliers[i] * u_hat[_comp(i, d)] for i in range(d))


def leray_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """``u - k (k.u) / |k|^2`` with the resolved wavevector."""
    d = grid.dim
    kv = grid.resolved_wavevector
    k2 = grid.resolved_eigenvalues
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    dot = sum(kv[i] * u_hat[_comp(i, d)] for i in range(d)) * inv
    return u_hat - np.stack([kv[i] * dot for i in range(d)], axis=-d - 1)


def truncate_hat(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    return f_hat * grid.dealias_mask


def dealiased_values(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    """Real-space samples of the two-thirds-truncated field."""
    return grid.ifft(truncate_hat(grid, f_hat))


def hessian_hat(grid: TorusGrid, f_hat: np.ndarray) -> np.ndarray:
    """Second-derivative coefficients, two axes of length N before the grid axes."""
    g = grad_hat(grid, f_hat)
    return np.stack([grad_hat(grid, g[_comp(i, grid.dim)]) for i in range(grid.dim)],
                    axis=-grid.dim - 2)


# ------------------------------------------------------------- field operators
def _mean_zero_ok(grid: TorusGrid, f_hat: np.ndarray, values_norm: float) -> bool:
    mean = abs(f_hat[(0,) * grid.dim]) / grid.npoints
    return mean <= MEAN_ZERO_TOL * max(values_norm, np.finfo(float).tiny)


def _require_mean_zero(f: ScalarField) -> None:
    if not _mean_zero_ok(f.grid, f.coefficients, f.norm()) and f.norm() > 0:
        raise DomainError("inverse Laplacian requires zero mean")


def forward_transform(f: ScalarField | VectorField) -> np.ndarray:
    """Unnormalized forward coefficients of ``f``."""
    return f.coefficients


def inverse_transform(grid: TorusGrid, coefficients: np.ndarray) -> ScalarField:
    return ScalarField(grid, coefficients=coefficients)


def apply_laplacian(f: ScalarField) -> ScalarField:
    out = lap_hat(f.grid, f.coefficients)
    out[(0,) * f.grid.dim] = 0.0
    return ScalarField(f.grid, coefficients=out)


def inverse_laplacian(f: ScalarField) -> ScalarField:
    _require_mean_zero(f)
    return ScalarField(f.grid, coefficients=inv_lap_hat(f.grid, f.coefficients), mean_zero=True)


def inverse_sqrt_laplacian(f: ScalarField) -> ScalarField:
    """Divide each nonzero mode by ``lambda_k^{1/2}``."""
    _require_mean_zero(f)
    lam = f.grid.eigenvalues
    out = np.zeros_like(f.coefficients)
    nz = lam > 0
    out[nz] = f.coefficients[nz] / np.sqrt(lam[nz])
    return ScalarField(f.grid, coefficients=out, mean_zero=True)


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, coefficients=grad_hat(f.grid, f.coefficients))


def divergence(u: VectorField) -> ScalarField:
    return ScalarField(u.grid, coefficients=div_hat(u.grid, u.coefficients), mean_zero=False)


def leray_project(u: VectorField) -> VectorField:
    return VectorField(u.grid, coefficients=leray_hat(u.grid, u.coefficients), divergence_free=True)


def dealias(f: ScalarField | VectorField):
    """Two-thirds truncation of a field."""
    out = truncate_hat(f.grid, f.coefficients)
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, coefficients=out)
    return VectorField(f.grid, coefficients=out, divergence_free=f.divergence_free)


def drop_nyquist(f: ScalarField | VectorField):
    """Remove every mode lying on a Nyquist plane."""
    out = np.where(f.grid.nyquist_mask, 0.0, f.coefficients)
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, coefficients=out)
    return VectorField(f.grid, coefficients=out, divergence_free=f.divergence_free)


# ----------------------------------------------------------------------- norms
def lp_norm(values: np.ndarray, p: float, grid: TorusGrid, vector: bool = False) -> np.ndarray:
    """``(mean |f|^p)^{1/p}`` over the grid axes, pointwise Euclidean for vectors.

    ``vector`` marks the axis just before the grid axes as a component axis.
    Leading axes beyond that are treated as a batch.
    """
    mag = np.abs(values)
    if vector:
        mag = np.sqrt(np.sum(values**2, axis=-grid.dim - 1))
    if np.isinf(p):
        return np.max(mag, axis=grid.axes)
    return np.mean(mag**p, axis=grid.axes) ** (1.0 / p)


def matrix_lp_norm(values: np.ndarray, p: float, grid: TorusGrid) -> np.ndarray:
    """Lp norm of a matrix field with pointwise Frobenius magnitude.

    The two axes before the grid axes are the matrix axes.
    """
    d = grid.dim
    mag = np.sqrt(np.sum(values**2, axis=(-d - 2, -d - 1)))
    if np.isinf(p):
        return np.max(mag, axis=grid.axes)
    return np.mean(mag**p, axis=grid.axes) ** (1.0 / p)


def sobolev_norm(grid: TorusGrid, f_hat: np.ndarray, s: float, components: bool = False) -> np.ndarray:
    """``H^s`` norm ``(sum (1+lambda_k)^s |c_k|^2)^{1/2}`` with normalized ``c_k``."""
    w = (1.0 + grid.eigenvalues) ** s
    sq = np.sum(w * np.abs(f_hat) ** 2, axis=grid.axes) / grid.npoints**2
    if components:
        sq = np.sum(sq, axis=-1)
    return np.sqrt(sq)


def derivative_norm(grid: TorusGrid, f_hat: np.ndarray, order: int, components: bool = False) -> np.ndarray:
    """``||nabla^order f||_2`` computed as ``(sum lambda^order |c_k|^2)^{1/2}``."""
    sq = np.sum(grid.eigenvalues**order * np.abs(f_hat) ** 2, axis=grid.axes) / grid.npoints**2
    if components:
        sq = np.sum(sq, axis=-1)
    return np.sqrt(sq)


def w2p_norm_scalar(grid: TorusGrid, f_hat: np.ndarray, p: float) -> float:
    """``|f|_p + |grad f|_p + |hess f|_p`` (Frobenius for the Hessian)."""
    f = grid.ifft(f_hat)
    g = grid.ifft(grad_hat(grid, f_hat))
    h = grid.ifft(hessian_hat(grid, f_hat))
    return float(lp_norm(f, p, grid) + lp_norm(g, p, grid, vector=True) + matrix_lp_norm(h, p, grid))


def w2p_norm_vector(grid: TorusGrid, u_hat: np.ndarray, p: float) -> float:
    """Vector version: first derivative is a matrix, second a 3-tensor (Frobenius)."""
    d = grid.dim
    u = grid.ifft(u_hat)
    g = grid.ifft(grad_hat(grid, u_hat))  # (N_comp, N_deriv, ...)
    h = grid.ifft(hessian_hat(grid, u_hat))  # (N_comp, N, N, ...)
    h_mag = np.sqrt(np.sum(h**2, axis=(-d - 3, -d - 2, -d - 1)))
    return float(
        lp_norm(u, p, grid, vector=True) + matrix_lp_norm(g, p, grid) + np.mean(h_mag**p) ** (1.0 / p)
    )


def hessian_lp_norm_scalar(grid: TorusGrid, f_hat: np.ndarray, p: float) -> float:
    return float(matrix_lp_norm(grid.ifft(hessian_hat(grid, f_hat)), p, grid))


def hessian_lp_norm_vector(grid: TorusGrid, u_hat: np.ndarray, p: float) -> float:
    d = grid.dim
    h = grid.ifft(hessian_hat(grid, u_hat))
    h_mag = np.sqrt(np.sum(h**2, axis=(-d - 3, -d - 2, -d - 1)))
    return float(np.mean(h_mag**p) ** (1.0 / p))


# ------------------------------------------------------------- random fields
def random_scalar(grid: TorusGrid, rng: np.random.Generator, slope: float = 0.0,
                  mean_zero: bool = False, band_limited: bool = True) -> ScalarField:
    """Gaussian random field with spectral amplitude ``(1+|k|)^(-slope)``.

    ``band_limited`` removes Nyquist modes so that first-derivative identities
    hold exactly.
    """
    white = grid.fft(rng.standard_normal(grid.shape))
    kmag = np.sqrt(grid.eigenvalues) / (2.0 * np.pi)
    coeff = white * (1.0 + kmag) ** (-slope)
    if band_limited:
        coeff = np.where(grid.nyquist_mask, 0.0, coeff)
    if mean_zero:
        coeff[(0,) * grid.dim] = 0.0
    return ScalarField(grid, coefficients=coeff, mean_zero=mean_zero)


def random_vector(grid: TorusGrid, rng: np.random.Generator, slope: float = 0.0,
                  divergence_free: bool = False, band_limited: bool = True) -> VectorField:
    comps = [random_scalar(grid, rng, slope, band_limited=band_limited).coefficients
             for _ in range(grid.dim)]
    u = VectorField(grid, coefficients=np.stack(comps))
    if divergence_free:
        u = leray_project(u)
    return u
