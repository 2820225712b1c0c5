"""Truncated cylindrical Wiener noise and the stochastic convolution.

The noise is ``sum_k Phi_k dbeta_k`` with ``K`` time-constant coefficient
fields ``Phi_k`` and independent Brownian motions ``beta_k``. The stochastic
convolution is advanced by the exponential Euler step

    z_{j+1} = P S(dt) [z_j + sum_k Phi_k dW_{k,j}],   z_0 = 0,

with ``P`` the Leray projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .rng import stream
from .semigroup import PropagatorStep
from .spectral import (
    TorusGrid,
    VectorField,
    grad_hat,
    leray_hat,
    sobolev_norm,
)

Z95 = 1.959963984540054


@dataclass
class NoiseModel:
    """``K`` coefficient fields stored as one array of shape ``(K, N, *grid)``."""

    grid: TorusGrid
    phi: np.ndarray
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.ndim != self.grid.dim + 2 or self.phi.shape[1:] != (self.grid.dim, *self.grid.shape):
            raise ConfigurationError(f"noise fields have shape {self.phi.shape}, expected (K, N, *grid)")
        if not np.all(np.isfinite(self.phi)):
            raise ConfigurationError("noise fields must be finite")

    @property
    def K(self) -> int:
        return int(self.phi.shape[0])

    @classmethod
    def from_fields(cls, fields: Sequence[VectorField], seed: int = 0, stream_id: int = 0) -> "NoiseModel":
        if not fields:
            raise ConfigurationError("use NoiseModel.zero for an empty noise model")
        grid = fields[0].grid
        return cls(grid, np.stack([f.values for f in fields]), seed, stream_id)

    @classmethod
    def zero(cls, grid: TorusGrid, K: int = 1, seed: int = 0, stream_id: int = 0) -> "NoiseModel":
        return cls(grid, np.zeros((K, grid.dim, *grid.shape)), seed, stream_id)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.phi)

    def fields(self) -> list[VectorField]:
        return [VectorField(self.grid, p) for p in self.phi]

    @property
    def phi_hat(self) -> np.ndarray:
        if not hasattr(self, "_phi_hat"):
            self._phi_hat = self.grid.fft(self.phi)
        return self._phi_hat

    def forcing(self, increments: np.ndarray) -> np.ndarray:
        """``sum_k Phi_k dW_k`` for increments with leading batch axes and last axis ``K``."""
        return np.tensordot(increments, self.phi, axes=([-1], [0]))

    def forcing_hat(self, increments: np.ndarray) -> np.ndarray:
        return np.tensordot(increments, self.phi_hat, axes=([-1], [0]))

    def gram(self) -> np.ndarray:
        """``<Phi_k, Phi_l>_{L2}`` on the unit torus."""
        flat = self.phi.reshape(self.K, -1)
        return flat @ flat.T / self.grid.npoints

    def squared_norms(self) -> np.ndarray:
        return np.diag(self.gram()).copy()

    def pointwise_variance(self) -> np.ndarray:
        """``sum_k |Phi_k(x)|^2`` at every grid point."""
        return np.sum(self.phi**2, axis=(0, 1))


def _wave_directions(grid: TorusGrid, count: int) -> list[tuple[int, ...]]:
    """``count`` half-lattice wavevectors ordered by length, then lexicographically."""
    cands = []
    for k in grid.lattice():
        if not any(k):
            continue
        first = next(v for v in k if v != 0)
        if first < 0:
            continue
        if any(3 * abs(v) >= m for v, m in zip(k, grid.resolution)):
            continue
        cands.append((sum(v * v for v in k), k))
    cands.sort()
    return [k for _, k in cands[:count]]


def _perpendicular(k: tuple[int, ...]) -> np.ndarray:
    kv = np.asarray(k, dtype=float)
    if kv.size == 2:
        e = np.array([-kv[1], kv[0]])
    else:
        ref = np.array([0.0, 0.0, 1.0]) if abs(kv[2]) < np.linalg.norm(kv) * 0.9 else np.array([1.0, 0.0, 0.0])
        e = np.cross(kv, ref)
    return e / np.linalg.norm(e)


def eigenmode_noise(grid: TorusGrid, K: int = 8, amplitude: float = 1.0, decay: float = 2.0,
                    seed: int = 0, stream_id: int = 0) -> NoiseModel:
    """Divergence-free Fourier modes ``e_k cos(2 pi k.x)``, ``e_k sin(2 pi k.x)`` with ``e_k . k = 0``.

    Mode amplitudes are ``amplitude * |k|^(-decay)``; wavevectors are taken in
    order of increasing length and each contributes a cosine and a sine mode.
    In one dimension only constant fields are divergence-free, so the modes
    are constants with the same amplitude law.
    """
    if K < 1:
        raise ConfigurationError("noise needs at least one mode")
    phi = np.zeros((K, grid.dim, *grid.shape))
    if grid.dim == 1:
        for i in range(K):
            phi[i, 0] = amplitude * (i + 1.0) ** (-decay)
        return NoiseModel(grid, phi, seed, stream_id)
    waves = _wave_directions(grid, (K + 1) // 2)
    for i in range(K):
        k = waves[i // 2]
        phase = sum(2 * np.pi * kk * x for kk, x in zip(k, grid.mesh))
        shape = np.cos(phase) if i % 2 == 0 else np.sin(phase)
        amp = amplitude * float(np.sqrt(sum(v * v for v in k))) ** (-decay)
        e = _perpendicular(k)
        for d in range(grid.dim):
            phi[i, d] = amp * e[d] * shape
    return NoiseModel(grid, phi, seed, stream_id)


# ------------------------------------------------------------------ C_Phi
def _sup_norm_sq(values: np.ndarray, lead_axes: int) -> float:
    """Squared sup over the grid of the pointwise Euclidean/Frobenius magnitude."""
    axes = tuple(range(lead_axes))
    return float(np.max(np.sum(values**2, axis=axes))) if lead_axes else float(np.max(values**2))


def compute_C_Phi(model: NoiseModel, detail: bool = False):
    """Maximum of ``sum_k ||D Phi_k||_inf^2`` over ``D`` in {1, grad, Lap, grad Lap}."""
    g = model.grid
    sums = {"phi": 0.0, "grad_phi": 0.0, "lap_phi": 0.0, "grad_lap_phi": 0.0}
    for ph in model.phi_hat:
        lap = -g.eigenvalues * ph
        sums["phi"] += _sup_norm_sq(g.ifft(ph), 1)
        sums["grad_phi"] += _sup_norm_sq(g.ifft(grad_hat(g, ph)), 2)
        sums["lap_phi"] += _sup_norm_sq(g.ifft(lap), 1)
        sums["grad_lap_phi"] += _sup_norm_sq(g.ifft(grad_hat(g, lap)), 2)
    if not all(np.isfinite(v) for v in sums.values()):
        raise ConfigurationError("C_Phi sums are not finite")
    value = max(sums.values())
    return (value, sums) if detail else value


def h3_sum(model: NoiseModel) -> float:
    """``sum_k ||Phi_k||_{H^3}^2``."""
    return float(np.sum(sobolev_norm(model.grid, model.phi_hat, 3, components=True) ** 2))


# ------------------------------------------------------------------ Wiener paths
@dataclass
class WienerPath:
    increments: np.ndarray
    dt: float

    @property
    def steps(self) -> int:
        return int(self.increments.shape[0])

    @property
    def K(self) -> int:
        return int(self.increments.shape[1])

    def values(self) -> np.ndarray:
        """``W_k(t_j)`` for ``j = 0..steps`` (starting at zero)."""
        return np.vstack([np.zeros((1, self.K)), np.cumsum(self.increments, axis=0)])

    def variance_within(self, sigmas: float = 3.0) -> bool:
        """Per-mode empirical variance within ``sigmas`` standard errors of ``dt``."""
        n = self.steps
        var = np.mean(self.increments**2, axis=0)
        se = self.dt * np.sqrt(2.0 / n)
        return bool(np.all(np.abs(var - self.dt) <= sigmas * se))


def sample_increments(model: NoiseModel, steps: int, dt: float, sample_index: int = 0) -> WienerPath:
    """Reproducible ``Normal(0, dt)`` increments of shape ``(steps, K)``."""
    if not dt > 0:
        raise ConfigurationError("time step must be positive")
    rng = stream(model.seed, model.stream_id, sample_index)
    return WienerPath(rng.normal(0.0, np.sqrt(dt), size=(int(steps), model.K)), float(dt))


def sample_batch(model: NoiseModel, steps: int, dt: float, samples: Sequence[int]) -> np.ndarray:
    """Stacked increments ``(S, steps, K)`` in the order of ``samples``."""
    return np.stack([sample_increments(model, steps, dt, s).increments for s in samples])


def stochastic_convolution_step(z: VectorField | np.ndarray, step: PropagatorStep, model: NoiseModel,
                                increments: np.ndarray, project: bool = True):
    """Advance ``z`` by one exponential Euler step.

    Works on a :class:`VectorField` or on raw arrays ``(..., N, *grid)`` with
    increments ``(..., K)``.
    """
    g = model.grid
    is_field = isinstance(z, VectorField)
    zv = z.values if is_field else np.asarray(z, dtype=float)
    w = zv + model.forcing(np.asarray(increments, dtype=float))
    out = step.propagate(w)
    if project:
        out = g.ifft(leray_hat(g, g.fft(out)))
    if is_field:
        return VectorField(g, out, divergence_free=project)
    return out


# ------------------------------------------------------------------ statistics
def mc_summary(x: np.ndarray) -> tuple[float, float, tuple[float, float]]:
    """Sample mean, standard error and normal 95% interval."""
    x = np.asarray(x, dtype=float)
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("inf")
    return mean, se, (mean - Z95 * se, mean + Z95 * se)


def _report(estimate, exact, ci, samples, seed, **extra) -> dict:
    rel = abs(estimate - exact) / abs(exact) if exact != 0 else abs(estimate - exact)
    out = {
        "estimate": float(estimate),
        "exact_or_bound": float(exact),
        "rel_error": float(rel),
        "ci_95": [float(ci[0]), float(ci[1])],
        "samples": int(samples),
        "seed": int(seed),
    }
    out.update(extra)
    return out


def ito_isometry_check(model: NoiseModel, t: float, samples: int, steps: int = 10) -> dict:
    """Monte Carlo ``E||int_0^t Phi dW||_2^2`` against ``t sum_k ||Phi_k||_2^2``."""
    if samples < 2:
        raise ConfigurationError("need at least two samples")
    gram = model.gram()
    dt = t / steps
    x = np.empty(samples)
    for s in range(samples):
        w = sample_increments(model, steps, dt, s).increments.sum(axis=0)
        x[s] = w @ gram @ w
    mean, _, ci = mc_summary(x)
    exact = t * float(np.trace(gram))
    return _report(mean, exact, ci, samples, model.seed, t=float(t))


def bdg_constant(m: int) -> float:
    """Upper BDG constant ``(2m/(2m-1))^(m(2m-2))`` used by the maximal inequality check."""
    return (2.0 * m / (2.0 * m - 1.0)) ** (m * (2.0 * m - 2.0))


DOOB_CONSTANT_M1 = 4.0


def bdg_check(amplitudes: Sequence[float], t: float, samples: int, steps: int, seed: int = 0,
              stream_id: int = 1, constant: float | None = None) -> dict:
    """Empirical ``E sup_{s<=t} |M(s)|^2`` against ``constant * E<M>_t`` for ``M = sum_k phi_k beta_k``.

    ``constant`` defaults to :func:`bdg_constant` at ``m = 1``. The check passes
    unless the lower end of the 95% interval for ``E sup |M|^2`` already exceeds
    the bound.
    """
    amps = np.asarray(amplitudes, dtype=float)
    kconst = bdg_constant(1) if constant is None else float(constant)
    qv = t * float(np.sum(amps**2))
    dt = t / steps
    sup_sq = np.empty(samples)
    for s in range(samples):
        rng = stream(seed, stream_id, s)
        m_path = np.cumsum(rng.normal(0.0, np.sqrt(dt), size=(steps, amps.size)) @ amps)
        sup_sq[s] = np.max(m_path**2)
    mean, _, ci = mc_summary(sup_sq)
    bound = kconst * qv
    rep = _report(mean, bound, ci, samples, seed, constant=kconst, quadratic_variation=qv)
    rep["passed"] = bool(ci[0] <= bound)
    return rep


def chebyshev_check(r: int, samples: int, seed: int = 0, stream_id: int = 2,
                    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None) -> dict:
    """Empirical ``P[|X| > 2 C]`` against ``2^(-r)`` where ``C = (E|X|^r)^(1/r)``.

    The default ``X`` is uniform on ``[-1, 1]``, a bounded variable.
    """
    rng = stream(seed, stream_id, 0)
    x = sampler(rng, samples) if sampler is not None else rng.uniform(-1.0, 1.0, samples)
    c_hat = float(np.mean(np.abs(x) ** r) ** (1.0 / r))
    exceed = np.abs(x) > 2.0 * c_hat
    p_hat = float(np.mean(exceed))
    se = np.sqrt(max(p_hat * (1 - p_hat), 1.0 / samples) / samples)
    bound = 0.5**r
    rep = _report(p_hat, bound, (p_hat - Z95 * se, p_hat + Z95 * se), samples, seed, r=r, c_hat=c_hat)
    rep["passed"] = bool(p_hat - Z95 * se <= bound)
    return rep


# ------------------------------------------------------------------ z envelope
@dataclass
class EnvelopeResult:
    times: np.ndarray
    mean_h3_sq: np.ndarray
    p95_h3_sq: np.ndarray
    final_h3: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    c5_fit: float
    r: int
    moment_r: float
    moment_half: float
    samples: int
    seed: int

    def csv_rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(m), float(q)) for t, m, q in zip(self.times, self.mean_h3_sq, self.p95_h3_sq)]

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "c5_fit": self.c5_fit,
            "r": self.r,
            "moment_r": self.moment_r,
            "moment_ordering": bool(self.moment_half**2 <= self.moment_r * (1 + 1e-12)),
            "samples": self.samples,
            "seed": self.seed,
        }


def linear_fit(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line with coefficient of determination."""
    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def moment_boundedness_check(model: NoiseModel, generator, T: float, r: int, samples: int,
                             dt: float, checkpoints: int = 20, project: bool = True) -> EnvelopeResult:
    """Monte Carlo envelope of ``||z(t)||_{H^3}^2`` with a linear fit in ``t``.

    ``generator`` is a :class:`~mildns.semigroup.Generator` or a callable
    mapping a step index to one. ``r`` must be even and at least 2; the
    ``r``-th moment of ``||z(T)||_{H^3}`` is reported together with the
    square of its second moment.
    """
    if r < 2 or r % 2:
        raise ConfigurationError("moment order r must be even and >= 2")
    g = model.grid
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * T:
        raise ConfigurationError("dt must divide T")
    gen_at = generator if callable(generator) else (lambda j: generator)
    every = max(1, steps // checkpoints)
    dw = sample_batch(model, steps, dt, range(samples))
    z_hat = np.zeros((samples, g.dim, *g.shape), dtype=complex)
    times, means, p95s = [0.0], [0.0], [0.0]
    cache: dict = {}
    for j in range(steps):
        gen = gen_at(j)
        key = id(gen)
        if key not in cache:
            cache = {key: PropagatorStep(gen, dt)}
        step = cache[key]
        w_hat = z_hat + model.forcing_hat(dw[:, j])
        if step.scheme == "exact_constant":
            z_hat = w_hat * step.multiplier()
        else:
            z_hat = g.fft(step.propagate(g.ifft(w_hat)))
        if project:
            z_hat = leray_hat(g, z_hat)
        if (j + 1) % every == 0 or j + 1 == steps:
            h3sq = sobolev_norm(g, z_hat, 3, components=True) ** 2
            times.append((j + 1) * dt)
            means.append(float(np.mean(h3sq)))
            p95s.append(float(np.percentile(h3sq, 95)))
    t_arr, m_arr, p_arr = np.asarray(times), np.asarray(means), np.asarray(p95s)
    slope, intercept, r2 = linear_fit(t_arr, m_arr)
    final = sobolev_norm(g, z_hat, 3, components=True)
    c5 = float(np.max(m_arr[1:] / t_arr[1:])) if t_arr.size > 1 else 0.0
    return EnvelopeResult(
        times=t_arr, mean_h3_sq=m_arr, p95_h3_sq=p_arr, final_h3=final,
        slope=slope, intercept=intercept, r_squared=r2, c5_fit=c5, r=r,
        moment_r=float(np.mean(final**r)), moment_half=float(np.mean(final ** (r // 2))),
        samples=samples, seed=model.seed,
    )
