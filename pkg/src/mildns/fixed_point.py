"""Picard iteration for the split system ``u = v + z`` with transported density.

Level ``n`` of the iteration, given level ``n-1``:

1. ``a_n`` transports ``a0`` along ``u_{n-1} = v_{n-1} + z_{n-1}``;
2. ``z_n`` is the stochastic convolution for the generator built from ``a_n``;
3. ``v_n`` follows the exponential integrator

       v_{j+1} = P S_j [v_j + dt (B(u_{n-1,j}) - grad Q(a_{n,j}, u_{n-1,j}, v_{n-1,j}))],

   where ``S_j`` is the propagator frozen at the start of step ``j``.

Level 0 is ``a = 0``, ``v = u0``, ``z = 0`` at all times. The same Wiener
increments are replayed at every level.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DivergenceError, MarchError, NumericalBlowup
from .noise import NoiseModel, h3_sum, sample_increments
from .semigroup import Generator, PropagatorStep
from .spectral import (
    ScalarField,
    TorusGrid,
    VectorField,
    div_hat,
    grad_hat,
    inv_lap_hat,
    leray_hat,
    lp_norm,
    truncate_hat,
    w2p_norm_scalar,
    w2p_norm_vector,
)
from .transport import VelocityHistory, advect_trajectory, calibrate_c6

log = logging.getLogger(__name__)

PRESSURE_FORMS = ("rho_inv_sq", "divergence_form")
WINDOW_MODES = ("fixed", "auto_formula")
SOURCE_MEAN_TOL = 1e-8


@dataclass
class SolverConfig:
    mu: float
    rho_bar: float
    p: float
    dim: int
    T: float
    dt: float
    picard_tol: float = 1e-8
    max_levels: int = 20
    restart_window: str = "fixed"
    M_const: float = 2.0
    pressure_form: str = "rho_inv_sq"
    nonlinear: bool = True
    enforce_band: bool = True
    project_noise: bool = True
    min_window_steps: int = 10

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ConfigurationError("dimension must be 1, 2 or 3")
        if not (self.dim < self.p <= 6):
            raise ConfigurationError(f"need N < p <= 6, got N={self.dim}, p={self.p}")
        if not (self.mu > 0 and self.rho_bar > 0):
            raise ConfigurationError("mu and rho_bar must be positive")
        if not (self.T > 0 and self.dt > 0):
            raise ConfigurationError("T and dt must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"dt={self.dt} does not divide T={self.T}")
        if self.pressure_form not in PRESSURE_FORMS:
            raise ConfigurationError(f"pressure_form must be one of {PRESSURE_FORMS}")
        if self.restart_window not in WINDOW_MODES:
            raise ConfigurationError(f"restart_window must be one of {WINDOW_MODES}")
        if self.picard_tol <= 0 or self.max_levels < 1:
            raise ConfigurationError("picard_tol must be positive and max_levels >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def nu(self) -> float:
        return self.mu / self.rho_bar

    @property
    def time_exponent(self) -> float:
        """``(1 - N/p) / 2``."""
        return 0.5 * (1.0 - self.dim / self.p)


# ------------------------------------------------------------------ nonlinear terms
def bilinear_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Coefficients of ``-div(u (x) u)`` with two-thirds dealiasing.

    ``u_hat`` has shape ``(..., N, *grid)``.
    """
    d = grid.dim
    u = grid.ifft(truncate_hat(grid, u_hat))
    out = np.zeros_like(u_hat)
    prods = {}
    for i in range(d):
        for j in range(i, d):
            prods[i, j] = truncate_hat(grid, grid.fft(_c(u, i, d) * _c(u, j, d)))
    mult = grid.derivative_multipliers
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc = acc + mult[j] * prods[min(i, j), max(i, j)]
        out[(Ellipsis, i) + (slice(None),) * d] = -acc
    return out


def _c(arr: np.ndarray, i: int, d: int) -> np.ndarray:
    return arr[(Ellipsis, i) + (slice(None),) * d]


def bilinear_term(u: VectorField) -> VectorField:
    """``B(u, u) = -div(u (x) u)``, pseudo-spectral with dealiasing."""
    return VectorField(u.grid, coefficients=bilinear_hat(u.grid, u.coefficients))


@dataclass
class PressureDiagnostics:
    source_mean: float = 0.0
    source_norm: float = 0.0
    warned: bool = False


def pressure_source_hat(grid: TorusGrid, a: np.ndarray | None, u_hat: np.ndarray, v_hat: np.ndarray,
                        mu: float, rho_bar: float, form: str = "rho_inv_sq") -> np.ndarray:
    """Coefficients of ``grad u : grad u^T + (mu grad rho / rho^2) . Lap v`` for ``rho = rho_bar (1 + a)``.

    With ``form='divergence_form'`` the density term is evaluated as
    ``-div((mu / rho) Lap v)``, which is the same quantity for divergence-free ``v``.
    """
    d = grid.dim
    ut = truncate_hat(grid, u_hat)
    gu = grid.ifft(grad_hat(grid, ut))  # gu[..., j, i] = d_i u_j
    src = np.zeros(grid.shape) if u_hat.ndim == d + 1 else np.zeros(u_hat.shape[:-d - 1] + grid.shape)
    for i in range(d):
        for j in range(d):
            src = src + _c(_c(gu, j, d + 1), i, d) * _c(_c(gu, i, d + 1), j, d)
    src_hat = truncate_hat(grid, grid.fft(src))
    if a is not None and np.ptp(a) > 0:
        rho = rho_bar * (1.0 + a)
        rho_c = np.expand_dims(rho, -d - 1)
        lap_v = grid.ifft(truncate_hat(grid, -grid.eigenvalues * v_hat))
        if form == "rho_inv_sq":
            # grad rho / rho^2 = -grad(1/rho); the spectral form keeps the source mean-free
            w = -mu * grid.ifft(grad_hat(grid, grid.fft(1.0 / rho)))
            dens = sum(_c(w, i, d) * _c(lap_v, i, d) for i in range(d))
            src_hat = src_hat + truncate_hat(grid, grid.fft(dens))
        elif form == "divergence_form":
            flux_hat = grid.fft((mu / rho_c) * lap_v)
            src_hat = src_hat - truncate_hat(grid, div_hat(grid, flux_hat))
        else:
            raise ConfigurationError(f"unknown pressure form {form!r}")
    return src_hat


def pressure_gradient_hat(grid: TorusGrid, a: np.ndarray | None, u_hat: np.ndarray, v_hat: np.ndarray,
                          mu: float, rho_bar: float, form: str = "rho_inv_sq",
                          diagnostics: PressureDiagnostics | None = None) -> np.ndarray:
    """``grad Q = -grad Lap^{-1}(source)`` with the source mean removed first."""
    s_hat = pressure_source_hat(grid, a, u_hat, v_hat, mu, rho_bar, form)
    zero = (Ellipsis,) + (0,) * grid.dim
    mean = np.abs(s_hat[zero]) / grid.npoints
    norm = np.sqrt(np.sum(np.abs(s_hat) ** 2, axis=grid.axes)) / grid.npoints
    s_hat = s_hat.copy()
    s_hat[zero] = 0.0
    if diagnostics is not None:
        diagnostics.source_mean = max(diagnostics.source_mean, float(np.max(mean)))
        diagnostics.source_norm = max(diagnostics.source_norm, float(np.max(norm)))
        if np.any((mean > SOURCE_MEAN_TOL * norm) & (norm > 0)):
            if not diagnostics.warned:
                log.warning("pressure source mean %.3e exceeds %.0e of its norm", float(np.max(mean)), SOURCE_MEAN_TOL)
            diagnostics.warned = True
    return -grad_hat(grid, inv_lap_hat(grid, s_hat))


def pressure_gradient(a, u: VectorField, v: VectorField, cfg: SolverConfig,
                      diagnostics: PressureDiagnostics | None = None) -> VectorField:
    """Pressure gradient for density perturbation ``a`` (state, field or ``None``)."""
    a_vals = None
    if a is not None:
        a_vals = np.asarray(getattr(getattr(a, "a", a), "values", a))
    gq = pressure_gradient_hat(u.grid, a_vals, u.coefficients, v.coefficients, cfg.mu, cfg.rho_bar,
                               cfg.pressure_form, diagnostics)
    return VectorField(u.grid, coefficients=gq)


# ------------------------------------------------------------------ iteration state
@dataclass
class IterationState:
    level: int
    times: np.ndarray
    a: np.ndarray  # (J+1, *grid)
    v: np.ndarray  # (J+1, N, *grid)
    z: np.ndarray  # (J+1, N, *grid)
    norm_history: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        return self.v + self.z


def level_zero(grid: TorusGrid, times: np.ndarray, u0: np.ndarray) -> IterationState:
    J = times.size
    v = np.broadcast_to(u0, (J, *u0.shape)).copy()
    return IterationState(0, times, np.zeros((J, *grid.shape)), v, np.zeros_like(v))


@dataclass
class LevelDiagnostics:
    pressure: PressureDiagnostics = field(default_factory=PressureDiagnostics)
    cg_iterations: int = 0
    div_residual: float = 0.0


def _generator_steps(cfg: SolverConfig, grid: TorusGrid, a_traj: np.ndarray):
    """One propagator per step, reusing the previous one while ``a`` is unchanged."""
    prev_a, prev_step = None, None
    for j in range(a_traj.shape[0] - 1):
        aj = a_traj[j]
        if prev_a is None or not np.array_equal(aj, prev_a):
            gen = Generator(cfg.mu, cfg.rho_bar, aj, grid=grid)
            prev_step = PropagatorStep(gen, cfg.dt)
            prev_a = aj
        yield prev_step


CHUNK = 32


def _forcing_chunks(grid: TorusGrid, a_traj: np.ndarray, u_src: np.ndarray, v_src: np.ndarray,
                    cfg: SolverConfig, pressure: PressureDiagnostics | None):
    """Yield ``(j0, F)`` with ``F = B(u_j) - grad Q(a_j, u_j, v_j)`` for blocks of steps."""
    J = a_traj.shape[0] - 1
    for j0 in range(0, J, CHUNK):
        j1 = min(J, j0 + CHUNK)
        if not cfg.nonlinear:
            yield j0, None
            continue
        u_hat = grid.fft(u_src[j0:j1])
        v_hat = grid.fft(v_src[j0:j1])
        f = bilinear_hat(grid, u_hat) - pressure_gradient_hat(
            grid, a_traj[j0:j1], u_hat, v_hat, cfg.mu, cfg.rho_bar, cfg.pressure_form, pressure)
        yield j0, f


def _duhamel_sweep(grid: TorusGrid, a_traj: np.ndarray, u_src: np.ndarray, v_src: np.ndarray,
                   v_start: np.ndarray, z_start: np.ndarray | None, noise: NoiseModel | None,
                   increments: np.ndarray | None, cfg: SolverConfig, diag: LevelDiagnostics,
                   restart_each_step: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Run the exponential integrator over the window.

    ``u_src``/``v_src`` feed the explicit forcing. With ``restart_each_step``
    every step starts from ``v_start[j]``/``z_start[j]`` instead of the
    previous output, which evaluates the one-step map on a given trajectory.
    """
    J = a_traj.shape[0] - 1
    d = grid.dim
    use_noise = noise is not None and increments is not None and not noise.is_zero
    v = np.empty((J + 1, d, *grid.shape))
    z = np.empty_like(v)
    v[0] = v_start[0]
    z[0] = 0.0 if z_start is None else z_start[0]
    v_hat = grid.fft(v[0])
    z_hat = grid.fft(z[0])
    steps = _generator_steps(cfg, grid, a_traj)
    for j0, forcing in _forcing_chunks(grid, a_traj, u_src, v_src, cfg, diag.pressure):
        n = CHUNK if forcing is None else forcing.shape[0]
        n = min(n, J - j0)
        noise_hat = noise.forcing_hat(increments[j0:j0 + n]) if use_noise else None
        for i in range(n):
            j = j0 + i
            step = next(steps)
            if restart_each_step:
                v_hat = grid.fft(v_start[j])
                z_hat = grid.fft(z_start[j])
            w_hat = v_hat if forcing is None else v_hat + cfg.dt * forcing[i]
            zeta_hat = z_hat + noise_hat[i] if use_noise else z_hat
            if step.scheme == "exact_constant":
                mult = step.multiplier()
                nv_hat, nz_hat = w_hat * mult, zeta_hat * mult
            else:
                both = step.propagate(grid.ifft(np.stack([w_hat, zeta_hat])))
                diag.cg_iterations += step.last_iterations
                nv_hat, nz_hat = grid.fft(both[0]), grid.fft(both[1])
            v_hat = leray_hat(grid, nv_hat)
            z_hat = leray_hat(grid, nz_hat) if cfg.project_noise else nz_hat
            v[j + 1] = grid.ifft(v_hat)
            z[j + 1] = grid.ifft(z_hat)
            if not (np.all(np.isfinite(v[j + 1])) and np.all(np.isfinite(z[j + 1]))):
                raise NumericalBlowup("non-finite velocity", step=j + 1)
    return v, z


def divergence_residuals(grid: TorusGrid, u: np.ndarray) -> np.ndarray:
    """``||div u||_2 / ||grad u||_2`` per time slice of ``u`` (zero where ``grad u`` vanishes)."""
    out = np.zeros(u.shape[0])
    for j0 in range(0, u.shape[0], CHUNK):
        u_hat = grid.fft(u[j0:j0 + CHUNK])
        div = np.sqrt(np.sum(np.abs(div_hat(grid, u_hat)) ** 2, axis=grid.axes))
        grad = np.sqrt(np.sum(np.abs(grad_hat(grid, u_hat)) ** 2, axis=(1, 2) + grid.axes))
        out[j0:j0 + CHUNK] = np.divide(div, grad, out=np.zeros_like(div), where=grad > 0)
    return out


def divergence_residual(grid: TorusGrid, u: np.ndarray) -> float:
    """Largest per-slice divergence residual."""
    return float(np.max(divergence_residuals(grid, u)))


def picard_level(prev: IterationState, grid: TorusGrid, a0: ScalarField, u0: np.ndarray,
                 noise: NoiseModel | None, increments: np.ndarray | None, cfg: SolverConfig,
                 diagnostics: LevelDiagnostics | None = None) -> IterationState:
    """Compute level ``prev.level + 1`` of the iteration on the window ``prev.times``."""
    diag = diagnostics if diagnostics is not None else LevelDiagnostics()
    times = prev.times
    u_prev = prev.u
    history = VelocityHistory(grid, times - times[0], u_prev, dt=cfg.dt, check_divergence=False)
    a_traj = advect_trajectory(a0, history, enforce_band=cfg.enforce_band)
    v, z = _duhamel_sweep(grid, a_traj, u_prev, prev.v, np.asarray(u0)[None], None, noise,
                          increments, cfg, diag)
    u = v + z
    diag.div_residual = max(diag.div_residual, divergence_residual(grid, u))
    norms = {
        "sup_u_p": float(np.max(lp_norm(u, cfg.p, grid, vector=True))),
        "sup_v_p": float(np.max(lp_norm(v, cfg.p, grid, vector=True))),
        "sup_z_p": float(np.max(lp_norm(z, cfg.p, grid, vector=True))),
        "sup_a_p": float(np.max(lp_norm(a_traj, cfg.p, grid))),
    }
    return IterationState(prev.level + 1, times, a_traj, v, z, norms)


# ------------------------------------------------------------------ constants and windows
def initial_norms(a0: ScalarField, u0: VectorField, p: float) -> tuple[float, float]:
    """``|a0|_{2,p}`` and ``|u0|_{2,p}``."""
    return (w2p_norm_scalar(a0.grid, a0.coefficients, p), w2p_norm_vector(u0.grid, u0.coefficients, p))


def compute_K0(a0_w2p: float, u0_w2p: float, c5: float) -> float:
    return max(2.0 * a0_w2p, 2.0 * u0_w2p, c5, 1.0)


@dataclass
class AlphaTerms:
    linear: float
    viscous: float
    cubic: float

    @property
    def total(self) -> float:
        return self.linear + self.viscous + self.cubic


def alpha_terms(t: float, K0: float, cfg: SolverConfig, M: float | None = None) -> AlphaTerms:
    """The three groups of the contraction factor ``alpha(t)``."""
    M = cfg.M_const if M is None else M
    e = cfg.time_exponent
    nu = cfg.mu / cfg.rho_bar
    if t <= 0:
        return AlphaTerms(0.0, 0.0, 0.0)
    lin = (2 * M * (4 * M + 2) * K0 + 8 * nu * M**2 * K0 + 4 * nu * M * K0) * t**e
    visc = 16 * nu * M**2 * K0 * t ** (1 + e)
    cub = 80 * nu * M**3 * K0**2 * t ** (e + 1)
    return AlphaTerms(lin, visc, cub)


def alpha(t: float, K0: float, cfg: SolverConfig, M: float | None = None) -> float:
    return alpha_terms(t, K0, cfg, M).total


def compute_K0_and_alpha(cfg: SolverConfig, a0_w2p: float, u0_w2p: float, c5: float, t: float
                         ) -> tuple[float, float]:
    K0 = compute_K0(a0_w2p, u0_w2p, c5)
    return K0, alpha(t, K0, cfg)


def beta(t_bar: float, K0: float, cfg: SolverConfig) -> float:
    M = cfg.M_const
    return t_bar ** (1 + cfg.time_exponent) * 40 * cfg.mu * M**2 * K0**3 / cfg.rho_bar


def largest_admissible(g: Callable[[float], float], target: float, rtol: float = 1e-6) -> float:
    """Largest ``t`` with ``g(t) <= target`` for increasing ``g`` with ``g(0) <= target``."""
    lo, hi = 0.0, 1.0
    while g(hi) <= target:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            return hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def t0_condition(t: float, K0: float, c6: float, cfg: SolverConfig) -> float:
    return 2 * t * c6 * cfg.M_const * K0 + math.sqrt(t) * K0


def t1_condition(t: float, K0: float, cfg: SolverConfig) -> float:
    M = cfg.M_const
    nu = cfg.mu / cfg.rho_bar
    e = cfg.time_exponent
    inner = (32 * M**2 * K0 + 64 * nu * M * K0 + 8 * t + 128 * nu * M * K0 * t
             + 32 * K0 * math.sqrt(t) + 64 * nu * M * t**1.5)
    return t**e * inner


@dataclass
class WindowSelection:
    K0: float
    c5: float
    c6: float
    t_alpha: float
    t0: float
    t1: float
    t_bar: float
    binding: str
    alpha_at_tbar: float
    beta: float
    alpha_terms: dict

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def select_window(cfg: SolverConfig, K0: float, c6: float, c5: float = 0.0) -> WindowSelection:
    """``T_bar = min(T_alpha, T0, T1)`` by bisection on each monotone condition."""
    t_alpha = largest_admissible(lambda t: alpha(t, K0, cfg), 0.5)
    # alpha must stay strictly below 1/2
    while alpha(t_alpha, K0, cfg) >= 0.5 and t_alpha > 0:
        t_alpha *= 1 - 1e-6
    t0 = largest_admissible(lambda t: t0_condition(t, K0, c6, cfg), 1.0)
    t1 = largest_admissible(lambda t: t1_condition(t, K0, cfg), 1.0)
    cands = {"alpha": t_alpha, "T0": t0, "T1": t1}
    binding = min(cands, key=cands.get)
    t_bar = cands[binding]
    terms = alpha_terms(t_bar, K0, cfg)
    return WindowSelection(K0, c5, c6, t_alpha, t0, t1, t_bar, binding, terms.total,
                           beta(t_bar, K0, cfg), dict(terms.__dict__))


# ------------------------------------------------------------------ local solve
@dataclass
class ContractionReport:
    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    a_distances: list = field(default_factory=list)
    a_bounds: list = field(default_factory=list)
    implied_min_M: list = field(default_factory=list)
    alpha_bound: float = float("nan")
    K0: float = float("nan")
    M_const: float = 2.0
    levels: int = 0
    converged: bool = False
    duhamel_residual: float = float("nan")
    div_residual: float = 0.0
    pressure_warning: bool = False
    window: float = 0.0

    @property
    def passed(self) -> bool:
        """All measured ratios below one (ratios start at the second level)."""
        return all(r < 1.0 for r in self.ratios)

    @property
    def a_bound_respected(self) -> bool:
        return all(m <= b * (1 + 1e-9) + 1e-15 for m, b in zip(self.a_distances[1:], self.a_bounds[1:])
                   if not math.isnan(b))

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        out["a_bound_respected"] = self.a_bound_respected
        return out


def _sup_lp(diff: np.ndarray, grid: TorusGrid, p: float, vector: bool) -> float:
    return float(np.max(lp_norm(diff, p, grid, vector=vector)))


def duhamel_residual(state: IterationState, grid: TorusGrid, noise: NoiseModel | None,
                     increments: np.ndarray | None, cfg: SolverConfig) -> float:
    """Largest per-step sup-norm defect when the state is fed back into one update."""
    v, z = _duhamel_sweep(grid, state.a, state.u, state.v, state.v, state.z, noise, increments, cfg,
                          LevelDiagnostics(), restart_each_step=True)
    return float(max(np.max(np.abs(v[1:] - state.v[1:])), np.max(np.abs(z[1:] - state.z[1:]))))


def run_local(cfg: SolverConfig, a0: ScalarField, u0: VectorField, noise: NoiseModel | None = None,
              increments: np.ndarray | None = None, steps: int | None = None, t_start: float = 0.0,
              K0: float | None = None, alpha_bound: float | None = None,
              check_residual: bool = True) -> tuple[IterationState, ContractionReport]:
    """Iterate Picard levels on one window until the level distance drops below tolerance."""
    grid = u0.grid
    steps = cfg.steps if steps is None else steps
    times = t_start + cfg.dt * np.arange(steps + 1)
    if increments is not None and increments.shape[0] < steps:
        raise ConfigurationError("not enough Wiener increments for the window")
    u0_vals = np.asarray(u0.values, dtype=float)
    state = level_zero(grid, times, u0_vals)
    prev_prev = None
    report = ContractionReport(M_const=cfg.M_const, window=steps * cfg.dt)
    if K0 is None:
        c5 = h3_sum(noise) if noise is not None else 0.0
        K0 = compute_K0(*initial_norms(a0, u0, cfg.p), c5)
    report.K0 = K0
    report.alpha_bound = alpha(steps * cfg.dt, K0, cfg) if alpha_bound is None else alpha_bound
    window = steps * cfg.dt
    nonincreasing = 0
    for n in range(1, cfg.max_levels + 1):
        diag = LevelDiagnostics()
        new = picard_level(state, grid, a0, u0_vals, noise, increments, cfg, diag)
        report.div_residual = max(report.div_residual, diag.div_residual)
        report.pressure_warning = report.pressure_warning or diag.pressure.warned
        d_n = _sup_lp(new.v - state.v, grid, cfg.p, True) + _sup_lp(new.z - state.z, grid, cfg.p, True)
        a_dist = _sup_lp(new.a - state.a, grid, cfg.p, False)
        report.distances.append(d_n)
        report.a_distances.append(a_dist)
        if prev_prev is not None:
            u_dist = _sup_lp(state.u - prev_prev.u, grid, cfg.p, True)
            bound = 2 * cfg.M_const * K0**2 * window * u_dist
            report.a_bounds.append(bound)
            denom = 2 * K0**2 * window * u_dist
            report.implied_min_M.append(a_dist / denom if denom > 0 else 0.0)
        else:
            report.a_bounds.append(float("nan"))
            report.implied_min_M.append(float("nan"))
        if len(report.distances) >= 2:
            prev_d = report.distances[-2]
            r = d_n / prev_d if prev_d > 0 else 0.0
            report.ratios.append(r)
            nonincreasing = nonincreasing + 1 if r >= 1.0 else 0
        prev_prev, state = state, new
        report.levels = n
        if d_n < cfg.picard_tol:
            report.converged = True
            break
        if nonincreasing >= 3:
            raise DivergenceError("Picard iteration is not contracting; reduce the window length",
                                  n, report.ratios)
    if check_residual:
        report.duhamel_residual = duhamel_residual(state, grid, noise, increments, cfg)
    return state, report


# ------------------------------------------------------------------ global march
@dataclass
class WindowRecord:
    index: int
    start_step: int
    steps: int
    t_start: float
    t_end: float
    selection: WindowSelection | None
    report: ContractionReport


@dataclass
class Trajectory:
    grid: TorusGrid
    times: np.ndarray
    a: np.ndarray
    u: np.ndarray
    windows: list
    seam_jumps: list
    increments: np.ndarray | None
    noise: NoiseModel | None
    cfg: SolverConfig
    sample_index: int = 0

    @property
    def window_lengths(self) -> list[float]:
        return [w.t_end - w.t_start for w in self.windows]


def global_march(cfg: SolverConfig, a0: ScalarField, u0: VectorField, noise: NoiseModel | None = None,
                 T_total: float | None = None, sample_index: int = 0, c6: float | None = None,
                 increments: np.ndarray | None = None) -> Trajectory:
    """Chain local windows, restarting each from the end state of the previous one.

    With ``restart_window='fixed'`` every window has length ``cfg.T``; with
    ``'auto_formula'`` the length is re-derived from the current norms.
    """
    grid = u0.grid
    T_total = cfg.T if T_total is None else T_total
    total = int(round(T_total / cfg.dt))
    if total <= 0 or abs(total * cfg.dt - T_total) > 1e-9 * max(1.0, T_total):
        raise ConfigurationError("dt must divide the total horizon")
    if increments is None and noise is not None and not noise.is_zero:
        increments = sample_increments(noise, total, cfg.dt, sample_index).increments
    c5 = h3_sum(noise) if noise is not None else 0.0
    if cfg.restart_window == "auto_formula" and c6 is None:
        c6 = calibrate_c6(grid, cfg.p)
    times = cfg.dt * np.arange(total + 1)
    a_out = np.empty((total + 1, *grid.shape))
    u_out = np.empty((total + 1, grid.dim, *grid.shape))
    a_cur = a0
    u_cur = VectorField(grid, np.asarray(leray_hat_values(grid, u0.values)), divergence_free=True)
    a_out[0] = a_cur.values
    u_out[0] = u_cur.values
    windows, seams = [], []
    start = 0
    while start < total:
        K0 = compute_K0(*initial_norms(a_cur, u_cur, cfg.p), c5)
        selection = None
        if cfg.restart_window == "auto_formula":
            selection = select_window(cfg, K0, c6, c5)
            w = int(math.floor(selection.t_bar / cfg.dt * (1 + 1e-12)))
            if w < cfg.min_window_steps:
                raise MarchError("norm growth prevents marching", K0)
        else:
            w = cfg.steps
        w = min(w, total - start)
        inc = increments[start:start + w] if increments is not None else None
        alpha_b = selection.alpha_at_tbar if selection is not None else None
        state, report = run_local(cfg, a_cur, u_cur, noise, inc, steps=w, t_start=times[start],
                                  K0=K0, alpha_bound=alpha_b)
        windows.append(WindowRecord(len(windows), start, w, float(times[start]), float(times[start + w]),
                                    selection, report))
        u_win = state.u
        if windows and len(windows) > 1:
            seams.append(float(np.max(np.abs(u_win[0] - u_out[start]))))
        a_out[start:start + w + 1] = state.a
        u_out[start:start + w + 1] = u_win
        a_cur = ScalarField(grid, state.a[-1])
        u_cur = VectorField(grid, u_win[-1], divergence_free=True)
        start += w
    return Trajectory(grid, times, a_out, u_out, windows, seams, increments, noise, cfg, sample_index)


def leray_hat_values(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Leray projection of real samples."""
    return grid.ifft(leray_hat(grid, grid.fft(values)))
