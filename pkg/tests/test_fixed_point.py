import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mildns.errors import ConfigurationError
from mildns.fixed_point import (
    SolverConfig, alpha, bilinear_hat, compute_K0, divergence_residual, global_march, pressure_gradient_hat,
    run_local, select_window,
)
from mildns.noise import eigenmode_noise, sample_increments
from mildns.presets import constant_density, random_divfree, sinusoidal_density, taylor_green
from mildns.spectral import TorusGrid, VectorField


def _cfg(**kw):
    base = dict(mu=0.01, rho_bar=1.0, p=3.0, dim=2, T=0.05, dt=0.005)
    base.update(kw)
    return SolverConfig(**base)


def _alpha_oracle(t, K0, M, mu, rho_bar, N, p):
    t, K0, M, nu = mpmath.mpf(t), mpmath.mpf(K0), mpmath.mpf(M), mpmath.mpf(mu) / rho_bar
    e = (1 - mpmath.mpf(N) / p) / 2
    return ((2 * M * (4 * M + 2) * K0 + 8 * nu * M**2 * K0 + 4 * nu * M * K0) * t**e
            + 16 * nu * M**2 * K0 * t ** (1 + e) + 80 * nu * M**3 * K0**2 * t ** (e + 1))


@pytest.mark.parametrize("t,K0,p", [(1e-4, 1.0, 3.0), (1e-6, 5.0, 4.0), (0.01, 2.0, 6.0)])
def test_alpha_matches_high_precision(t, K0, p):
    got = alpha(t, K0, _cfg(p=p))
    assert got == pytest.approx(float(_alpha_oracle(t, K0, 2.0, 0.01, 1.0, 2, p)), rel=1e-13)


def test_alpha_frozen_value():
    assert alpha(1e-4, 1.0, _cfg()) == pytest.approx(8.704067819930988, rel=1e-13)


@given(t1=st.floats(1e-12, 1.0), t2=st.floats(1e-12, 1.0))
def test_alpha_monotone(t1, t2):
    lo, hi = sorted((t1, t2))
    assert alpha(lo, 3.0, _cfg()) <= alpha(hi, 3.0, _cfg())


@given(K0=st.floats(1.0, 1e3), c6=st.floats(0.1, 5.0))
def test_window_is_minimum_and_alpha_below_half(K0, c6):
    sel = select_window(_cfg(), K0, c6)
    assert sel.t_bar == min(sel.t_alpha, sel.t0, sel.t1)
    assert alpha(sel.t_alpha, K0, _cfg()) < 0.5


def test_K0_floor_and_max():
    assert compute_K0(0.1, 0.2, 0.0) == 1.0
    assert compute_K0(3.0, 1.0, 2.0) == 6.0


@pytest.mark.parametrize("kw", [dict(p=2.0), dict(p=7.0), dict(dt=0.003), dict(mu=0.0),
                                dict(pressure_form="other"), dict(restart_window="weekly")])
def test_invalid_solver_config(kw):
    with pytest.raises(ConfigurationError):
        _cfg(**kw)


@settings(max_examples=8)
@given(seed=st.integers(0, 10**6))
def test_bilinear_orthogonal_to_velocity(seed):
    g = TorusGrid((16, 16))
    u = random_divfree(g, np.random.default_rng(seed), kmax=5)
    b = g.ifft(bilinear_hat(g, u.coefficients))
    assert abs(np.mean(np.sum(b * u.values, axis=0))) < 1e-13 * max(1.0, np.max(np.abs(b)))


@settings(max_examples=8)
@given(seed=st.integers(0, 10**6), amp=st.floats(0.0, 0.4))
def test_pressure_gradient_orthogonal_to_divergence_free(seed, amp):
    g = TorusGrid((16, 16))
    u = random_divfree(g, np.random.default_rng(seed), kmax=5)
    a = sinusoidal_density(g, amp).values
    gq = g.ifft(pressure_gradient_hat(g, a, u.coefficients, u.coefficients, 0.01, 1.0))
    assert abs(np.mean(np.sum(gq * u.values, axis=0))) < 1e-12 * max(1.0, np.max(np.abs(gq)))


def test_taylor_green_matches_analytic():
    g = TorusGrid((16, 16))
    cfg = _cfg(T=0.1, dt=1e-3)
    traj = global_march(cfg, constant_density(g), taylor_green(g))
    assert np.max(np.abs(traj.u[-1] - taylor_green(g, t=0.1, nu=cfg.nu).values)) < 1e-10


@settings(max_examples=5)
@given(seed=st.integers(0, 10**6))
def test_picard_contracts_and_stays_divergence_free(seed):
    g = TorusGrid((16, 16))
    u0 = random_divfree(g, np.random.default_rng(seed), amplitude=0.5, kmax=4)
    traj, rep = run_local(_cfg(), sinusoidal_density(g, 0.2), u0)
    assert rep.converged and rep.passed and rep.levels <= 20
    assert rep.duhamel_residual <= 1e-7
    assert divergence_residual(g, traj.v) < 1e-10


def test_zero_noise_matches_deterministic():
    g = TorusGrid((16, 16))
    cfg = _cfg()
    a0, u0 = sinusoidal_density(g, 0.2), taylor_green(g, 0.3)
    zero = eigenmode_noise(g, 3, 0.0)
    det = global_march(cfg, a0, u0, T_total=0.1)
    sto = global_march(cfg, a0, u0, zero, T_total=0.1)
    assert np.max(np.abs(det.u - sto.u)) < 1e-14


def test_samples_reproducible_and_distinct():
    g = TorusGrid((16, 16))
    cfg = _cfg()
    model = eigenmode_noise(g, 4, 0.3, seed=2)
    runs = [global_march(cfg, constant_density(g), taylor_green(g, 0.3), model, sample_index=i)
            for i in (0, 0, 1)]
    assert np.array_equal(runs[0].u, runs[1].u)
    assert not np.array_equal(runs[0].u, runs[2].u)


def test_supplied_increments_respected():
    g = TorusGrid((16, 16))
    cfg = _cfg()
    model = eigenmode_noise(g, 4, 0.3, seed=2)
    inc = sample_increments(model, cfg.steps, cfg.dt, 5).increments
    a = global_march(cfg, constant_density(g), VectorField.zeros(g), model, increments=inc)
    b = global_march(cfg, constant_density(g), VectorField.zeros(g), model, sample_index=5)
    assert np.array_equal(a.u, b.u)


def test_windows_chain_without_seam_jumps():
    g = TorusGrid((16, 16))
    traj = global_march(_cfg(), sinusoidal_density(g, 0.2), taylor_green(g, 0.5), T_total=0.15)
    assert len(traj.windows) == 3
    assert max(traj.seam_jumps) <= 1e-12
    assert traj.times[-1] == pytest.approx(0.15)
