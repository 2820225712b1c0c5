import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mildns.energy import (
    _fitted_weight, build_ledger, energy_audit, high_order_envelope, stochastic_energy_audit,
)
from mildns.fixed_point import SolverConfig, global_march
from mildns.noise import eigenmode_noise
from mildns.presets import constant_density, random_divfree, taylor_green, taylor_green_energy
from mildns.spectral import TorusGrid, VectorField


def _cfg(**kw):
    base = dict(mu=0.01, rho_bar=1.0, p=3.0, dim=2, T=0.05, dt=0.005)
    base.update(kw)
    return SolverConfig(**base)


def test_fitted_weight_limits():
    x = np.array([1e-12, 1e-3, 1.0, 50.0])
    w = _fitted_weight(x)
    assert w[0] == pytest.approx(1.0, abs=1e-12)
    assert w[2] == pytest.approx(2 * np.tanh(0.5), rel=1e-14)
    assert w[3] == pytest.approx(2 / 50, rel=1e-12)


def test_single_mode_decay_closes_exactly():
    # one step of exp(-c lam dt) decay: trapezoid with the fitted weight is exact
    g = TorusGrid((16, 16))
    cfg = _cfg(nonlinear=False, dt=0.01)
    traj = global_march(cfg, constant_density(g), taylor_green(g), T_total=0.2)
    led = build_ledger(traj)
    assert np.max(np.abs(led.audited - led.audited[0])) < 1e-15
    assert led.kinetic[-1] == pytest.approx(taylor_green_energy(1.0, 0.2, cfg.nu), rel=1e-13)


@settings(max_examples=5)
@given(seed=st.integers(0, 10**6))
def test_heat_flow_audit_passes(seed):
    g = TorusGrid((16, 16))
    u0 = random_divfree(g, np.random.default_rng(seed), kmax=7)
    _, verdict = energy_audit(global_march(_cfg(nonlinear=False), constant_density(g), u0, T_total=0.1))
    assert verdict.passed and verdict.nonincreasing


def test_nonlinear_defect_is_first_order_in_dt():
    g = TorusGrid((16, 16))
    u0 = random_divfree(g, np.random.default_rng(3), amplitude=1.0, kmax=4)
    rates = []
    for dt in (2e-3, 1e-3):
        _, v = energy_audit(global_march(_cfg(T=0.1, dt=dt), constant_density(g), u0))
        rates.append(v.worst_rate)
    assert 1.6 < rates[0] / rates[1] < 2.4


def test_stochastic_audit_zero_noise_trivial():
    g = TorusGrid((8, 8))
    model = eigenmode_noise(g, 2, 0.0)
    ledgers = [build_ledger(global_march(_cfg(), constant_density(g), VectorField.zeros(g), model,
                                         sample_index=s)) for s in range(5)]
    rep = stochastic_energy_audit(ledgers)
    assert rep["estimate"] == 0.0 and rep["passed"]


def test_envelope_quadratic_in_noise_amplitude():
    g = TorusGrid((16, 16))
    ends = []
    for amp in (0.1, 0.3):
        traj = global_march(_cfg(), constant_density(g), VectorField.zeros(g), eigenmode_noise(g, 2, amp, seed=4))
        ends.append(high_order_envelope(traj, 2).envelope[-1])
    assert ends[1] / ends[0] == pytest.approx(9.0, rel=1e-6)
