import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mildns.errors import ConfigurationError, DensityBandError
from mildns.presets import sinusoidal_density
from mildns.semigroup import (
    Generator, PropagatorStep, apply_semigroup, critical_rough_field, decay_probe, dissipativity_check,
    evolve, loglog_fit, weighted_mean, weighted_norm,
)
from mildns.spectral import ScalarField, TorusGrid, random_scalar

seeds = st.integers(0, 2**31 - 1)


def test_exact_step_frozen_value():
    # exp(-0.01 * 8 pi^2 * 0.5), evaluated independently
    g = TorusGrid((16, 16))
    e = np.cos(2 * np.pi * (g.mesh[0] + g.mesh[1]))
    out = apply_semigroup(PropagatorStep(Generator(0.01, 1.0, grid=g), 0.5), ScalarField(g, e)).values
    assert np.max(np.abs(out - 0.6738254512314336 * e)) < 1e-14
    assert math.exp(-0.04 * math.pi**2) == pytest.approx(0.6738254512314336, rel=1e-15)


def test_coefficient_uses_density():
    g = TorusGrid((8, 8))
    gen = Generator(0.02, 2.0, np.full(g.shape, 0.25), grid=g)
    assert gen.coefficient[0, 0] == pytest.approx(0.02 / (2.0 * 1.25))


def test_constant_density_picks_exact_scheme():
    g = TorusGrid((8, 8))
    assert PropagatorStep(Generator(0.01, 1.0, grid=g), 0.1).scheme == "exact_constant"
    assert PropagatorStep(Generator(0.01, 1.0, sinusoidal_density(g, 0.2)), 0.1).scheme == "crank_nicolson"
    with pytest.raises(ConfigurationError):
        PropagatorStep(Generator(0.01, 1.0, sinusoidal_density(g, 0.2)), 0.1, scheme="exact_constant")


def test_nonpositive_density_rejected():
    g = TorusGrid((8, 8))
    with pytest.raises(DensityBandError):
        Generator(0.01, 1.0, np.full(g.shape, -1.0), grid=g)


@given(seed=seeds)
def test_crank_nicolson_conserves_weighted_mean(seed):
    g = TorusGrid((16, 16))
    gen = Generator(0.05, 1.0, sinusoidal_density(g, 0.3))
    f = random_scalar(g, np.random.default_rng(seed)).values
    out = evolve(gen, f, 0.2, 4)
    assert float(weighted_mean(gen, out)) == pytest.approx(float(weighted_mean(gen, f)), abs=1e-9)


@given(seed=seeds)
def test_crank_nicolson_weighted_norm_nonincreasing(seed):
    g = TorusGrid((16, 16))
    gen = Generator(0.05, 1.0, sinusoidal_density(g, 0.3))
    f = random_scalar(g, np.random.default_rng(seed)).values
    norms = [float(weighted_norm(gen, f))]
    for _ in range(4):
        f = evolve(gen, f, 0.05, 1)
        norms.append(float(weighted_norm(gen, f)))
    assert all(b <= a * (1 + 1e-10) for a, b in zip(norms, norms[1:]))


@given(seed=seeds, lam=st.floats(0.01, 50.0))
def test_resolvent_ratio_at_least_one(seed, lam):
    g = TorusGrid((16, 16))
    rng = np.random.default_rng(seed)
    a = 0.5 * np.tanh(random_scalar(g, rng, slope=2).values)
    gen = Generator(0.01, 1.0, a, grid=g)
    rep = dissipativity_check(gen, lam, [random_scalar(g, rng, slope=1) for _ in range(3)])
    assert rep.min_ratio >= 1.0 - 1e-9


@given(seed=seeds)
def test_semigroup_property_constant(seed):
    g = TorusGrid((16, 16))
    gen = Generator(0.01, 1.0, grid=g)
    f = random_scalar(g, np.random.default_rng(seed)).values
    once = evolve(gen, f, 0.3, 1)
    split = evolve(gen, evolve(gen, f, 0.1, 1), 0.2, 1)
    assert np.max(np.abs(once - split)) < 1e-12


def test_rough_data_decay_slope():
    g = TorusGrid((64, 64))
    rep = decay_probe(Generator(0.1, 1.0, grid=g), critical_rough_field(g, np.random.default_rng(5)),
                      np.geomspace(1e-3, 1e-1, 12))
    assert -1.1 < rep.operator_slope < -0.9


def test_loglog_fit_recovers_power():
    x = np.geomspace(1e-3, 1.0, 10)
    slope, intercept, rms = loglog_fit(x, 3.0 * x**-0.75)
    assert slope == pytest.approx(-0.75, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0))
    assert rms < 1e-12
