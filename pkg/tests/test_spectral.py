import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma

from mildns.errors import DomainError
from mildns.spectral import (
    ScalarField, TorusGrid, VectorField, WaveIndex, apply_laplacian, dealias, divergence, gradient,
    inverse_laplacian, inverse_sqrt_laplacian, laplacian_eigenvalue, leray_project, lp_norm,
    random_scalar, random_vector, sobolev_norm,
)

seeds = st.integers(0, 2**31 - 1)
sizes = st.sampled_from([8, 12, 16])


# ---------------------------------------------------------------- frozen oracle values
@pytest.mark.parametrize("k,expected", [
    ((0, 0), 0.0),
    ((1, 0), 39.47841760435743),       # 4 pi^2
    ((1, 1), 78.95683520871486),       # 8 pi^2
    ((1, 2, 2), 355.3057584392169),    # 36 pi^2
    ((-3, 4), 986.9604401089358),      # 100 pi^2
])
def test_eigenvalue_frozen(k, expected):
    assert laplacian_eigenvalue(WaveIndex(k)) == pytest.approx(expected, rel=1e-14)


def test_transform_matches_direct_dft():
    # independent oracle: explicit DFT sum, no FFT
    g = TorusGrid((10, 8))
    f = np.random.default_rng(3).standard_normal(g.shape)
    n0, n1 = g.shape
    j0, j1 = np.arange(n0), np.arange(n1)
    direct = np.zeros(g.shape, complex)
    for k0 in range(n0):
        for k1 in range(n1):
            phase = np.exp(-2j * np.pi * (k0 * j0[:, None] / n0 + k1 * j1[None, :] / n1))
            direct[k0, k1] = np.sum(f * phase)
    assert np.allclose(ScalarField(g, f).coefficients, direct, atol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 6.0])
def test_lp_norm_of_sine_matches_closed_form(p):
    # mean |sin(2 pi x)|^p = Gamma((p+1)/2) / (sqrt(pi) Gamma(p/2 + 1))
    g = TorusGrid((512,))
    f = np.sin(2 * np.pi * g.mesh[0])
    expected = (gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma(p / 2 + 1))) ** (1 / p)
    assert float(lp_norm(f, p, g)) == pytest.approx(expected, rel=1e-10)


def test_sobolev_norm_single_mode():
    g = TorusGrid((16, 16))
    f = np.cos(2 * np.pi * g.mesh[0])
    # ||cos||_2^2 = 1/2 and lambda = 4 pi^2
    expected = math.sqrt(0.5 * (1 + 4 * math.pi**2) ** 3)
    assert float(sobolev_norm(g, g.fft(f), 3)) == pytest.approx(expected, rel=1e-12)


def test_inverse_laplacian_rejects_nonzero_mean(grid16):
    with pytest.raises(DomainError):
        inverse_laplacian(ScalarField(grid16, np.ones(grid16.shape) + np.sin(2 * np.pi * grid16.mesh[0])))


def test_dealias_removes_upper_third():
    g = TorusGrid((24,))
    x = g.mesh[0]
    f = ScalarField(g, np.cos(2 * np.pi * 3 * x) + np.cos(2 * np.pi * 9 * x))
    assert np.allclose(dealias(f).values, np.cos(2 * np.pi * 3 * x), atol=1e-13)


# ---------------------------------------------------------------- properties
@given(seed=seeds, m=sizes)
def test_round_trip(seed, m):
    g = TorusGrid((m, m))
    f = random_scalar(g, np.random.default_rng(seed), band_limited=False)
    back = ScalarField(g, coefficients=f.coefficients).values
    assert np.max(np.abs(back - f.values)) <= 1e-12 * np.max(np.abs(f.values))


@given(seed=seeds, m=sizes)
def test_leray_idempotent_and_divergence_free(seed, m):
    g = TorusGrid((m, m))
    u = random_vector(g, np.random.default_rng(seed))
    pu = leray_project(u)
    scale = np.max(np.abs(pu.values))
    assert np.max(np.abs(leray_project(pu).values - pu.values)) <= 1e-12 * scale
    assert np.max(np.abs(divergence(pu).values)) <= 1e-10 * max(scale, 1.0) * m


@given(seed=seeds, m=sizes)
def test_leray_annihilates_gradients(seed, m):
    g = TorusGrid((m, m))
    phi = random_scalar(g, np.random.default_rng(seed))
    grad = gradient(phi)
    assert np.max(np.abs(leray_project(grad).values)) <= 1e-12 * max(1.0, np.max(np.abs(grad.values)))


@given(seed=seeds)
def test_leray_is_l2_orthogonal(seed):
    g = TorusGrid((12, 12))
    rng = np.random.default_rng(seed)
    u = random_vector(g, rng)
    pu = leray_project(u)
    inner = np.mean(np.sum(pu.values * (u.values - pu.values), axis=0))
    assert abs(inner) <= 1e-12 * np.mean(np.sum(u.values**2, axis=0))


@given(seed=seeds)
def test_laplacian_self_adjoint_and_negative(seed):
    g = TorusGrid((12, 12))
    rng = np.random.default_rng(seed)
    f, h = random_scalar(g, rng), random_scalar(g, rng)
    lf, lh = apply_laplacian(f).values, apply_laplacian(h).values
    assert np.mean(f.values * lh) == pytest.approx(np.mean(lf * h.values), rel=1e-9, abs=1e-9)
    assert np.mean(f.values * lf) <= 1e-12


@given(seed=seeds)
def test_half_laplacian_squares_to_inverse(seed):
    g = TorusGrid((12, 12))
    f = random_scalar(g, np.random.default_rng(seed), mean_zero=True)
    twice = inverse_sqrt_laplacian(inverse_sqrt_laplacian(f)).values
    ref = -inverse_laplacian(f).values
    assert np.max(np.abs(twice - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@given(seed=seeds)
def test_divergence_of_gradient_is_laplacian(seed):
    g = TorusGrid((16, 16))
    f = random_scalar(g, np.random.default_rng(seed))
    lhs = divergence(gradient(f)).values
    rhs = apply_laplacian(f).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_vector_field_components_roundtrip(grid16):
    u = VectorField.from_function(grid16, lambda x, y: (np.sin(2 * np.pi * y), np.cos(2 * np.pi * x)))
    assert len(u.components) == 2
    assert np.allclose(u.values[0], np.sin(2 * np.pi * grid16.mesh[1]))
