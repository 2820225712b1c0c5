import numpy as np
import pytest
from hypothesis import given, strategies as st

from mildns.errors import DensityBandError, InputError
from mildns.presets import taylor_green
from mildns.spectral import ScalarField, TorusGrid, VectorField
from mildns.transport import (
    DensityState, VelocityHistory, advect_density, advect_trajectory, backtrack_foot, calibrate_c6, mass,
)

shifts = st.floats(-0.8, 0.8, allow_nan=False)


def _translation(g, c, t, steps):
    vals = np.stack([np.full(g.shape, ci) for ci in c])
    return VelocityHistory.steady(VectorField(g, vals, divergence_free=True), t, steps)


def _smooth(g, amp=0.3):
    x, y = g.mesh
    return ScalarField(g, amp * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))


@given(cx=shifts, cy=shifts)
def test_translation_foot_is_exact(cx, cy):
    g = TorusGrid((16, 16))
    pts = np.stack([m.ravel() for m in g.mesh])
    foot = backtrack_foot(pts, _translation(g, (cx, cy), 0.3, 6), 0.3)
    expect = (pts - 0.3 * np.array([[cx], [cy]])) % 1.0
    gap = np.abs(foot - expect)
    assert np.max(np.minimum(gap, 1 - gap)) < 1e-12


@given(cx=shifts, cy=shifts)
def test_range_preserved(cx, cy):
    g = TorusGrid((16, 16))
    a0 = _smooth(g)
    traj = advect_trajectory(a0, _translation(g, (cx, cy), 0.2, 5))
    assert traj.min() >= a0.values.min() and traj.max() <= a0.values.max()


def test_integer_period_translation_returns_start():
    g = TorusGrid((16, 16))
    a0 = _smooth(g)
    out = advect_density(a0, _translation(g, (1.0, 0.0), 1.0, 8), 1.0).a.values
    assert np.max(np.abs(out - a0.values)) < 1e-12


def test_translation_is_third_order():
    errs = []
    for m in (16, 32, 64):
        g = TorusGrid((m, m))
        x, y = g.mesh
        out = advect_density(_smooth(g), _translation(g, (0.37, -0.23), 0.1, 10), 0.1).a.values
        exact = 0.3 * np.sin(2 * np.pi * (x - 0.037)) * np.cos(2 * np.pi * (y + 0.023))
        errs.append(np.max(np.abs(out - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 2.7)


def test_incompressible_swirl_nearly_conserves_mass():
    g = TorusGrid((32, 32))
    a0 = _smooth(g)
    hist = VelocityHistory.steady(taylor_green(g, 0.5), 0.1, 20)
    a = advect_density(a0, hist, 0.1)
    assert abs(mass(a) - mass(a0)) < 1e-4


def test_band_violation_raises():
    g = TorusGrid((8, 8))
    with pytest.raises(DensityBandError):
        DensityState.from_field(ScalarField(g, np.full(g.shape, -1.0)))
    with pytest.raises(DensityBandError):
        DensityState.from_field(ScalarField(g, np.full(g.shape, 0.6)), enforce_band=True)


def test_compressible_history_rejected():
    g = TorusGrid((16, 16))
    x = g.mesh[0]
    u = np.stack([np.sin(2 * np.pi * x), np.zeros(g.shape)])
    with pytest.raises(InputError):
        VelocityHistory(g, np.array([0.0, 0.1]), np.stack([u, u]), dt=0.1)


def test_c6_calibration_positive_and_stable():
    g = TorusGrid((32, 32))
    c6 = calibrate_c6(g, 3.0)
    assert 0 < c6 < 10
    assert calibrate_c6(g, 3.0) == c6
