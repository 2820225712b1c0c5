"""Analytic initial data and reference solutions."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .spectral import ScalarField, TorusGrid, VectorField, leray_project, random_vector


def taylor_green(grid: TorusGrid, amplitude: float = 1.0, t: float = 0.0, nu: float = 0.0) -> VectorField:
    """Decaying Taylor-Green vortex ``(sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y) e^{-8 pi^2 nu t}``.

    In three dimensions the planar vortex is multiplied by ``cos 2pi z``
    (the classical three-dimensional initial condition, no closed-form decay).
    """
    if grid.dim == 1:
        raise ConfigurationError("Taylor-Green data needs at least two dimensions")
    decay = amplitude * np.exp(-8.0 * np.pi**2 * nu * t)
    x, y = grid.mesh[0], grid.mesh[1]
    tw = 2.0 * np.pi
    ux = np.sin(tw * x) * np.cos(tw * y)
    uy = -np.cos(tw * x) * np.sin(tw * y)
    comps = [ux, uy]
    if grid.dim == 3:
        cz = np.cos(tw * grid.mesh[2])
        comps = [ux * cz, uy * cz, np.zeros(grid.shape)]
    return VectorField(grid, decay * np.stack(comps), divergence_free=True)


def taylor_green_pressure(grid: TorusGrid, amplitude: float = 1.0, t: float = 0.0, nu: float = 0.0) -> ScalarField:
    """Kinematic pressure ``(A^2/4)(cos 4pi x + cos 4pi y) e^{-16 pi^2 nu t}`` of the planar vortex."""
    decay = amplitude**2 * np.exp(-16.0 * np.pi**2 * nu * t)
    x, y = grid.mesh[0], grid.mesh[1]
    return ScalarField(grid, 0.25 * decay * (np.cos(4 * np.pi * x) + np.cos(4 * np.pi * y)))


def taylor_green_energy(amplitude: float, t: float, nu: float, rho: float = 1.0) -> float:
    """``int rho |u|^2 / 2`` of the planar vortex on the unit torus."""
    return 0.5 * rho * 0.5 * amplitude**2 * np.exp(-16.0 * np.pi**2 * nu * t)


def random_divfree(grid: TorusGrid, rng: np.random.Generator, slope: float = 3.0,
                   amplitude: float = 1.0, kmax: int | None = None) -> VectorField:
    """Projected Gaussian field with spectral slope ``slope``, scaled to RMS ``amplitude``.

    ``kmax`` removes modes with ``|k_i| > kmax`` on any axis.
    """
    u = random_vector(grid, rng, slope=slope)
    coeff = np.array(u.coefficients)
    if kmax is not None:
        mask = np.ones(grid.shape, dtype=bool)
        for k in grid.wavenumbers:
            mask = mask & (np.abs(k) <= kmax)
        coeff = coeff * mask
    coeff[(slice(None),) + (0,) * grid.dim] = 0.0
    u = leray_project(VectorField(grid, coefficients=coeff))
    nrm = u.norm()
    if nrm == 0:
        return VectorField.zeros(grid)
    return VectorField(grid, u.values * (amplitude / nrm), divergence_free=True)


def sinusoidal_density(grid: TorusGrid, amplitude: float = 0.2, k: int = 1) -> ScalarField:
    """``a0 = amplitude * prod_i sin(2 pi k x_i + i pi / 4)``; smooth and bounded by ``amplitude``."""
    vals = np.ones(grid.shape)
    for i, x in enumerate(grid.mesh):
        vals = vals * np.sin(2 * np.pi * k * x + i * np.pi / 4)
    return ScalarField(grid, amplitude * vals)


def constant_density(grid: TorusGrid, value: float = 0.0) -> ScalarField:
    return ScalarField.constant(grid, value)
