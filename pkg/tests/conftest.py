"""Shared fixtures: one desk-scale Born simulation reused across modules.

The session-scoped stack keeps the suite fast; tests treat these objects
as read-only.
"""

import pytest

from odtmotion import energy, simulate


DESK_N = 64
DESK_T = 100
DESK_PITCH = 0.15


@pytest.fixture(scope="session")
def desk_geom():
    return simulate.MeasurementGeometry(DESK_N, DESK_PITCH, 0.64, 1.33)


@pytest.fixture(scope="session")
def desk_phantom():
    return simulate.make_phantom(simulate.PhantomSpec(
        grid_n=DESK_N, pitch=DESK_PITCH))


@pytest.fixture(scope="session")
def desk_potential(desk_phantom):
    return simulate.n_to_f(desk_phantom)


@pytest.fixture(scope="session")
def desk_trajectory():
    return simulate.constant_rotation_trajectory(DESK_T, axis=(0, 1, 0))


@pytest.fixture(scope="session")
def born_stack(desk_potential, desk_geom, desk_trajectory):
    return simulate.born_stack(desk_potential, desk_geom, desk_trajectory)


@pytest.fixture(scope="session")
def polar_grid(born_stack):
    radii, angles = energy.default_polar_grid(DESK_N, born_stack.k0)
    grid = energy.nu_polar(born_stack, radii, angles)
    return energy.sobel_derivatives(grid)


@pytest.fixture(scope="session")
def energy_grids(born_stack):
    return [energy.nu_cartesian(born_stack.frame(t), born_stack.k0,
                                oversample=2)
            for t in range(born_stack.n_frames)]
