import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from esbgk_slab.boundary import drifting_maxwellian, wall_maxwellian
from esbgk_slab.error_handler import ConfigurationError, ContractViolation, DegenerateDataError
from esbgk_slab.quadrature import (
    anisotropy_infimum,
    boundary_constants,
    build_spatial_grid,
    build_velocity_grid,
    half_space_moment,
    sup_l1_2_norm,
    trace_norms,
)


@pytest.mark.parametrize(
    "cutoff, counts",
    [(0.0, (12, 12, 12)), (-1.0, (12, 12, 12)), (8.0, (13, 12, 12)), (8.0, (12, 2, 12))],
)
def test_invalid_velocity_grids(cutoff, counts):
    with pytest.raises(ConfigurationError):
        build_velocity_grid(cutoff, counts)


def test_grid_layout(grid):
    assert grid.size == 12 ** 3
    assert grid.nodes.shape == (grid.size, 3)
    assert not np.any(grid.v1 == 0.0)
    assert np.count_nonzero(grid.positive) == np.count_nonzero(grid.negative) == grid.size // 2
    assert grid.to_dict() == {"cutoff": 6.0, "counts": [12, 12, 12], "size": grid.size}


def test_reflection_is_exact_mirror(grid):
    reflected = grid.nodes[grid.reflection]
    assert np.array_equal(reflected[:, 0], -grid.v1)
    assert np.array_equal(reflected[:, 1:], grid.nodes[:, 1:])
    assert np.array_equal(grid.weights[grid.reflection], grid.weights)
    assert np.array_equal(grid.reflection[grid.reflection], np.arange(grid.size))


def test_odd_transverse_counts_are_allowed():
    grid = build_velocity_grid(6.0, (12, 5, 5))
    assert np.any(np.all(grid.nodes[:, 1:] == 0.0, axis=1))


def test_gaussian_moments(fine_grid):
    grid = fine_grid
    values = np.exp(-0.5 * grid.speed_sq)
    norm = (2.0 * math.pi) ** 1.5
    assert half_space_moment(values, grid) == pytest.approx(norm, rel=1e-8)
    assert half_space_moment(values, grid, None, "energy") == pytest.approx(3 * norm, rel=1e-8)
    # |v1|-flux over one half-space is 2 pi
    assert half_space_moment(values, grid, 1, "abs_v1") == pytest.approx(2 * math.pi, rel=1e-8)
    assert abs(half_space_moment(values, grid, None, "v1")) < 1e-12


def test_half_spaces_add_up(grid):
    rng = np.random.default_rng(0)
    values = rng.uniform(size=(4, grid.size))
    total = half_space_moment(values, grid, None, "bracket")
    halves = (half_space_moment(values, grid, 1, "bracket")
              + half_space_moment(values, grid, -1, "bracket"))
    assert_allclose(halves, total, rtol=1e-13)


def test_half_space_moment_checks_shapes(grid):
    with pytest.raises(ContractViolation):
        half_space_moment(np.ones(grid.size + 1), grid)
    with pytest.raises(ContractViolation):
        half_space_moment(np.ones(grid.size), grid, None, np.ones(3))
    with pytest.raises(ValueError):
        half_space_moment(np.ones(grid.size), grid, None, "cubic")


def test_spatial_grid(spatial):
    assert spatial.intervals == 16
    assert spatial.nodes[0] == 0.0 and spatial.nodes[-1] == 1.0
    assert spatial.trapezoid_weights.sum() == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ConfigurationError):
        build_spatial_grid(0)


def test_trace_norms_of_symmetric_field(fine_grid):
    grid = fine_grid
    values = drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), 1.0)
    norms = trace_norms(values, values, grid)
    assert norms.l1_v1_plus == pytest.approx(norms.l1_v1_minus, rel=1e-13)
    assert norms.l1_vbr_plus == pytest.approx(norms.l1_vbr_minus, rel=1e-13)
    # both walls together carry twice the half-space flux 1/sqrt(2 pi)
    assert norms.l1_v1_plus == pytest.approx(2.0 / math.sqrt(2.0 * math.pi), rel=1e-6)


def test_sup_l1_2_norm_takes_halfwise_suprema(grid):
    values = np.zeros((3, grid.size))
    values[0] = np.where(grid.positive, 1.0, 0.0)
    values[2] = np.where(grid.negative, 2.0, 0.0)
    plus = half_space_moment(np.ones(grid.size), grid, 1, "bracket")
    assert sup_l1_2_norm(values, grid) == pytest.approx(3.0 * plus, rel=1e-13)


def _constants(grid, t_left=1.0, t_right=1.2):
    f_lr = (drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), t_left, side=0)
            + drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), t_right, side=1))
    wall = wall_maxwellian(1.0, 0, grid) + wall_maxwellian(1.2, 1, grid)
    return f_lr, wall, boundary_constants(f_lr, wall, grid)


def test_boundary_constants_definitions(grid):
    f_lr, wall, c = _constants(grid)
    kernel = np.exp(-1.0 / grid.abs_v1)
    assert c.wall_v1_norm == pytest.approx(2.0, rel=1e-13)
    assert c.C_LR1 == pytest.approx(c.f_lr_vbr_norm * c.wall_vbr_norm)
    assert c.C_LR2 == pytest.approx(c.f_lr_v1_norm + c.wall_vbr_norm)
    assert c.a_l1 == pytest.approx(np.sum(grid.weights * kernel * f_lr))
    assert c.a_l2 == pytest.approx(0.5 * np.sum(grid.weights * kernel * wall))
    assert 0.0 < c.a_l1 < half_space_moment(f_lr, grid)
    assert c.gamma_l1 > 0 and c.gamma_l2 > 0
    assert 0.0 <= c.near_axis_fraction < 0.1


def test_anisotropy_infimum_against_sphere_sampling(grid):
    rng = np.random.default_rng(11)
    kernel = np.exp(-1.0 / grid.abs_v1)
    directions = rng.normal(size=(4000, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    projected = (grid.nodes @ directions.T) ** 2
    for _ in range(20):
        values = np.exp(-0.5 * grid.speed_sq / rng.uniform(0.5, 2.0)) * rng.uniform(0.2, 1.0, grid.size)
        weighted = grid.weights * kernel * values
        base = np.sum(weighted * grid.speed_sq)
        oracle = float(np.min(base - weighted @ projected))
        exact = anisotropy_infimum(values, grid)
        assert oracle >= exact - 1e-8 * base
        assert oracle - exact <= 1e-2 * base


def test_boundary_constants_reject_bad_data(grid):
    wall = wall_maxwellian(1.0, 0, grid) + wall_maxwellian(1.0, 1, grid)
    with pytest.raises(DegenerateDataError):
        boundary_constants(np.zeros(grid.size), wall, grid)
    bad = np.ones(grid.size)
    bad[0] = -1.0
    with pytest.raises(DegenerateDataError):
        boundary_constants(bad, wall, grid)
    with pytest.raises(ContractViolation):
        boundary_constants(np.ones(3), wall, grid)
