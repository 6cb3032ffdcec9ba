import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from esbgk_slab.boundary import (
    BoundarySpec,
    Regime,
    apply_boundary_diffusive,
    apply_boundary_inflow,
    build_boundary_spec,
    drifting_maxwellian,
    flux_control_factors,
    flux_ledger,
    inflow_sign,
    reflect,
    relaxation_integrals,
    resample_table,
    rescale_inflow_flux,
    restrict_to_inflow,
    wall_maxwellian,
)
from esbgk_slab.error_handler import (
    ConfigurationError,
    ContractViolation,
    DegenerateDataError,
    HypothesisViolationError,
)
from esbgk_slab.quadrature import half_space_moment
from esbgk_slab.transport import DistributionField

from .helpers import two_temperature_spec


def maxwellian_field(grid, spatial, temperature=1.0, drift=0.0):
    values = drifting_maxwellian(grid, 1.0, (drift, 0.0, 0.0), temperature)
    return DistributionField.constant(values, spatial, grid)


def test_inflow_sign():
    assert inflow_sign(0) == 1
    assert inflow_sign(1) == -1
    with pytest.raises(ConfigurationError):
        inflow_sign(2)


@pytest.mark.parametrize("side", [0, 1])
def test_wall_maxwellian_has_unit_flux(grid, side):
    wall = wall_maxwellian(1.3, side, grid)
    outgoing = grid.negative if side == 0 else grid.positive
    assert np.all(wall[outgoing] == 0.0)
    assert half_space_moment(wall, grid, None, "abs_v1") == pytest.approx(1.0, rel=1e-14)


def test_wall_maxwellian_rejects_nonpositive_temperature(grid):
    with pytest.raises(ConfigurationError):
        wall_maxwellian(0.0, 0, grid)


def test_drifting_maxwellian_flux_target(grid):
    values = drifting_maxwellian(grid, 2.0, (0.1, 0.0, 0.0), 1.5, side=1, flux=0.25)
    assert np.all(values[grid.positive] == 0.0)
    assert half_space_moment(values, grid, -1, "abs_v1") == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(ConfigurationError):
        drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), 1.0, flux=1.0)


def test_spec_rejects_off_simplex_delta(grid):
    with pytest.raises(ConfigurationError, match="simplex"):
        two_temperature_spec(grid, delta=(0.5, 0.3, 0.1))
    with pytest.raises(ConfigurationError):
        two_temperature_spec(grid, delta=(1.2, -0.2, 0.0))


def test_spec_rejects_bad_walls_and_zero_data(grid):
    with pytest.raises(ConfigurationError):
        two_temperature_spec(grid, wall=(1.0, 0.0))
    with pytest.raises(DegenerateDataError):
        build_boundary_spec(grid, (1.0, 0.0, 0.0), (1.0, 1.0), np.zeros(grid.size),
                            np.zeros(grid.size))


def test_spec_rejects_vertical_flows_in_inflow_regime(grid):
    f_left = drifting_maxwellian(grid, 1.0, (0.0, 0.4, 0.0), 1.0, side=0)
    f_right = drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), 1.0, side=1)
    with pytest.raises(ConfigurationError, match="vertical"):
        build_boundary_spec(grid, (1.0, 0.0, 0.0), (1.0, 1.0), f_left, f_right)
    spec = build_boundary_spec(grid, (0.0, 1.0, 0.0), (1.0, 1.0), f_left, f_right,
                               regime=Regime.DIFFUSIVE_DOMINANT)
    assert spec.regime is Regime.DIFFUSIVE_DOMINANT


def test_outgoing_data_is_discarded_with_warning(grid, caplog):
    full = drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), 1.0)
    with caplog.at_level(logging.WARNING, logger="esbgk_slab.boundary"):
        restricted = restrict_to_inflow(full, 0, grid)
    assert "outgoing" in caplog.text
    assert_array_equal(restricted, np.where(grid.positive, full, 0.0))
    with pytest.raises(ContractViolation):
        restrict_to_inflow(full[:-1], 0, grid)


def test_spec_serialisation(grid):
    spec = two_temperature_spec(grid)
    data = spec.to_dict(grid)
    assert data["delta"] == [1.0, 0.0, 0.0]
    assert data["regime"] == "inflow"
    assert data["inflow_flux_left"] == pytest.approx(0.5)
    assert data["inflow_flux_right"] == pytest.approx(0.5)
    assert isinstance(spec, BoundarySpec)


def test_rescale_inflow_flux(grid):
    spec = rescale_inflow_flux(two_temperature_spec(grid), grid, 0.7)
    assert spec.inflow_fluxes(grid)[0] == pytest.approx(0.7)
    assert spec.inflow_fluxes(grid)[1] == pytest.approx(0.5)


def test_resample_table_on_grid_nodes(grid):
    values = drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), 1.0)
    sampled = resample_table(grid, grid.nodes, values, 0)
    assert_array_equal(sampled, np.where(grid.positive, values, 0.0))
    scaled = resample_table(grid, grid.nodes, values, 0, mass=3.0)
    assert half_space_moment(scaled, grid) == pytest.approx(3.0)


def test_resample_table_validation(grid):
    with pytest.raises(ContractViolation):
        resample_table(grid, np.zeros((4, 2)), np.ones(4), 0)
    with pytest.raises(DegenerateDataError):
        resample_table(grid, np.zeros((2, 3)), np.array([1.0, -1.0]), 0)


def test_reflect_is_an_involution(grid):
    values = np.random.default_rng(1).uniform(size=grid.size)
    assert_array_equal(reflect(reflect(values, grid), grid), values)


def test_pure_inflow_returns_data(grid, spatial):
    spec = two_temperature_spec(grid)
    traces = apply_boundary_inflow(maxwellian_field(grid, spatial), spec)
    assert_array_equal(traces.left, spec.f_left)
    assert_array_equal(traces.right, spec.f_right)


def test_specular_reflection(grid, spatial):
    spec = two_temperature_spec(grid, delta=(0.0, 0.0, 1.0))
    f = maxwellian_field(grid, spatial, drift=-0.3)
    traces = apply_boundary_inflow(f, spec)
    expected_left = np.where(grid.positive, f.left_trace[grid.reflection], 0.0)
    assert_array_equal(traces.left, expected_left)
    assert np.all(traces.right[grid.positive] == 0.0)


def test_diffuse_reflection_conserves_wall_flux(grid, spatial):
    spec = two_temperature_spec(grid, delta=(0.0, 1.0, 0.0), regime=Regime.DIFFUSIVE_DOMINANT)
    f = maxwellian_field(grid, spatial, temperature=1.4, drift=-0.2)
    traces = apply_boundary_inflow(f, spec)
    outflux_left = half_space_moment(f.left_trace, grid, -1, "abs_v1")
    outflux_right = half_space_moment(f.right_trace, grid, 1, "abs_v1")
    assert half_space_moment(traces.left, grid, 1, "abs_v1") == pytest.approx(outflux_left)
    assert half_space_moment(traces.right, grid, -1, "abs_v1") == pytest.approx(outflux_right)


def test_flux_control_factors_closed_form(grid):
    spec = two_temperature_spec(grid, delta=(0.2, 0.8, 0.0), regime=Regime.DIFFUSIVE_DOMINANT,
                                flux=0.5)
    s_left, s_right = flux_control_factors(spec, grid, tau=10.0, relaxation_plus=0.3,
                                           relaxation_minus=-0.3)
    assert s_left == pytest.approx((0.8 + 0.2 * 0.5 - 0.3 / 10.0) / 1.8)
    assert s_right == pytest.approx((0.8 + 0.2 * 0.5 + 0.3 / 10.0) / 1.8)
    # with F_L + F_R = 1 and no net relaxation the factors sum to one
    assert s_left + s_right == pytest.approx(1.0)

    pure = two_temperature_spec(grid, delta=(0.0, 1.0, 0.0), regime=Regime.DIFFUSIVE_DOMINANT)
    assert flux_control_factors(pure, grid, 50.0, 0.0, 0.0) == pytest.approx((0.5, 0.5))


def test_relaxation_integrals_split_by_half_space(grid, spatial):
    f = np.zeros((spatial.nodes.shape[0], grid.size))
    gaussians = np.where(grid.positive, 1.0, 0.0)[None, :] * np.ones_like(f)
    plus, minus = relaxation_integrals(f, gaussians, spatial, grid)
    assert plus == pytest.approx(half_space_moment(np.ones(grid.size), grid, 1))
    assert minus == 0.0


def test_diffusive_update_rejects_nonpositive_flux_control(grid, spatial):
    spec = two_temperature_spec(grid, delta=(0.0, 1.0, 0.0), regime=Regime.DIFFUSIVE_DOMINANT)
    f = DistributionField.constant(np.zeros(grid.size), spatial, grid)
    gaussians = np.full(f.values.shape, 1.0)
    with pytest.raises(HypothesisViolationError) as excinfo:
        apply_boundary_diffusive(f, gaussians, spec, tau=1.0, iteration=4)
    assert excinfo.value.iteration == 4


def test_diffusive_update_warns_below_margin(grid, spatial, caplog):
    spec = two_temperature_spec(grid, delta=(0.0, 1.0, 0.0), regime=Regime.DIFFUSIVE_DOMINANT)
    f = DistributionField.constant(np.zeros(grid.size), spatial, grid)
    mass = half_space_moment(np.ones(grid.size), grid, 1)
    # relaxation integral of 0.4 on each half-space gives S = 0.5 - 0.2 = 0.3
    gaussians = np.full(f.values.shape, 0.4 / mass)
    with caplog.at_level(logging.WARNING, logger="esbgk_slab.boundary"):
        update = apply_boundary_diffusive(f, gaussians, spec, tau=1.0)
    assert update.s_left == pytest.approx(0.3)
    assert update.s_right == pytest.approx(0.3)
    assert "below 1/3" in caplog.text
    assert_allclose(update.left, 0.3 * spec.wall_left)


def test_flux_ledger_of_wall_maxwellian_field(grid, spatial):
    spec = two_temperature_spec(grid, delta=(0.0, 1.0, 0.0), regime=Regime.DIFFUSIVE_DOMINANT,
                                wall=(1.0, 1.0))
    f = DistributionField.constant(0.5 * spec.wall, spatial, grid)
    ledger = flux_ledger(f, spec)
    assert ledger.outflux_left == pytest.approx(0.5)
    assert ledger.outflux_right == pytest.approx(0.5)
    assert ledger.influx_left == pytest.approx(0.5)
    assert abs(ledger.flux_control_defect) < 1e-13
    assert ledger.discrepancy == pytest.approx(0.0, abs=1e-14)
    assert set(ledger.to_dict()) >= {"outflux_left", "flux_control_defect", "discrepancy"}
