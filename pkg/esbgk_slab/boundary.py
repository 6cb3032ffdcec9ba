"""
Boundary data and the mixed boundary operator.

At x = 0 the incoming half-space is v1 > 0, at x = 1 it is v1 < 0. Boundary slices are
stored on the full velocity grid with zeros on the outgoing half-space.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .error_handler import (
    ConfigurationError,
    ContractViolation,
    DegenerateDataError,
    HypothesisViolationError,
)
from .quadrature import SpatialGrid, VelocityGrid, half_space_moment

if TYPE_CHECKING:
    from .transport import DistributionField

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
S_MARGIN = 1.0 / 3.0


class Regime(str, Enum):
    INFLOW_DOMINANT = "inflow"
    DIFFUSIVE_DOMINANT = "diffusive"


def inflow_sign(side: int) -> int:
    """Sign of v1 on the incoming half-space of a wall (0 -> +1, 1 -> -1)."""
    if side not in (0, 1):
        raise ConfigurationError(f"Wall side must be 0 or 1, got {side}")
    return 1 if side == 0 else -1


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """Mixture weights, wall temperatures, inflow data and regime."""

    delta: tuple[float, float, float]
    wall_temperatures: tuple[float, float]
    f_left: np.ndarray
    f_right: np.ndarray
    regime: Regime
    wall_left: np.ndarray
    wall_right: np.ndarray

    @property
    def f_lr(self) -> np.ndarray:
        return self.f_left + self.f_right

    @property
    def wall(self) -> np.ndarray:
        return self.wall_left + self.wall_right

    def inflow_fluxes(self, grid: VelocityGrid) -> tuple[float, float]:
        """(integral of f_L |v1| over v1 > 0, integral of f_R |v1| over v1 < 0)."""
        return (float(half_space_moment(self.f_left, grid, 1, "abs_v1")),
                float(half_space_moment(self.f_right, grid, -1, "abs_v1")))

    def to_dict(self, grid: VelocityGrid) -> dict:
        flux_left, flux_right = self.inflow_fluxes(grid)
        return {
            "delta": list(self.delta),
            "wall_temperatures": list(self.wall_temperatures),
            "regime": self.regime.value,
            "inflow_flux_left": flux_left,
            "inflow_flux_right": flux_right,
        }


@dataclass(frozen=True, eq=False)
class InflowTraces:
    """Incoming traces at x = 0 (v1 > 0) and x = 1 (v1 < 0)."""

    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True, eq=False)
class DiffusiveUpdate(InflowTraces):
    s_left: float = 0.0
    s_right: float = 0.0


def wall_maxwellian(wall_temperature: float, side: int, grid: VelocityGrid) -> np.ndarray:
    """
    Wall Maxwellian exp(-|v|^2 / (2 T_w)) on the incoming half-space of a wall,
    rescaled so its |v1|-flux on the grid is exactly 1.

    Raises:
        ConfigurationError: If T_w <= 0
    """
    if not wall_temperature > 0:
        raise ConfigurationError(f"Wall temperature must be positive, got {wall_temperature}")
    mask = grid.half_mask(inflow_sign(side))
    shape = np.where(mask, np.exp(-grid.speed_sq / (2.0 * wall_temperature)), 0.0)
    flux = half_space_moment(shape, grid, None, "abs_v1")
    return shape / flux


def drifting_maxwellian(
    grid: VelocityGrid,
    density: float,
    velocity: Sequence[float],
    temperature: float,
    side: Optional[int] = None,
    flux: Optional[float] = None,
) -> np.ndarray:
    """
    Sampled Maxwellian rho (2 pi T)^(-3/2) exp(-|v - u|^2 / (2T)).

    Args:
        grid: Velocity grid
        density: Number density
        velocity: Drift velocity (3 components)
        temperature: Temperature
        side: Restrict to the incoming half-space of this wall when given
        flux: Rescale to this half-space |v1|-flux when given (requires side)
    """
    if not temperature > 0:
        raise ConfigurationError(f"Maxwellian temperature must be positive, got {temperature}")
    if density < 0:
        raise ConfigurationError(f"Maxwellian density must be nonnegative, got {density}")
    u = np.asarray(velocity, dtype=float)
    values = density * (2.0 * np.pi * temperature) ** -1.5 * np.exp(
        -np.sum((grid.nodes - u) ** 2, axis=1) / (2.0 * temperature)
    )
    if side is not None:
        values = np.where(grid.half_mask(inflow_sign(side)), values, 0.0)
    if flux is not None:
        if side is None:
            raise ConfigurationError("A flux target needs the wall side")
        current = half_space_moment(values, grid, None, "abs_v1")
        if current <= 0:
            raise DegenerateDataError("Cannot rescale a Maxwellian with zero flux")
        values = values * (flux / current)
    return values


def resample_table(
    grid: VelocityGrid,
    nodes: np.ndarray,
    values: np.ndarray,
    side: int,
    mass: Optional[float] = None,
) -> np.ndarray:
    """
    Nearest-node resampling of tabulated point values onto the incoming half-space.

    Every grid node takes the value of its nearest table node. When mass is given the
    result is rescaled so its grid integral equals mass.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != 3 or nodes.shape[0] != values.shape[0]:
        raise ContractViolation(
            f"Table needs (K, 3) nodes and K values, got {nodes.shape} and {values.shape}"
        )
    if np.any(values < 0):
        raise DegenerateDataError("Tabulated boundary data must be nonnegative")

    _, nearest = cKDTree(nodes).query(grid.nodes)
    sampled = np.where(grid.half_mask(inflow_sign(side)), values[nearest], 0.0)
    if mass is not None:
        current = half_space_moment(sampled, grid)
        if current <= 0:
            raise DegenerateDataError("Resampled table has zero mass on the incoming half-space")
        sampled = sampled * (mass / current)
    return sampled


def restrict_to_inflow(values: np.ndarray, side: int, grid: VelocityGrid) -> np.ndarray:
    """Zero a slice on the outgoing half-space of a wall."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.size,):
        raise ContractViolation(f"Boundary slice has shape {values.shape}, expected ({grid.size},)")
    mask = grid.half_mask(inflow_sign(side))
    if np.any(values[~mask] != 0):
        logger.warning(f"Discarding boundary data on the outgoing half-space of wall {side}")
    return np.where(mask, values, 0.0)


def build_boundary_spec(
    grid: VelocityGrid,
    delta: Sequence[float],
    wall_temperatures: Sequence[float],
    f_left: np.ndarray,
    f_right: np.ndarray,
    regime: Regime = Regime.INFLOW_DOMINANT,
) -> BoundarySpec:
    """
    Validate boundary data and assemble a BoundarySpec.

    Raises:
        ConfigurationError: On simplex, wall temperature or vertical-flow violations
        DegenerateDataError: If the inflow data is negative or identically zero
    """
    delta = tuple(float(d) for d in delta)
    if len(delta) != 3:
        raise ConfigurationError(f"delta needs three weights, got {delta}")
    if min(delta) < 0:
        raise ConfigurationError(f"delta weights must be nonnegative, got {delta}")
    total = sum(delta)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise ConfigurationError(
            f"delta must lie on the simplex delta1 + delta2 + delta3 = 1, got sum {total!r}"
        )

    wall_temperatures = tuple(float(t) for t in wall_temperatures)
    if len(wall_temperatures) != 2 or min(wall_temperatures) <= 0:
        raise ConfigurationError(
            f"Two positive wall temperatures are required, got {wall_temperatures}"
        )

    regime = Regime(regime)
    f_left = restrict_to_inflow(f_left, 0, grid)
    f_right = restrict_to_inflow(f_right, 1, grid)
    f_lr = f_left + f_right
    if np.any(f_lr < 0):
        raise DegenerateDataError("Inflow data must be nonnegative")
    if not np.any(f_lr > 0):
        raise DegenerateDataError("Inflow data is identically zero")

    if regime is Regime.INFLOW_DOMINANT:
        for name, data in (("f_L", f_left), ("f_R", f_right)):
            scale = 1.0 + float(half_space_moment(data, grid, None, np.sqrt(grid.speed_sq)))
            for i in (2, 3):
                vertical = float(half_space_moment(data, grid, None, f"v{i}"))
                if abs(vertical) > 1e-9 * scale:
                    raise ConfigurationError(
                        f"Inflow data must not induce vertical flows: "
                        f"integral of {name} v{i} is {vertical:.3e}"
                    )

    return BoundarySpec(
        delta=delta,
        wall_temperatures=wall_temperatures,
        f_left=f_left,
        f_right=f_right,
        regime=regime,
        wall_left=wall_maxwellian(wall_temperatures[0], 0, grid),
        wall_right=wall_maxwellian(wall_temperatures[1], 1, grid),
    )


def rescale_inflow_flux(spec: BoundarySpec, grid: VelocityGrid, target_left_flux: float) -> BoundarySpec:
    """Copy of spec with f_L scaled to the given |v1|-flux."""
    flux_left, _ = spec.inflow_fluxes(grid)
    if flux_left <= 0 or target_left_flux <= 0:
        raise ConfigurationError(
            f"Cannot rescale f_L from flux {flux_left} to flux {target_left_flux}"
        )
    return replace(spec, f_left=spec.f_left * (target_left_flux / flux_left))


def reflect(trace: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """f(Rv) with R(v1, v2, v3) = (-v1, v2, v3)."""
    return np.asarray(trace)[..., grid.reflection]


def _outflux(trace: np.ndarray, side: int, grid: VelocityGrid) -> float:
    return float(half_space_moment(trace, grid, -inflow_sign(side), "abs_v1"))


def apply_boundary_inflow(f_prev: "DistributionField", spec: BoundarySpec) -> InflowTraces:
    """
    Inflow-dominant boundary update.

    f(0, v) = d1 f_L + d2 (outflux at 0) M_w(0) + d3 f_prev(0, Rv) for v1 > 0, and the
    mirror image at x = 1 for v1 < 0.
    """
    grid = f_prev.velocity
    d1, d2, d3 = spec.delta
    left_prev, right_prev = f_prev.left_trace, f_prev.right_trace

    left = (d1 * spec.f_left
            + d2 * _outflux(left_prev, 0, grid) * spec.wall_left
            + d3 * np.where(grid.positive, reflect(left_prev, grid), 0.0))
    right = (d1 * spec.f_right
             + d2 * _outflux(right_prev, 1, grid) * spec.wall_right
             + d3 * np.where(grid.negative, reflect(right_prev, grid), 0.0))
    return InflowTraces(left=left, right=right)


def relaxation_integrals(
    f_values: np.ndarray,
    gaussians: np.ndarray,
    spatial: SpatialGrid,
    grid: VelocityGrid,
) -> tuple[float, float]:
    """Trapezoid space-velocity integrals of M - f over v1 > 0 and over v1 < 0."""
    defect = np.asarray(gaussians) - np.asarray(f_values)
    per_x_plus = half_space_moment(defect, grid, 1)
    per_x_minus = half_space_moment(defect, grid, -1)
    tw = spatial.trapezoid_weights
    return float(np.sum(tw * per_x_plus)), float(np.sum(tw * per_x_minus))


def flux_control_factors(
    spec: BoundarySpec,
    grid: VelocityGrid,
    tau: float,
    relaxation_plus: float,
    relaxation_minus: float,
) -> tuple[float, float]:
    """The flux-control coefficients S_L and S_R of the diffusive reformulation."""
    d1 = spec.delta[0]
    flux_left, flux_right = spec.inflow_fluxes(grid)
    base = (1.0 - d1) / (2.0 - d1)
    s_left = (base + d1 / (2.0 - d1) * flux_right
              - relaxation_plus / (tau * (2.0 - d1)))
    s_right = (base + d1 / (2.0 - d1) * flux_left
               - relaxation_minus / (tau * (2.0 - d1)))
    return s_left, s_right


def apply_boundary_diffusive(
    f_prev: "DistributionField",
    gaussians: np.ndarray,
    spec: BoundarySpec,
    tau: float,
    iteration: Optional[int] = None,
) -> DiffusiveUpdate:
    """
    Diffusive-dominant boundary update with flux control.

    Traces are d1 f_L + d2 S_L M_w(0) + d3 f_prev(0, Rv) and the mirror image at x = 1,
    where S_L, S_R absorb the space-velocity integral of M(f_prev) - f_prev.

    Raises:
        HypothesisViolationError: If S_L or S_R is not positive
    """
    grid = f_prev.velocity
    relax_plus, relax_minus = relaxation_integrals(f_prev.values, gaussians, f_prev.spatial, grid)
    s_left, s_right = flux_control_factors(spec, grid, tau, relax_plus, relax_minus)

    if s_left <= 0 or s_right <= 0:
        raise HypothesisViolationError(
            f"Flux-control factors must be positive, got S_L = {s_left:.6g}, S_R = {s_right:.6g}; "
            f"delta1 or 1/tau is too large",
            iteration=iteration,
        )
    if min(s_left, s_right) < S_MARGIN:
        logger.warning(f"Flux-control factor below 1/3: S_L = {s_left:.6g}, S_R = {s_right:.6g}")

    d1, d2, d3 = spec.delta
    left_prev, right_prev = f_prev.left_trace, f_prev.right_trace
    left = (d1 * spec.f_left + d2 * s_left * spec.wall_left
            + d3 * np.where(grid.positive, reflect(left_prev, grid), 0.0))
    right = (d1 * spec.f_right + d2 * s_right * spec.wall_right
             + d3 * np.where(grid.negative, reflect(right_prev, grid), 0.0))
    return DiffusiveUpdate(left=left, right=right, s_left=s_left, s_right=s_right)


@dataclass(frozen=True)
class FluxLedger:
    influx_left: float
    influx_right: float
    outflux_left: float
    outflux_right: float
    discrepancy: float
    extra: dict = field(default_factory=dict)

    @property
    def flux_control_defect(self) -> float:
        return self.outflux_left + self.outflux_right - 1.0

    def to_dict(self) -> dict:
        return {
            "influx_left": self.influx_left,
            "influx_right": self.influx_right,
            "outflux_left": self.outflux_left,
            "outflux_right": self.outflux_right,
            "discrepancy": self.discrepancy,
            "flux_control_defect": self.flux_control_defect,
            **self.extra,
        }


def flux_ledger(f: "DistributionField", spec: BoundarySpec) -> FluxLedger:
    """Half-space |v1|-fluxes at both walls and the inflow flux discrepancy."""
    grid = f.velocity
    flux_left, flux_right = spec.inflow_fluxes(grid)
    return FluxLedger(
        influx_left=float(half_space_moment(f.left_trace, grid, 1, "abs_v1")),
        influx_right=float(half_space_moment(f.right_trace, grid, -1, "abs_v1")),
        outflux_left=_outflux(f.left_trace, 0, grid),
        outflux_right=_outflux(f.right_trace, 1, grid),
        discrepancy=abs(flux_left - flux_right),
    )
