"""
Velocity and slab discretisation.

The velocity grid is a tensor product of Gauss-Legendre rules on the truncated cube
[-V, V]^3. Every reduction in this module is a numpy sum over the last axis in
node order, so repeated evaluations are bit-identical.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .error_handler import ConfigurationError, ContractViolation, DegenerateDataError
from .tensor_math import max_eigenvalue

logger = logging.getLogger(__name__)

WeightName = Literal["one", "abs_v1", "bracket", "energy", "v1", "v2", "v3"]
Weight = Union[WeightName, np.ndarray]

# e^{-1/|v1|} below this is treated as "concentrated near v1 = 0" by the P1 report
NEAR_AXIS_KERNEL = 1e-3


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Truncated tensor-product velocity quadrature closed under v1 -> -v1."""

    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    counts: tuple[int, int, int]
    reflection: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def v1(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def abs_v1(self) -> np.ndarray:
        return np.abs(self.nodes[:, 0])

    @property
    def speed_sq(self) -> np.ndarray:
        return np.sum(self.nodes ** 2, axis=1)

    @property
    def bracket(self) -> np.ndarray:
        """1 + |v|^2."""
        return 1.0 + self.speed_sq

    @property
    def positive(self) -> np.ndarray:
        return self.nodes[:, 0] > 0.0

    @property
    def negative(self) -> np.ndarray:
        return self.nodes[:, 0] < 0.0

    def half_mask(self, sign: Optional[int]) -> np.ndarray:
        if sign is None or sign == 0:
            return np.ones(self.size, dtype=bool)
        if sign > 0:
            return self.positive
        return self.negative

    def to_dict(self) -> dict:
        return {"cutoff": self.cutoff, "counts": list(self.counts), "size": self.size}


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Nodes 0 = x_0 < ... < x_M = 1 of the slab."""

    nodes: np.ndarray

    @property
    def intervals(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def trapezoid_weights(self) -> np.ndarray:
        h = self.spacing
        weights = np.zeros_like(self.nodes)
        weights[:-1] += 0.5 * h
        weights[1:] += 0.5 * h
        return weights


def _symmetric_legendre(count: int, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(count)
    # exact mirror symmetry so reflected nodes and weights coincide bitwise
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return cutoff * x, cutoff * w


def build_velocity_grid(cutoff: float, counts: tuple[int, int, int] = (24, 16, 16)) -> VelocityGrid:
    """
    Build a Gauss-Legendre velocity grid on [-cutoff, cutoff]^3.

    Args:
        cutoff: Half-width V of the truncation box
        counts: Node counts per axis; the v1 count must be even

    Returns:
        VelocityGrid with nodes in C order over (v1, v2, v3)

    Raises:
        ConfigurationError: If the cutoff or counts are invalid
    """
    if not np.isfinite(cutoff) or cutoff <= 0:
        raise ConfigurationError(f"Velocity cutoff must be positive, got {cutoff}")
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3:
        raise ConfigurationError(f"Velocity grid needs three axis counts, got {counts}")
    if min(counts) < 4:
        raise ConfigurationError(f"Every axis needs at least 4 nodes, got {counts}")
    if counts[0] % 2:
        raise ConfigurationError(
            f"The v1 node count must be even so no node sits on v1 = 0, got {counts[0]}"
        )

    axes = [_symmetric_legendre(n, float(cutoff)) for n in counts]
    v1, v2, v3 = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    w1, w2, w3 = np.meshgrid(axes[0][1], axes[1][1], axes[2][1], indexing="ij")
    nodes = np.stack([v1.ravel(), v2.ravel(), v3.ravel()], axis=1)
    weights = (w1 * w2 * w3).ravel()

    reflection = np.arange(nodes.shape[0]).reshape(counts)[::-1].ravel()

    logger.debug(f"Velocity grid: cutoff={cutoff}, counts={counts}, {nodes.shape[0]} nodes")
    return VelocityGrid(
        nodes=nodes,
        weights=weights,
        cutoff=float(cutoff),
        counts=counts,
        reflection=reflection,
    )


def build_spatial_grid(intervals: int = 64) -> SpatialGrid:
    """Uniform slab grid with the given number of intervals."""
    if int(intervals) != intervals or intervals < 1:
        raise ConfigurationError(f"Spatial intervals must be a positive integer, got {intervals}")
    return SpatialGrid(nodes=np.linspace(0.0, 1.0, int(intervals) + 1))


def _weight_values(grid: VelocityGrid, weight: Weight) -> np.ndarray:
    if isinstance(weight, str):
        if weight == "one":
            return np.ones(grid.size)
        if weight == "abs_v1":
            return grid.abs_v1
        if weight == "bracket":
            return grid.bracket
        if weight == "energy":
            return grid.speed_sq
        if weight in ("v1", "v2", "v3"):
            return grid.nodes[:, int(weight[1]) - 1]
        raise ValueError(f"Unknown moment weight '{weight}'")
    weight = np.asarray(weight, dtype=float)
    if weight.shape[-1] != grid.size:
        raise ContractViolation(
            f"Weight has {weight.shape[-1]} entries but the grid has {grid.size} nodes"
        )
    return weight


def half_space_moment(
    values: np.ndarray,
    grid: VelocityGrid,
    sign: Optional[int] = None,
    weight: Weight = "one",
) -> np.ndarray:
    """
    Integrate values against a weight over one velocity half-space.

    Args:
        values: Array of shape (..., N) on the velocity grid
        grid: Velocity grid
        sign: +1 for v1 > 0, -1 for v1 < 0, None for all of velocity space
        weight: A named weight or an array of length N

    Returns:
        Moment with the leading shape of values

    Raises:
        ContractViolation: If the last axis does not match the grid
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.size:
        raise ContractViolation(
            f"Slice has {values.shape[-1]} entries but the grid has {grid.size} nodes"
        )
    quad = np.where(grid.half_mask(sign), grid.weights * _weight_values(grid, weight), 0.0)
    return np.sum(values * quad, axis=-1)


@dataclass(frozen=True)
class TraceNorms:
    """Outward (+) and inward (-) boundary trace norms."""

    l1_v1_plus: float
    l1_v1_minus: float
    l1_vbr_plus: float
    l1_vbr_minus: float

    @property
    def l1_v1(self) -> float:
        return self.l1_v1_plus + self.l1_v1_minus

    @property
    def l1_vbr(self) -> float:
        return self.l1_vbr_plus + self.l1_vbr_minus

    def to_dict(self) -> dict:
        return {
            "l1_v1_plus": self.l1_v1_plus,
            "l1_v1_minus": self.l1_v1_minus,
            "l1_vbr_plus": self.l1_vbr_plus,
            "l1_vbr_minus": self.l1_vbr_minus,
        }


def trace_norms(left: np.ndarray, right: np.ndarray, grid: VelocityGrid) -> TraceNorms:
    """
    Trace norms of a field from its slices at x = 0 and x = 1.

    Outward means v1 < 0 at x = 0 and v1 > 0 at x = 1; inward is the complement.
    """
    left = np.abs(np.asarray(left, dtype=float))
    right = np.abs(np.asarray(right, dtype=float))

    def norm(weight: WeightName, outward: bool) -> float:
        left_sign, right_sign = (-1, 1) if outward else (1, -1)
        return float(half_space_moment(left, grid, left_sign, weight)
                     + half_space_moment(right, grid, right_sign, weight))

    return TraceNorms(
        l1_v1_plus=norm("abs_v1", True),
        l1_v1_minus=norm("abs_v1", False),
        l1_vbr_plus=norm("bracket", True),
        l1_vbr_minus=norm("bracket", False),
    )


def sup_l1_2_norm(values: np.ndarray, grid: VelocityGrid) -> float:
    """sup_x of the v1 > 0 part of the L^1_2 norm plus sup_x of the v1 < 0 part."""
    values = np.abs(np.atleast_2d(np.asarray(values, dtype=float)))
    plus = half_space_moment(values, grid, 1, "bracket")
    minus = half_space_moment(values, grid, -1, "bracket")
    return float(np.max(plus) + np.max(minus))


@dataclass(frozen=True)
class BoundaryConstants:
    """Explicit constants built from the boundary data and the wall Maxwellians."""

    a_l1: float
    a_l2: float
    gamma_l1: float
    gamma_l2: float
    a_half_1: float
    a_half_2: float
    C_LR1: float
    C_LR2: float
    f_lr_v1_norm: float
    f_lr_vbr_norm: float
    wall_v1_norm: float
    wall_vbr_norm: float
    near_axis_fraction: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _kernel(grid: VelocityGrid) -> np.ndarray:
    return np.exp(-1.0 / grid.abs_v1)


def _second_moment_matrix(values: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    weighted = values * grid.weights
    return np.einsum("n,ni,nj->ij", weighted, grid.nodes, grid.nodes)


def anisotropy_infimum(values: np.ndarray, grid: VelocityGrid) -> float:
    """
    inf over unit kappa of the integral of e^{-1/|v1|} w (|v|^2 - (v.kappa)^2).

    With A the kernel-weighted second moment matrix this equals tr(A) - lambda_max(A).
    """
    a = _second_moment_matrix(_kernel(grid) * values, grid)
    return float(np.trace(a) - max_eigenvalue(a))


def boundary_constants(f_lr: np.ndarray, wall: np.ndarray, grid: VelocityGrid) -> BoundaryConstants:
    """
    Constants of the existence theory for given boundary data.

    Args:
        f_lr: Inflow data on the full grid (f_L on v1 > 0, f_R on v1 < 0)
        wall: Wall Maxwellians on the full grid (M_w(0) on v1 > 0, M_w(1) on v1 < 0)
        grid: Velocity grid

    Returns:
        BoundaryConstants

    Raises:
        DegenerateDataError: If f_lr is negative somewhere or identically zero
    """
    f_lr = np.asarray(f_lr, dtype=float)
    wall = np.asarray(wall, dtype=float)
    for name, data in (("f_LR", f_lr), ("M_w", wall)):
        if data.shape != (grid.size,):
            raise ContractViolation(f"{name} has shape {data.shape}, expected ({grid.size},)")
    if np.any(f_lr < 0):
        raise DegenerateDataError("Inflow data f_LR must be nonnegative")
    if not np.any(f_lr > 0):
        raise DegenerateDataError("Inflow data f_LR is identically zero")

    kernel = _kernel(grid)
    kernel_flux = kernel * grid.abs_v1

    f_v1 = float(half_space_moment(f_lr, grid, None, "abs_v1"))
    f_vbr = float(half_space_moment(f_lr, grid, None, "bracket"))
    wall_v1 = float(half_space_moment(wall, grid, None, "abs_v1"))
    wall_vbr = float(half_space_moment(wall, grid, None, "bracket"))

    mass = float(half_space_moment(f_lr, grid))
    near_axis = float(half_space_moment(np.where(kernel < NEAR_AXIS_KERNEL, f_lr, 0.0), grid))
    near_axis_fraction = near_axis / mass
    if near_axis_fraction > 0.1:
        logger.warning(
            f"{100 * near_axis_fraction:.1f}% of the inflow mass sits where "
            f"e^(-1/|v1|) < {NEAR_AXIS_KERNEL}; lower bounds will be weak"
        )

    constants = BoundaryConstants(
        a_l1=float(half_space_moment(f_lr, grid, None, kernel)),
        a_l2=0.5 * float(half_space_moment(wall, grid, None, kernel)),
        gamma_l1=float(half_space_moment(f_lr, grid, 1, kernel_flux)
                       * half_space_moment(f_lr, grid, -1, kernel_flux)),
        gamma_l2=float(half_space_moment(wall, grid, 1, kernel_flux)
                       * half_space_moment(wall, grid, -1, kernel_flux)),
        a_half_1=anisotropy_infimum(f_lr, grid),
        a_half_2=anisotropy_infimum(wall, grid),
        C_LR1=f_vbr * wall_vbr,
        C_LR2=f_v1 + wall_vbr,
        f_lr_v1_norm=f_v1,
        f_lr_vbr_norm=f_vbr,
        wall_v1_norm=wall_v1,
        wall_vbr_norm=wall_vbr,
        near_axis_fraction=near_axis_fraction,
    )
    logger.debug(f"Boundary constants: {constants}")
    return constants
