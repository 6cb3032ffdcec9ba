"""
Characteristic sweep of the stationary relaxation equation v1 df/dx = (M - f) / tau.

Along each velocity node the mild form is marched cell by cell. Inside a cell the
source M is the linear interpolant of its nodal values, and the Duhamel integral is
taken exactly, so a cell update reads

    f_out = E f_in + a M_in + b M_out,   s = h / (tau |v1|),
    E = e^{-s},  a = (1 - (1 + s) e^{-s}) / s,  b = (s - 1 + e^{-s}) / s.

All three weights are positive and E + a + b = 1, so the sweep preserves positivity
and reproduces constant states exactly.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .boundary import (
    BoundarySpec,
    InflowTraces,
    Regime,
    apply_boundary_diffusive,
    apply_boundary_inflow,
)
from .error_handler import ConfigurationError, ContractViolation
from .quadrature import SpatialGrid, VelocityGrid, half_space_moment, sup_l1_2_norm, trace_norms

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1e-2


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Values f(x_i, v_j) with shape (M + 1, N)."""

    values: np.ndarray
    spatial: SpatialGrid
    velocity: VelocityGrid

    def __post_init__(self):
        expected = (self.spatial.nodes.shape[0], self.velocity.size)
        if np.shape(self.values) != expected:
            raise ContractViolation(
                f"Field has shape {np.shape(self.values)}, expected {expected}"
            )

    @property
    def left_trace(self) -> np.ndarray:
        return self.values[0]

    @property
    def right_trace(self) -> np.ndarray:
        return self.values[-1]

    def with_values(self, values: np.ndarray) -> "DistributionField":
        return DistributionField(values=values, spatial=self.spatial, velocity=self.velocity)

    @classmethod
    def constant(cls, slice_values: np.ndarray, spatial: SpatialGrid, velocity: VelocityGrid):
        values = np.broadcast_to(np.asarray(slice_values, dtype=float),
                                 (spatial.nodes.shape[0], velocity.size)).copy()
        return cls(values=values, spatial=spatial, velocity=velocity)


def cell_weights(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact Duhamel weights (E, a, b) for optical cell widths s > 0.

    Small widths use Taylor series to avoid cancellation.
    """
    s = np.asarray(s, dtype=float)
    decay = np.exp(-s)
    small = s < SERIES_THRESHOLD
    safe = np.where(small, 1.0, s)
    em1 = np.expm1(-safe)
    a_direct = (-em1 - safe * np.exp(-safe)) / safe
    b_direct = (safe + em1) / safe
    a_series = s * (0.5 + s * (-1.0 / 3.0 + s * (1.0 / 8.0 + s * (-1.0 / 30.0 + s / 144.0))))
    b_series = s * (0.5 + s * (-1.0 / 6.0 + s * (1.0 / 24.0 + s * (-1.0 / 120.0 + s / 720.0))))
    return decay, np.where(small, a_series, a_direct), np.where(small, b_series, b_direct)


class TransportSweep:
    """Precomputed cell weights for one (tau, spatial grid, velocity grid) triple."""

    def __init__(self, tau: float, spatial: SpatialGrid, velocity: VelocityGrid):
        if not tau > 0:
            raise ConfigurationError(f"Relaxation time tau must be positive, got {tau}")
        self.logger = logging.getLogger(__name__)
        self.tau = float(tau)
        self.spatial = spatial
        self.velocity = velocity

        optical = spatial.spacing[:, None] / (self.tau * velocity.abs_v1[None, :])
        self.decay, self.a, self.b = cell_weights(optical)

    def __call__(self, traces: InflowTraces, gaussian: np.ndarray) -> DistributionField:
        """
        March the mild form for every velocity node.

        Args:
            traces: Incoming traces at both walls
            gaussian: Source values with shape (M + 1, N)

        Returns:
            DistributionField whose incoming traces equal the given ones
        """
        gaussian = np.asarray(gaussian, dtype=float)
        shape = (self.spatial.nodes.shape[0], self.velocity.size)
        if gaussian.shape != shape:
            raise ContractViolation(f"Source has shape {gaussian.shape}, expected {shape}")

        positive = self.velocity.positive
        negative = self.velocity.negative
        values = np.empty(shape)
        m = self.spatial.intervals

        values[0] = np.where(positive, traces.left, 0.0)
        for k in range(m):
            values[k + 1] = (self.decay[k] * values[k]
                             + self.a[k] * gaussian[k] + self.b[k] * gaussian[k + 1])

        backward = np.empty(shape)
        backward[m] = np.where(negative, traces.right, 0.0)
        for k in range(m - 1, -1, -1):
            backward[k] = (self.decay[k] * backward[k + 1]
                           + self.a[k] * gaussian[k + 1] + self.b[k] * gaussian[k])

        values = np.where(positive, values, backward)
        return DistributionField(values=values, spatial=self.spatial, velocity=self.velocity)


def sweep(traces: InflowTraces, gaussian_field: DistributionField, tau: float) -> DistributionField:
    """One transport solve against a lagged Gaussian source."""
    return TransportSweep(tau, gaussian_field.spatial, gaussian_field.velocity)(
        traces, gaussian_field.values
    )


def own_traces(f: DistributionField) -> InflowTraces:
    grid = f.velocity
    return InflowTraces(
        left=np.where(grid.positive, f.left_trace, 0.0),
        right=np.where(grid.negative, f.right_trace, 0.0),
    )


def with_incoming_traces(f: DistributionField, traces: InflowTraces) -> DistributionField:
    """Copy of f with the incoming boundary nodes replaced by the given traces."""
    grid = f.velocity
    values = f.values.copy()
    values[0] = np.where(grid.positive, traces.left, values[0])
    values[-1] = np.where(grid.negative, traces.right, values[-1])
    return f.with_values(values)


def boundary_defect(
    f: DistributionField,
    gaussian_field: DistributionField,
    spec: BoundarySpec,
    tau: float,
) -> float:
    """Inward trace norm (weight 1 + |v|^2) of f minus the boundary operator applied to f."""
    if spec.regime is Regime.DIFFUSIVE_DOMINANT:
        expected = apply_boundary_diffusive(f, gaussian_field.values, spec, tau)
    else:
        expected = apply_boundary_inflow(f, spec)
    actual = own_traces(f)
    norms = trace_norms(actual.left - expected.left, actual.right - expected.right, f.velocity)
    return norms.l1_vbr_minus


def residual(
    f: DistributionField,
    gaussian_field: DistributionField,
    tau: float,
    spec: Optional[BoundarySpec] = None,
) -> float:
    """
    Defect of f as a mild solution.

    The sup_x L^1_2 distance between f and the sweep of its own incoming traces against
    its own Gaussian, plus the boundary-condition defect when spec is given.
    """
    rebuilt = sweep(own_traces(f), gaussian_field, tau)
    defect = sup_l1_2_norm(f.values - rebuilt.values, f.velocity)
    if spec is not None:
        defect += boundary_defect(f, gaussian_field, spec, tau)
    return defect


def mass_flux(f: DistributionField) -> np.ndarray:
    """Integral of f v1 at every spatial node."""
    return half_space_moment(f.values, f.velocity, None, "v1")


def kernel_estimate_probe(tau: float, decay: float, x: float) -> float:
    """
    integral_0^x integral_{v1>0} (1/(tau v1)) e^{-(x-y)/(tau v1)} e^{-C v1^2} dv1 dy.

    The y-integral is exact, 1 - e^{-x/(tau v1)}; the v1-integral uses adaptive
    quadrature split at the transition v1 = x / tau.
    """
    if not tau > 0 or not decay > 0:
        raise ConfigurationError(f"Probe needs tau > 0 and C > 0, got tau={tau}, C={decay}")
    if x <= 0:
        return 0.0

    def integrand(v: float) -> float:
        if v <= 0:
            return 1.0
        return -np.expm1(-x / (tau * v)) * np.exp(-decay * v * v)

    split = x / tau
    inner, _ = integrate.quad(integrand, 0.0, split, limit=200)
    outer, _ = integrate.quad(integrand, split, np.inf, limit=200)
    return float(inner + outer)
