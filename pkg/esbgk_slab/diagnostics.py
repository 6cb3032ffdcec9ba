"""
Norms, solution-space ledger and convergence diagnostics for the fixed-point iteration.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .boundary import BoundarySpec, Regime
from .gaussian_closure import NU_MIN, equivalence_bounds
from .quadrature import BoundaryConstants, half_space_moment, sup_l1_2_norm, trace_norms
from .tensor_math import symmetric_eigenvalues, symmetrize
from .transport import DistributionField, mass_flux

logger = logging.getLogger(__name__)

# differences below this multiple of the iterate norm are roundoff
ROUNDOFF_FLOOR = 1e-13


@dataclass(frozen=True)
class CompositeNorm:
    """sup_x L^1_2 norm plus the two full trace norms."""

    sup_l12: float
    trace_v1: float
    trace_vbr: float

    @property
    def total(self) -> float:
        return self.sup_l12 + self.trace_v1 + self.trace_vbr

    def to_dict(self) -> dict:
        return {
            "sup_l12": self.sup_l12,
            "trace_v1": self.trace_v1,
            "trace_vbr": self.trace_vbr,
            "total": self.total,
        }


def composite_norm(f: DistributionField) -> CompositeNorm:
    grid = f.velocity
    traces = trace_norms(f.left_trace, f.right_trace, grid)
    return CompositeNorm(
        sup_l12=sup_l1_2_norm(f.values, grid),
        trace_v1=traces.l1_v1,
        trace_vbr=traces.l1_vbr,
    )


def composite_difference(f_new: DistributionField, f_old: DistributionField) -> CompositeNorm:
    """Composite norm of f_new - f_old."""
    return composite_norm(f_new.with_values(f_new.values - f_old.values))


class OmegaSpace(str, Enum):
    INFLOW = "omega_1"
    INFLOW_CRITICAL = "omega_2"
    DIFFUSIVE = "omega_3"
    DIFFUSIVE_CRITICAL = "omega_4"

    @property
    def critical(self) -> bool:
        return self in (OmegaSpace.INFLOW_CRITICAL, OmegaSpace.DIFFUSIVE_CRITICAL)

    @property
    def diffusive(self) -> bool:
        return self in (OmegaSpace.DIFFUSIVE, OmegaSpace.DIFFUSIVE_CRITICAL)


def select_space(regime: Regime, nu: float) -> OmegaSpace:
    critical = nu == NU_MIN
    if regime is Regime.DIFFUSIVE_DOMINANT:
        return OmegaSpace.DIFFUSIVE_CRITICAL if critical else OmegaSpace.DIFFUSIVE
    return OmegaSpace.INFLOW_CRITICAL if critical else OmegaSpace.INFLOW


@dataclass(frozen=True)
class OmegaCheck:
    """One measured quantity against its bound."""

    condition: str
    name: str
    measured: float
    bound: float
    lower: bool
    stated_bound: Optional[float] = None

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.measured):
            return False
        return self.measured >= self.bound if self.lower else self.measured <= self.bound

    @property
    def margin(self) -> float:
        return self.measured - self.bound if self.lower else self.bound - self.measured

    @property
    def stated_margin(self) -> Optional[float]:
        if self.stated_bound is None:
            return None
        return (self.measured - self.stated_bound if self.lower
                else self.stated_bound - self.measured)

    def to_dict(self) -> dict:
        data = {
            "condition": self.condition,
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "kind": "lower" if self.lower else "upper",
            "margin": self.margin,
            "passed": self.passed,
        }
        if self.stated_bound is not None:
            data["stated_bound"] = self.stated_bound
            data["stated_margin"] = self.stated_margin
        return data


@dataclass(frozen=True)
class OmegaEntry:
    iteration: int
    space: OmegaSpace
    checks: tuple[OmegaCheck, ...]

    @property
    def all_pass(self) -> bool:
        return all(check.passed for check in self.checks)

    def condition_passed(self, condition: str) -> bool:
        return all(check.passed for check in self.checks if check.condition == condition)

    @property
    def failed(self) -> list[str]:
        return [f"{check.condition}:{check.name}" for check in self.checks if not check.passed]

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "space": self.space.value,
            "all_pass": self.all_pass,
            "conditions": {c: self.condition_passed(c) for c in "ABCD"},
            "checks": [check.to_dict() for check in self.checks],
        }


def _safe_ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else math.inf


def _tensor_extremes(f: DistributionField, nu: float, model: str) -> tuple[float, float]:
    """min_x lambda_1 and max_x lambda_3 of T_nu without the positivity gate."""
    grid = f.velocity
    rho = half_space_moment(f.values, grid)
    if not np.all(rho > 0):
        return math.nan, math.nan
    weighted = f.values * grid.weights
    velocity = np.einsum("...n,ni->...i", weighted, grid.nodes) / rho[:, None]
    raw = np.einsum("...n,ni,nj->...ij", weighted, grid.nodes, grid.nodes) / rho[:, None, None]
    theta = symmetrize(raw - velocity[:, :, None] * velocity[:, None, :])
    temperature = np.trace(theta, axis1=-2, axis2=-1) / 3.0
    identity = np.eye(3)
    if model == "bgk":
        matrix = temperature[:, None, None] * identity
    else:
        matrix = (1.0 - nu) * temperature[:, None, None] * identity + nu * theta
    eigenvalues = symmetric_eigenvalues(matrix)
    return float(np.min(eigenvalues[:, 0])), float(np.max(eigenvalues[:, 2]))


def omega_membership(
    f: DistributionField,
    config,
    constants: BoundaryConstants,
    iteration: int = 0,
) -> OmegaEntry:
    """
    Evaluate the solution-space conditions A (nonnegativity), B (density and energy),
    C (temperature tensor bounds) and D (trace norms) with measured margins.

    The density floor used for pass/fail is the delta-weighted one; the unweighted floor
    of the theorem statements is recorded as stated_bound.

    Args:
        f: Distribution field
        config: Object with nu, model and spec attributes (a SolverConfig)
        constants: Boundary constants of config.spec
        iteration: Iteration number recorded in the entry
    """
    spec: BoundarySpec = config.spec
    nu = 0.0 if config.model == "bgk" else float(config.nu)
    space = select_space(spec.regime, nu)
    grid = f.velocity
    d1, d2, _ = spec.delta
    c1, c2 = equivalence_bounds(nu)
    c = constants

    rho = half_space_moment(f.values, grid)
    energy_weight = "energy" if space.critical else "bracket"
    energy = half_space_moment(f.values, grid, None, energy_weight)
    lambda_min, lambda_max = _tensor_extremes(f, nu, config.model)
    traces = trace_norms(f.left_trace, f.right_trace, grid)

    if space.diffusive:
        c_lr, a_l, weight = c.C_LR2, c.a_l2, d2
        trace_v1_bound = 2.0 * (1.0 + c.f_lr_v1_norm)
    else:
        c_lr, a_l, weight = c.C_LR1, c.a_l1, d1
        trace_v1_bound = 2.0 * c.f_lr_v1_norm

    if space is OmegaSpace.INFLOW:
        lower = c1 * d1 ** 2 * c.gamma_l1 / (3.0 * c.C_LR1 ** 2)
        upper = _safe_ratio(2.0 * c2 * c.C_LR1, 3.0 * c.a_l1 * d1)
    elif space is OmegaSpace.INFLOW_CRITICAL:
        lower = d1 * c.a_half_1 / (2.0 * c.C_LR1)
        upper = _safe_ratio(3.0 * c.C_LR1, 2.0 * c.a_l1)
    elif space is OmegaSpace.DIFFUSIVE:
        lower = c1 * d2 ** 2 * c.gamma_l2 / (27.0 * c.C_LR2 ** 2)
        upper = _safe_ratio(2.0 * c2 * c.C_LR2, 3.0 * c.a_l2)
    else:
        lower = d2 * c.a_half_2 / (4.0 * c.C_LR2)
        upper = _safe_ratio(3.0 * c.C_LR2, 2.0 * c.a_l2)

    checks = (
        OmegaCheck("A", "nonnegative", float(np.min(f.values)), 0.0, lower=True),
        OmegaCheck("B", "density_lower", float(np.min(rho)), weight * a_l, lower=True,
                   stated_bound=a_l),
        OmegaCheck("B", "energy_upper", float(np.max(energy)), 2.0 * c_lr, lower=False),
        OmegaCheck("C", "tensor_lower", lambda_min, lower, lower=True),
        OmegaCheck("C", "tensor_upper", lambda_max, upper, lower=False),
        OmegaCheck("D", "trace_v1_plus", traces.l1_v1_plus, trace_v1_bound, lower=False),
        OmegaCheck("D", "trace_v1_minus", traces.l1_v1_minus, trace_v1_bound, lower=False),
        OmegaCheck("D", "trace_vbr_plus", traces.l1_vbr_plus, 2.0 * c_lr, lower=False),
        OmegaCheck("D", "trace_vbr_minus", traces.l1_vbr_minus, 2.0 * c_lr, lower=False),
    )
    return OmegaEntry(iteration=iteration, space=space, checks=checks)


def first_regression(entries: Sequence[OmegaEntry]) -> Optional[int]:
    """Iteration of the first pass -> fail transition after the first all-pass entry."""
    seen_all_pass = False
    for entry in entries:
        if entry.all_pass:
            seen_all_pass = True
        elif seen_all_pass:
            return entry.iteration
    return None


def theoretical_factor(tau: float, delta: Sequence[float]) -> float:
    """(ln tau + 1)/tau + delta2 + delta3."""
    return (math.log(tau) + 1.0) / tau + delta[1] + delta[2]


@dataclass(frozen=True)
class ContractionSummary:
    status: str
    rate: Optional[float] = None
    fitted_constant: Optional[float] = None
    theoretical_factor: Optional[float] = None
    non_monotone: bool = False
    samples: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def contraction_monitor(
    differences: Sequence[float],
    tau: float,
    delta: Sequence[float],
    floor: float = 0.0,
) -> ContractionSummary:
    """
    Geometric fit of the composite difference sequence.

    Points at or below floor are treated as roundoff and dropped. The first point is
    dropped as transient when at least four remain. Fewer than three usable points make
    the summary indeterminate.
    """
    factor = theoretical_factor(tau, delta) if tau > 1 else None
    usable = [d for d in differences if d > floor and math.isfinite(d)]
    if len(usable) >= 4:
        usable = usable[1:]
    if len(usable) < 3:
        return ContractionSummary(status="indeterminate", theoretical_factor=factor,
                                  samples=len(usable))

    steps = np.arange(len(usable), dtype=float)
    slope, _ = np.polyfit(steps, np.log(usable), 1)
    rate = float(math.exp(slope))
    non_monotone = any(b > a for a, b in zip(usable, usable[1:]))
    if non_monotone:
        logger.warning("Composite differences are not monotone in the fitted tail")
    return ContractionSummary(
        status="ok" if rate < 1.0 else "diverging",
        rate=rate,
        fitted_constant=rate / factor if factor else None,
        theoretical_factor=factor,
        non_monotone=non_monotone,
        samples=len(usable),
    )


@dataclass(frozen=True)
class DiscrepancyLedger:
    u1_measured: float
    u1_bound: float
    u2_measured: float
    u3_measured: float
    transverse_base: float
    remainder_rate: float
    required_constant: float
    transverse_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def u1_passed(self) -> bool:
        return self.u1_measured <= self.u1_bound

    @property
    def transverse_passed(self) -> Optional[bool]:
        if self.transverse_bound is None:
            return None
        return max(self.u2_measured, self.u3_measured) <= self.transverse_bound

    def to_dict(self) -> dict:
        data = dict(self.__dict__)
        data.update(data.pop("extra"))
        data["u1_passed"] = self.u1_passed
        data["transverse_passed"] = self.transverse_passed
        return data


def velocity_discrepancy_check(
    f: DistributionField,
    spec: BoundarySpec,
    tau: float,
    constants: BoundaryConstants,
    remainder_constant: Optional[float] = None,
) -> DiscrepancyLedger:
    """
    Momentum bounds controlled by the inflow flux discrepancy.

    Inflow regime: |int f v1| <= d1 disc + 2 (d2 + d3 + 2/tau) C_LR1 and
    |int f v_i| <= 2 d3 ||f_LR||_{|v1|} ||M_w||_{|v1|} + C (ln tau + 1)/tau for i = 2, 3.
    Diffusive regime: |int f v1| <= d1 disc + (2/tau)(||f_LR||_<v> + ||M_w||_<v>) and
    |int f v_i| <= 2 d3 C_LR2 + C (ln tau + 1)/tau.
    C is reported as the smallest constant that makes the measured values pass.
    """
    grid = f.velocity
    d1, d2, d3 = spec.delta
    flux_left, flux_right = spec.inflow_fluxes(grid)
    discrepancy = abs(flux_left - flux_right)
    c = constants

    if spec.regime is Regime.DIFFUSIVE_DOMINANT:
        u1_bound = d1 * discrepancy + (2.0 / tau) * (c.f_lr_vbr_norm + c.wall_vbr_norm)
        transverse_base = 2.0 * d3 * c.C_LR2
    else:
        u1_bound = d1 * discrepancy + 2.0 * (d2 + d3 + 2.0 / tau) * c.C_LR1
        transverse_base = 2.0 * d3 * c.f_lr_v1_norm * c.wall_v1_norm

    momentum = np.abs(np.einsum("...n,ni->...i", f.values * grid.weights, grid.nodes))
    u1, u2, u3 = (float(np.max(momentum[:, i])) for i in range(3))

    rate = (math.log(tau) + 1.0) / tau if tau > 1 else 1.0
    required = max(0.0, max(u2, u3) - transverse_base) / rate
    bound = (transverse_base + remainder_constant * rate
             if remainder_constant is not None else None)
    return DiscrepancyLedger(
        u1_measured=u1,
        u1_bound=u1_bound,
        u2_measured=u2,
        u3_measured=u3,
        transverse_base=transverse_base,
        remainder_rate=rate,
        required_constant=required,
        transverse_bound=bound,
        extra={"discrepancy": discrepancy},
    )


def flux_constancy(f: DistributionField) -> float:
    """max_x |int f v1 (x) - int f v1 (0)|."""
    flux = mass_flux(f)
    return float(np.max(np.abs(flux - flux[0])))


def observed_order(coarse: np.ndarray, medium: np.ndarray, fine: np.ndarray) -> float:
    """
    Observed convergence order from three profiles on grids refined by factors of 2.

    Profiles are compared on the coarse nodes.
    """
    coarse = np.asarray(coarse, dtype=float)
    medium = np.asarray(medium, dtype=float)[::2]
    fine = np.asarray(fine, dtype=float)[::4]
    if not (coarse.shape == medium.shape == fine.shape):
        raise ValueError("Profiles must live on grids with 1:2:4 interval counts")
    e_coarse = float(np.max(np.abs(coarse - medium)))
    e_fine = float(np.max(np.abs(medium - fine)))
    if e_fine == 0.0:
        return math.inf
    return math.log2(e_coarse / e_fine)


def diffusive_family_member(spec: BoundarySpec, spatial, grid, amplitude: float) -> DistributionField:
    """
    C (M_w(0) on v1 > 0 plus M_w(1) on v1 < 0), constant in x.

    Without collisions every member is a fixed point of the purely diffusive wall
    condition; only C = 1/2 meets the flux-control identity.
    """
    return DistributionField.constant(amplitude * spec.wall, spatial, grid)
