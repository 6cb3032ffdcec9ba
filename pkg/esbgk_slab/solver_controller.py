"""
Solver controller for esbgk-slab.
Drives the lagged fixed-point iteration (boundary update, Gaussian closure, sweep)
and assembles the iteration report.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from .boundary import (
    BoundarySpec,
    DiffusiveUpdate,
    Regime,
    apply_boundary_diffusive,
    apply_boundary_inflow,
    flux_ledger,
)
from .diagnostics import (
    ROUNDOFF_FLOOR,
    ContractionSummary,
    OmegaEntry,
    composite_difference,
    composite_norm,
    contraction_monitor,
    first_regression,
    flux_constancy,
    omega_membership,
    velocity_discrepancy_check,
)
from .error_handler import (
    ConfigurationError,
    DegenerateDataError,
    HypothesisViolationError,
    NumericalFailureError,
    TensorDegeneracyError,
)
from .gaussian_closure import (
    NU_MAX,
    NU_MIN,
    ClosureResult,
    GaussianClosure,
    MacroFields,
    TemperatureTensor,
)
from .quadrature import BoundaryConstants, SpatialGrid, VelocityGrid, boundary_constants, half_space_moment
from .transport import DistributionField, TransportSweep, own_traces, residual, with_incoming_traces

INITIAL_GUESSES = ("boundary", "wall_blend")

# heuristic smallness thresholds; the existence theory only says "small enough"
TAU_HEURISTIC = 20.0
INFLOW_MIX_HEURISTIC = 0.3
DIFFUSIVE_MIX_HEURISTIC = 0.3
DISCREPANCY_HEURISTIC = 0.2

RATIO_FLOOR = 100.0 * np.finfo(float).eps


@dataclass
class SolverConfig:
    """In-memory configuration of one solve."""

    nu: float
    kappa: float
    spec: BoundarySpec
    velocity: VelocityGrid
    spatial: SpatialGrid
    tol: float = 1e-10
    max_iter: int = 200
    initial_guess: str = "boundary"
    model: str = "esbgk"
    closure: str = "discrete"
    strict: bool = False

    @property
    def tau(self) -> float:
        return self.kappa * (1.0 - self.nu)

    def validate(self) -> tuple[bool, str]:
        """
        Validate the configuration parameters.

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        if not (NU_MIN <= self.nu < NU_MAX):
            return False, f"nu must lie in [-1/2, 1), got {self.nu}"

        if not self.kappa > 0:
            return False, f"kappa must be greater than 0, got {self.kappa}"

        if not self.tol > 0:
            return False, "Tolerance must be greater than 0"

        if self.max_iter < 1:
            return False, "max_iter must be at least 1"

        if self.initial_guess not in INITIAL_GUESSES:
            return False, f"Initial guess must be one of {list(INITIAL_GUESSES)}"

        if self.model not in ("esbgk", "bgk"):
            return False, "Model must be 'esbgk' or 'bgk'"

        if self.closure not in ("discrete", "analytic"):
            return False, "Closure must be 'discrete' or 'analytic'"

        for name in ("f_left", "f_right", "wall_left", "wall_right"):
            if getattr(self.spec, name).shape != (self.velocity.size,):
                return False, f"Boundary slice {name} does not match the velocity grid"

        return True, ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nu": self.nu,
            "kappa": self.kappa,
            "tau": self.tau,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "initial_guess": self.initial_guess,
            "model": self.model,
            "closure": self.closure,
            "strict": self.strict,
            "velocity_grid": self.velocity.to_dict(),
            "spatial_intervals": self.spatial.intervals,
            "boundary": self.spec.to_dict(self.velocity),
        }


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    HYPOTHESIS_VIOLATION = "hypothesis_violation"


@dataclass
class IterationRecord:
    iteration: int
    diff_sup_l12: float
    diff_trace_v1: float
    diff_trace_vbr: float
    composite: float
    iterate_norm: float
    ratio: Optional[float] = None
    s_left: Optional[float] = None
    s_right: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class IterationReport:
    records: List[IterationRecord] = field(default_factory=list)
    omega_ledger: List[OmegaEntry] = field(default_factory=list)
    termination: Termination = Termination.MAX_ITER
    detail: str = ""
    warnings: List[str] = field(default_factory=list)
    contraction: Optional[ContractionSummary] = None
    flux: Optional[Dict[str, Any]] = None
    discrepancy: Optional[Dict[str, Any]] = None
    constants: Optional[BoundaryConstants] = None
    residual: Optional[float] = None
    flux_constancy: Optional[float] = None
    omega_regression: Optional[int] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def differences(self) -> List[float]:
        return [record.composite for record in self.records]

    @property
    def omega_all_pass(self) -> bool:
        return bool(self.omega_ledger) and all(entry.all_pass for entry in self.omega_ledger)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "termination": self.termination.value,
            "detail": self.detail,
            "iterations": self.iterations,
            "records": [record.to_dict() for record in self.records],
            "omega_ledger": [entry.to_dict() for entry in self.omega_ledger],
            "omega_all_pass": self.omega_all_pass,
            "omega_regression": self.omega_regression,
            "contraction": self.contraction.to_dict() if self.contraction else None,
            "flux": self.flux,
            "discrepancy": self.discrepancy,
            "constants": self.constants.to_dict() if self.constants else None,
            "residual": self.residual,
            "flux_constancy": self.flux_constancy,
            "warnings": list(self.warnings),
        }


@dataclass
class SolverResult:
    field: DistributionField
    report: IterationReport
    profile: Optional[MacroFields] = None
    tensor: Optional[TemperatureTensor] = None
    gaussian: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.report.termination is Termination.CONVERGED


def _isotropic_gaussian(closure: GaussianClosure, rho: np.ndarray, temperature: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    temperature = np.asarray(temperature, dtype=float)
    macro = MacroFields.from_values(
        rho=rho,
        bulk_velocity=np.zeros(rho.shape + (3,)),
        stress_tensor=temperature[..., None, None] * np.eye(3),
    )
    return closure.gaussian(macro, closure.tensor(macro))


def build_initial_field(config: SolverConfig, closure: GaussianClosure) -> DistributionField:
    """
    Initial iterate.

    "boundary": the rest-frame Maxwellian with density and temperature of the boundary
    source (f_LR in the inflow regime, the delta1/wall mixture in the diffusive regime).
    "wall_blend": linear blend in x of rest-frame Maxwellians at the two wall temperatures.
    """
    spec, grid, spatial = config.spec, config.velocity, config.spatial
    if spec.regime is Regime.DIFFUSIVE_DOMINANT:
        d1 = spec.delta[0]
        source = d1 * spec.f_lr + 0.5 * (1.0 - d1) * spec.wall
    else:
        source = spec.f_lr
    rho = float(half_space_moment(source, grid))
    temperature = float(half_space_moment(source, grid, None, "energy")) / (3.0 * rho)

    if config.initial_guess == "wall_blend":
        x = spatial.nodes
        t_left, t_right = spec.wall_temperatures
        left = _isotropic_gaussian(closure, np.array(rho), np.array(t_left))
        right = _isotropic_gaussian(closure, np.array(rho), np.array(t_right))
        values = (1.0 - x)[:, None] * left[None, :] + x[:, None] * right[None, :]
        return DistributionField(values=values, spatial=spatial, velocity=grid)

    slice_values = _isotropic_gaussian(closure, np.array(rho), np.array(temperature))
    return DistributionField.constant(slice_values, spatial, grid)


class SolverController:
    """Controls one fixed-point solve and monitors its progress."""

    def __init__(
        self,
        progress_callback: Optional[Callable[[int, float], None]] = None,
        show_progress: bool = False,
        tracker=None,
    ):
        self.logger = logging.getLogger(__name__)
        self.stop_event = threading.Event()
        self.progress_callback = progress_callback
        self.show_progress = show_progress
        self.tracker = tracker

    def stop(self):
        """Request the running solve to stop after the current iteration."""
        self.stop_event.set()

    def _heuristic_warnings(self, config: SolverConfig, constants: BoundaryConstants) -> List[str]:
        spec = config.spec
        d1, d2, d3 = spec.delta
        warnings = []
        if config.tau < TAU_HEURISTIC:
            warnings.append(f"tau = {config.tau:.4g} is below the heuristic threshold {TAU_HEURISTIC}")
        if spec.regime is Regime.INFLOW_DOMINANT:
            if d2 + d3 > INFLOW_MIX_HEURISTIC:
                warnings.append(
                    f"delta2 + delta3 = {d2 + d3:.4g} exceeds {INFLOW_MIX_HEURISTIC} "
                    f"in the inflow-dominant regime"
                )
            if config.nu == NU_MIN and config.model == "esbgk":
                flux_left, flux_right = spec.inflow_fluxes(config.velocity)
                limit = DISCREPANCY_HEURISTIC * math.sqrt(max(constants.a_half_1, 0.0))
                if abs(flux_left - flux_right) > limit:
                    warnings.append(
                        f"Inflow flux discrepancy {abs(flux_left - flux_right):.4g} exceeds "
                        f"{limit:.4g} in the critical case"
                    )
        elif d1 > DIFFUSIVE_MIX_HEURISTIC:
            warnings.append(
                f"delta1 = {d1:.4g} exceeds {DIFFUSIVE_MIX_HEURISTIC} in the diffusive-dominant regime"
            )
        for message in warnings:
            self.logger.warning(message)
        return warnings

    def _boundary_update(self, config: SolverConfig, f: DistributionField, closure_result: ClosureResult,
                         iteration: int):
        if config.spec.regime is Regime.DIFFUSIVE_DOMINANT:
            return apply_boundary_diffusive(f, closure_result.values, config.spec, config.tau,
                                            iteration=iteration)
        return apply_boundary_inflow(f, config.spec)

    def solve(self, config: SolverConfig, initial_field: Optional[DistributionField] = None) -> SolverResult:
        """
        Run the fixed-point iteration.

        Args:
            config: Solver configuration
            initial_field: Optional user-supplied initial iterate

        Returns:
            SolverResult with the last iterate, its macroscopic profile and the report

        Raises:
            ConfigurationError: If the configuration is invalid
            NumericalFailureError: On non-finite iterates or failed moment matching
        """
        valid, message = config.validate()
        if not valid:
            raise ConfigurationError(message)

        self.stop_event.clear()
        closure = GaussianClosure(config.velocity, config.nu, config.model, config.closure)
        sweep = TransportSweep(config.tau, config.spatial, config.velocity)
        constants = boundary_constants(config.spec.f_lr, config.spec.wall, config.velocity)
        report = IterationReport(constants=constants)
        report.warnings.extend(self._heuristic_warnings(config, constants))

        f = initial_field if initial_field is not None else build_initial_field(config, closure)
        self.logger.info(
            f"Starting solve: nu={config.nu}, tau={config.tau:.6g}, delta={config.spec.delta}, "
            f"regime={config.spec.regime.value}, grid={config.velocity.counts}x{config.spatial.intervals}"
        )

        progress = tqdm(total=config.max_iter, desc="fixed-point", unit="it",
                        disable=not self.show_progress)
        previous_composite: Optional[float] = None
        try:
            for iteration in range(1, config.max_iter + 1):
                if self.stop_event.is_set():
                    report.detail = "stopped on request"
                    break

                try:
                    closure_result = closure(f.values)
                    entry = omega_membership(f, config, constants, iteration=iteration - 1)
                    report.omega_ledger.append(entry)
                    if config.strict and not entry.condition_passed("C"):
                        raise HypothesisViolationError(
                            f"Temperature tensor bounds failed: {entry.failed}",
                            iteration=iteration,
                        )
                    traces = self._boundary_update(config, f, closure_result, iteration)
                except (TensorDegeneracyError, DegenerateDataError) as e:
                    report.termination = Termination.HYPOTHESIS_VIOLATION
                    report.detail = f"iteration {iteration}, node {e.node}: {e}"
                    self.logger.error(f"Hypothesis violation: {report.detail}")
                    break
                except HypothesisViolationError as e:
                    report.termination = Termination.HYPOTHESIS_VIOLATION
                    report.detail = f"iteration {iteration}: {e}"
                    self.logger.error(f"Hypothesis violation: {report.detail}")
                    break

                if isinstance(traces, DiffusiveUpdate):
                    # interior marches from the level-n traces; the boundary nodes take
                    # the updated data
                    new = with_incoming_traces(sweep(own_traces(f), closure_result.values), traces)
                else:
                    new = sweep(traces, closure_result.values)
                if not np.all(np.isfinite(new.values)):
                    raise NumericalFailureError(f"Non-finite values in iterate {iteration}")

                diff = composite_difference(new, f)
                norm = composite_norm(f).total
                ratio = None
                if previous_composite is not None and previous_composite > RATIO_FLOOR:
                    ratio = diff.total / previous_composite
                record = IterationRecord(
                    iteration=iteration,
                    diff_sup_l12=diff.sup_l12,
                    diff_trace_v1=diff.trace_v1,
                    diff_trace_vbr=diff.trace_vbr,
                    composite=diff.total,
                    iterate_norm=norm,
                    ratio=ratio,
                    s_left=traces.s_left if isinstance(traces, DiffusiveUpdate) else None,
                    s_right=traces.s_right if isinstance(traces, DiffusiveUpdate) else None,
                )
                report.records.append(record)
                self.logger.debug(
                    f"Iteration {iteration}: composite={diff.total:.3e}, ratio={ratio}"
                )
                if self.tracker is not None:
                    self.tracker.log_iteration(record)
                if self.progress_callback:
                    self.progress_callback(iteration, diff.total)
                progress.update(1)
                progress.set_postfix(diff=f"{diff.total:.2e}")

                previous_composite = diff.total
                f = new
                if diff.total <= config.tol * (1.0 + norm):
                    report.termination = Termination.CONVERGED
                    report.detail = f"composite difference {diff.total:.3e} after {iteration} iterations"
                    break
            else:
                report.detail = f"no convergence within {config.max_iter} iterations"
        finally:
            progress.close()

        result = SolverResult(field=f, report=report)
        self._finalize(config, closure, constants, result)
        self.logger.info(f"Solve finished: {report.termination.value} ({report.detail})")
        return result

    def _finalize(self, config: SolverConfig, closure: GaussianClosure, constants: BoundaryConstants,
                  result: SolverResult):
        f, report = result.field, result.report
        floor = ROUNDOFF_FLOOR * (1.0 + (report.records[-1].iterate_norm if report.records else 0.0))
        report.contraction = contraction_monitor(report.differences, config.tau, config.spec.delta,
                                                 floor=floor)
        report.flux = flux_ledger(f, config.spec).to_dict()
        report.flux_constancy = flux_constancy(f)
        report.discrepancy = velocity_discrepancy_check(f, config.spec, config.tau, constants).to_dict()

        try:
            final = closure(f.values)
        except (TensorDegeneracyError, DegenerateDataError) as e:
            report.warnings.append(f"Final iterate has no valid Gaussian: {e}")
            return

        result.profile = final.macro
        result.tensor = final.tensor
        result.gaussian = final.values
        report.omega_ledger.append(
            omega_membership(f, config, constants, iteration=report.iterations)
        )
        report.omega_regression = first_regression(report.omega_ledger)
        if report.omega_regression is not None:
            report.warnings.append(
                f"Solution-space conditions regressed at iteration {report.omega_regression}"
            )
        try:
            report.residual = residual(f, f.with_values(final.values), config.tau, config.spec)
        except HypothesisViolationError as e:
            report.warnings.append(f"Residual boundary check failed: {e}")

        if self.tracker is not None:
            self.tracker.log_summary(report)


def solve(config: SolverConfig, initial_field: Optional[DistributionField] = None,
          show_progress: bool = False) -> SolverResult:
    """Convenience wrapper around SolverController.solve."""
    return SolverController(show_progress=show_progress).solve(config, initial_field)
