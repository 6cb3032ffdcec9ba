"""
Property batteries run by the verify command.

Every battery is seeded and returns a BatteryResult; none raises on a failed check.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import special_ortho_group

from .boundary import relaxation_integrals
from .error_handler import SolverError
from .gaussian_closure import (
    NU_MIN,
    GaussianClosure,
    MacroFields,
    compute_moments,
    critical_quadratic_form,
    equivalence_bounds,
    evaluate_gaussian,
    gaussian_envelope_certificate,
    temperature_quadratic_form,
    temperature_tensor,
)
from .quadrature import VelocityGrid, build_spatial_grid, build_velocity_grid
from .solver_controller import SolverConfig, SolverController
from .transport import kernel_estimate_probe

logger = logging.getLogger(__name__)

MOMENT_RTOL = 1e-6
EQUIVALENCE_SLACK = 1e-12
IDENTITY_RTOL = 1e-8
KERNEL_TAUS = (10.0, 1e2, 1e3, 1e4)
KERNEL_SPREAD = 3.0
CLOSURE_RTOL = 1e-10


@dataclass
class BatteryResult:
    name: str
    passed: bool
    detail: str
    seed: Optional[int] = None
    metrics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "seed": self.seed,
            "metrics": dict(self.metrics),
        }


def _random_spd(rng: np.random.Generator, low: float, high: float) -> np.ndarray:
    """Symmetric positive definite matrix with log-uniform eigenvalues in [low, high]."""
    rotation = special_ortho_group.rvs(3, random_state=rng)
    eigenvalues = np.exp(rng.uniform(math.log(low), math.log(high), size=3))
    return rotation @ np.diag(eigenvalues) @ rotation.T


def moment_consistency(
    seed: int,
    samples: int = 50,
    counts: Sequence[int] = (32, 32, 32),
    cutoff: float = 8.0,
) -> BatteryResult:
    """
    compute_moments of the analytic Gaussian returns rho, U and T_nu.

    Tuples are drawn with |U_i| <= 0.5, Theta eigenvalues in [0.6, 1] and nu in
    [-1/2, 0.95], which keeps every Gaussian well inside the truncation box.
    The envelope certificate is checked on the same draws.
    """
    rng = np.random.default_rng(seed)
    grid = build_velocity_grid(cutoff, tuple(counts))
    worst = 0.0
    try:
        for _ in range(samples):
            nu = float(rng.uniform(NU_MIN, 0.95))
            macro = MacroFields.from_values(
                rho=rng.uniform(0.5, 2.0),
                bulk_velocity=rng.uniform(-0.5, 0.5, size=3),
                stress_tensor=_random_spd(rng, 0.6, 1.0),
            )
            tensor = temperature_tensor(macro, nu)
            values = evaluate_gaussian(macro, tensor, grid)
            recovered = compute_moments(values, grid)
            scale = float(np.max(np.abs(tensor.matrix)))
            errors = (
                abs(recovered.rho - macro.rho) / macro.rho,
                float(np.max(np.abs(recovered.bulk_velocity - macro.bulk_velocity))) / math.sqrt(scale),
                float(np.max(np.abs(recovered.stress_tensor - tensor.matrix))) / scale,
            )
            worst = max(worst, float(max(errors)))
            gaussian_envelope_certificate(macro, tensor, grid)
    except SolverError as e:
        return BatteryResult("moment_consistency", False, f"{type(e).__name__}: {e}", seed)

    passed = worst <= MOMENT_RTOL
    return BatteryResult(
        "moment_consistency", passed,
        f"max relative moment error {worst:.3e} over {samples} draws (limit {MOMENT_RTOL:g})",
        seed, {"max_error": worst},
    )


def equivalence_battery(
    seed: int,
    samples: int = 200,
    extra_nu: Sequence[float] = (),
    anisotropy: float = 100.0,
) -> BatteryResult:
    """C1 T <= lambda_1 <= lambda_3 <= C2 T over random Theta and an open grid in nu."""
    rng = np.random.default_rng(seed)
    nus = list(np.linspace(NU_MIN, 1.0, 17)[1:-1]) + [float(n) for n in extra_nu]
    thetas = np.stack([_random_spd(rng, 1.0 / anisotropy, anisotropy) for _ in range(samples)])
    macro = MacroFields.from_values(
        rho=np.ones(samples),
        bulk_velocity=np.zeros((samples, 3)),
        stress_tensor=thetas,
    )
    worst_slack = math.inf
    violations = 0
    try:
        for nu in nus:
            tensor = temperature_tensor(macro, nu)
            c1, c2 = equivalence_bounds(nu)
            t = macro.temperature
            slack = np.minimum(
                tensor.eigenvalues[:, 0] - c1 * t,
                c2 * t - tensor.eigenvalues[:, 2],
            ) / t
            violations += int(np.count_nonzero(slack < -EQUIVALENCE_SLACK))
            worst_slack = min(worst_slack, float(np.min(slack)))
    except SolverError as e:
        return BatteryResult("equivalence_bounds", False, f"{type(e).__name__}: {e}", seed)

    return BatteryResult(
        "equivalence_bounds", violations == 0,
        f"{violations} violations over {samples} tensors x {len(nus)} values of nu, "
        f"min relative slack {worst_slack:.3e}",
        seed, {"violations": violations, "min_slack": worst_slack},
    )


def critical_identity(
    seed: int,
    grid: VelocityGrid,
    fields: int = 20,
    directions: int = 20,
) -> BatteryResult:
    """kappa^T T_{-1/2} kappa equals the direct quadrature form for random fields and unit kappa."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for _ in range(fields):
            base = np.exp(-0.5 * grid.speed_sq / rng.uniform(0.7, 1.3))
            values = base * rng.uniform(0.5, 1.5, size=grid.size)
            tensor = temperature_tensor(compute_moments(values, grid), NU_MIN)
            for _ in range(directions):
                kappa = rng.normal(size=3)
                kappa /= np.linalg.norm(kappa)
                expected = float(temperature_quadratic_form(tensor, kappa))
                measured = critical_quadratic_form(values, grid, kappa)
                worst = max(worst, abs(measured - expected) / abs(expected))
    except SolverError as e:
        return BatteryResult("critical_identity", False, f"{type(e).__name__}: {e}", seed)

    return BatteryResult(
        "critical_identity", worst <= IDENTITY_RTOL,
        f"max relative error {worst:.3e} over {fields} x {directions} (limit {IDENTITY_RTOL:g})",
        seed, {"max_error": worst},
    )


def kernel_probe_battery(
    taus: Sequence[float] = KERNEL_TAUS,
    decay: float = 1.0,
    x: float = 1.0,
) -> BatteryResult:
    """probe(tau) tau / (ln tau + 1) stays within a factor of 3 over the tau list."""
    ratios = {}
    for tau in taus:
        ratios[float(tau)] = kernel_estimate_probe(tau, decay, x) * tau / (math.log(tau) + 1.0)
    values = list(ratios.values())
    spread = max(values) / min(values) if min(values) > 0 else math.inf
    detail = ", ".join(f"tau={t:g}: {r:.4f}" for t, r in ratios.items())
    return BatteryResult(
        "kernel_estimate", spread <= KERNEL_SPREAD,
        f"normalised probe {detail}; spread {spread:.3f} (limit {KERNEL_SPREAD:g})",
        None, {"ratios": {str(k): v for k, v in ratios.items()}, "spread": spread},
    )


def contraction_short_run(config: SolverConfig, iterations: int = 8) -> BatteryResult:
    """A short solve whose composite differences must not grow geometrically."""
    short = replace(config, max_iter=iterations, tol=min(config.tol, 1e-14), strict=False)
    try:
        result = SolverController().solve(short)
    except SolverError as e:
        return BatteryResult("contraction", False, f"{type(e).__name__}: {e}")

    summary = result.report.contraction
    passed = summary is not None and summary.status != "diverging"
    rate = summary.rate if summary else None
    rate_text = f"{rate:.3e}" if rate is not None else "n/a"
    return BatteryResult(
        "contraction", passed,
        f"status {summary.status if summary else 'missing'}, fitted rate {rate_text} "
        f"after {result.report.iterations} iterations",
        None, {"rate": rate, "iterations": result.report.iterations},
    )


def relaxation_closure(seed: int, config: SolverConfig, intervals: int = 8) -> BatteryResult:
    """
    The space-velocity integral of M(f) - f vanishes for the discrete closure.

    Uses a random positive field built around the wall Maxwellians.
    """
    if config.closure != "discrete" or config.model != "esbgk":
        return BatteryResult("relaxation_closure", True,
                             f"skipped for closure={config.closure}, model={config.model}", seed)
    rng = np.random.default_rng(seed)
    grid = config.velocity
    spatial = build_spatial_grid(intervals)
    base = np.exp(-0.5 * grid.speed_sq)
    values = base[None, :] * rng.uniform(0.5, 1.5, size=(spatial.nodes.shape[0], grid.size))
    try:
        gaussians = GaussianClosure(grid, config.nu)(values).values
    except SolverError as e:
        return BatteryResult("relaxation_closure", False, f"{type(e).__name__}: {e}", seed)
    plus, minus = relaxation_integrals(values, gaussians, spatial, grid)
    mass = float(np.sum(spatial.trapezoid_weights * np.sum(values * grid.weights, axis=1)))
    defect = abs(plus + minus) / mass
    return BatteryResult(
        "relaxation_closure", defect <= CLOSURE_RTOL,
        f"relative total relaxation {defect:.3e} (limit {CLOSURE_RTOL:g})",
        seed, {"defect": defect},
    )


def run_batteries(
    config: SolverConfig,
    seed: int,
    moment_samples: int = 50,
    tensor_samples: int = 200,
    identity_fields: int = 20,
    identity_directions: int = 20,
    moment_counts: Sequence[int] = (32, 32, 32),
    contraction_iterations: int = 8,
    progress: Optional[Callable[[str], None]] = None,
) -> List[BatteryResult]:
    """Run every battery in a fixed order with seeds derived from one base seed."""
    children = np.random.SeedSequence(seed).generate_state(4)
    batteries: List[Callable[[], BatteryResult]] = [
        lambda: moment_consistency(int(children[0]), moment_samples, moment_counts),
        lambda: equivalence_battery(int(children[1]), tensor_samples, extra_nu=(config.nu,)),
        lambda: critical_identity(int(children[2]), config.velocity, identity_fields,
                                  identity_directions),
        lambda: kernel_probe_battery(),
        lambda: contraction_short_run(config, contraction_iterations),
        lambda: relaxation_closure(int(children[3]), config),
    ]
    results = []
    for battery in batteries:
        result = battery()
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{result.name}: {'PASS' if result.passed else 'FAIL'} ({result.detail})")
        if progress:
            progress(result.name)
        results.append(result)
    return results


def format_table(results: Sequence[BatteryResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'battery'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  {r.detail}")
    return "\n".join(lines)
