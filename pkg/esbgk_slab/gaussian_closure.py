"""
Macroscopic fields and the ellipsoidal Gaussian closure.

The closure maps a distribution slice f to the anisotropic Gaussian with the same
density and bulk velocity whose covariance is the temperature tensor
(1 - nu) T I + nu Theta. Two evaluations are provided:

* ``analytic``: the closed-form density sampled at the grid nodes;
* ``discrete``: the member of the exponential family exp(a + b.xi + xi^T C xi) whose
  moments on the grid equal the targets to roundoff (damped Newton solve).

The discrete variant makes conservation identities hold exactly on the grid and is
the solver default.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .error_handler import (
    ConfigurationError,
    ContractViolation,
    DegenerateDataError,
    InternalConsistencyError,
    NumericalFailureError,
    TensorDegeneracyError,
)
from .quadrature import VelocityGrid, half_space_moment, sup_l1_2_norm
from .tensor_math import (
    characteristic_coefficients,
    max_eigenvalue,
    quadratic_form,
    symmetric_eigenvalues,
    symmetrize,
)

logger = logging.getLogger(__name__)

Model = Literal["esbgk", "bgk"]
ClosureKind = Literal["discrete", "analytic"]

NU_MIN = -0.5
NU_MAX = 1.0
SPD_FLOOR = 1e-10

MATCH_RTOL = 1e-12
MATCH_FAIL = 1e-8
MATCH_MAX_ITER = 50

# the cubic resolves near-repeated eigenvalues to about sqrt(eps) relative
EIGEN_GUARD = 1e-7

_UPPER = (np.array([0, 1, 2, 0, 0, 1]), np.array([0, 1, 2, 1, 2, 2]))


@dataclass(frozen=True, eq=False)
class MacroFields:
    """Density, bulk velocity, temperature and stress tensor, batched over leading axes."""

    rho: np.ndarray
    bulk_velocity: np.ndarray
    temperature: np.ndarray
    stress_tensor: np.ndarray

    def __getitem__(self, index) -> "MacroFields":
        return MacroFields(
            rho=self.rho[index],
            bulk_velocity=self.bulk_velocity[index],
            temperature=self.temperature[index],
            stress_tensor=self.stress_tensor[index],
        )

    @classmethod
    def from_values(cls, rho, bulk_velocity, stress_tensor) -> "MacroFields":
        """Build fields from rho, U and Theta; T is tr(Theta)/3."""
        stress = symmetrize(np.asarray(stress_tensor, dtype=float))
        return cls(
            rho=np.asarray(rho, dtype=float),
            bulk_velocity=np.asarray(bulk_velocity, dtype=float),
            temperature=np.trace(stress, axis1=-2, axis2=-1) / 3.0,
            stress_tensor=stress,
        )


@dataclass(frozen=True, eq=False)
class TemperatureTensor:
    nu: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    determinant: np.ndarray
    inverse: np.ndarray

    @property
    def lambda_min(self) -> np.ndarray:
        return self.eigenvalues[..., 0]

    @property
    def lambda_max(self) -> np.ndarray:
        return self.eigenvalues[..., 2]


@dataclass(frozen=True, eq=False)
class DiscreteExponent:
    """log g = coefficients . (1, xi, xi_i xi_j for i <= j) with xi = (v - U) / scale."""

    coefficients: np.ndarray
    scale: np.ndarray

    def quadratic_matrix(self) -> np.ndarray:
        """Symmetric C with xi^T C xi equal to the quadratic part of the exponent."""
        c = self.coefficients
        matrix = np.zeros(c.shape[:-1] + (3, 3))
        for k, (i, j) in enumerate(zip(*_UPPER)):
            value = c[..., 4 + k] if i == j else 0.5 * c[..., 4 + k]
            matrix[..., i, j] = value
            matrix[..., j, i] = value
        return matrix


@dataclass(frozen=True, eq=False)
class ClosureResult:
    macro: MacroFields
    tensor: TemperatureTensor
    values: np.ndarray
    exponent: Optional[DiscreteExponent] = None


def _first_index(mask: np.ndarray) -> Optional[int]:
    flat = np.flatnonzero(np.ravel(mask))
    return int(flat[0]) if flat.size else None


def compute_moments(values: np.ndarray, grid: VelocityGrid) -> MacroFields:
    """
    Macroscopic fields of one slice or of a batch of slices.

    Args:
        values: Array of shape (..., N)
        grid: Velocity grid

    Returns:
        MacroFields batched over the leading axes of values

    Raises:
        DegenerateDataError: If a slice has zero or negative density
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.size:
        raise ContractViolation(
            f"Slice has {values.shape[-1]} entries but the grid has {grid.size} nodes"
        )

    rho = half_space_moment(values, grid)
    bad = ~(rho > 0)
    if np.any(bad):
        node = _first_index(bad)
        raise DegenerateDataError(
            f"Density must be positive, got {np.ravel(rho)[node]:.3e} at node {node}", node=node
        )

    weighted = values * grid.weights
    momentum = np.einsum("...n,ni->...i", weighted, grid.nodes)
    raw = np.einsum("...n,ni,nj->...ij", weighted, grid.nodes, grid.nodes)
    bulk_velocity = momentum / rho[..., None]
    central = raw - rho[..., None, None] * bulk_velocity[..., :, None] * bulk_velocity[..., None, :]
    stress = symmetrize(central / rho[..., None, None])

    return MacroFields(
        rho=rho,
        bulk_velocity=bulk_velocity,
        temperature=np.trace(stress, axis1=-2, axis2=-1) / 3.0,
        stress_tensor=stress,
    )


def equivalence_bounds(nu: float) -> tuple[float, float]:
    """Constants (C1, C2) with C1 T <= lambda_1 and lambda_3 <= C2 T."""
    return min(1.0 - nu, 1.0 + 2.0 * nu), max(1.0 - nu, 1.0 + 2.0 * nu)


def _check_nu(nu: float):
    if not (NU_MIN <= nu < NU_MAX):
        raise ConfigurationError(f"Prandtl parameter nu must lie in [-1/2, 1), got {nu}")


def _tensor_from_matrix(matrix: np.ndarray, temperature: np.ndarray, nu: float) -> TemperatureTensor:
    matrix = symmetrize(matrix)
    eigenvalues = symmetric_eigenvalues(matrix)
    floor = SPD_FLOOR * np.maximum(temperature, 1.0)
    bad = ~(eigenvalues[..., 0] > floor)
    if np.any(bad):
        node = _first_index(bad)
        lambda_min = float(np.ravel(eigenvalues[..., 0])[node])
        raise TensorDegeneracyError(
            f"Temperature tensor is not positive definite: lambda_1 = {lambda_min:.3e} "
            f"at node {node} (nu = {nu})",
            lambda_min=lambda_min,
            node=node,
        )
    return TemperatureTensor(
        nu=float(nu),
        matrix=matrix,
        eigenvalues=eigenvalues,
        determinant=characteristic_coefficients(matrix)[2],
        inverse=symmetrize(np.linalg.inv(matrix)),
    )


def temperature_tensor(m: MacroFields, nu: float) -> TemperatureTensor:
    """
    Build (1 - nu) T I + nu Theta with its eigen-data.

    Raises:
        ConfigurationError: If nu is outside [-1/2, 1)
        TensorDegeneracyError: If lambda_1 falls below 1e-10 max(T, 1)
    """
    _check_nu(nu)
    identity = np.eye(3)
    matrix = (1.0 - nu) * m.temperature[..., None, None] * identity + nu * m.stress_tensor
    return _tensor_from_matrix(matrix, m.temperature, nu)


def bgk_temperature_tensor(m: MacroFields) -> TemperatureTensor:
    """Isotropic tensor T I of the plain BGK model."""
    matrix = m.temperature[..., None, None] * np.eye(3)
    return _tensor_from_matrix(matrix, m.temperature, 0.0)


def log_gaussian(m: MacroFields, tensor: TemperatureTensor, grid: VelocityGrid) -> np.ndarray:
    """Natural log of the analytic ellipsoidal Gaussian at every node."""
    d = grid.nodes - m.bulk_velocity[..., None, :]
    quad = np.einsum("...ni,...ij,...nj->...n", d, tensor.inverse, d)
    log_norm = np.log(m.rho) - 0.5 * np.log((2.0 * np.pi) ** 3 * tensor.determinant)
    return log_norm[..., None] - 0.5 * quad


def evaluate_gaussian(m: MacroFields, tensor: TemperatureTensor, grid: VelocityGrid) -> np.ndarray:
    """
    rho det(2 pi T)^(-1/2) exp(-(v - U)^T T^(-1) (v - U) / 2) at every grid node.

    Args:
        m: Macroscopic fields
        tensor: Temperature tensor (positive definite)
        grid: Velocity grid

    Returns:
        Array of shape (..., N)
    """
    if np.any(tensor.lambda_min <= 0):
        node = _first_index(tensor.lambda_min <= 0)
        lambda_min = float(np.ravel(tensor.lambda_min)[node])
        raise TensorDegeneracyError(
            f"Cannot evaluate a Gaussian with lambda_1 = {lambda_min:.3e}",
            lambda_min=lambda_min, node=node,
        )
    return np.exp(log_gaussian(m, tensor, grid))


def _features(xi: np.ndarray) -> np.ndarray:
    quadratic = xi[..., _UPPER[0]] * xi[..., _UPPER[1]]
    ones = np.ones(xi.shape[:-1] + (1,))
    return np.concatenate([ones, xi, quadratic], axis=-1)


def match_moments(
    m: MacroFields,
    tensor: TemperatureTensor,
    grid: VelocityGrid,
    rtol: float = MATCH_RTOL,
    max_iter: int = MATCH_MAX_ITER,
) -> np.ndarray:
    """Discrete Gaussian whose grid moments are (rho, rho U, rho (T_nu + U U))."""
    return fit_discrete_gaussian(m, tensor, grid, rtol, max_iter)[0]


def fit_discrete_gaussian(
    m: MacroFields,
    tensor: TemperatureTensor,
    grid: VelocityGrid,
    rtol: float = MATCH_RTOL,
    max_iter: int = MATCH_MAX_ITER,
) -> tuple[np.ndarray, DiscreteExponent]:
    """
    Moment-matched discrete Gaussian and its fitted exponent.

    The unknowns are the ten coefficients of log g in the scaled variable
    xi = (v - U) / sqrt(tr(T_nu) / 3). Newton starts from the analytic Gaussian
    and halves its step until the moment residual decreases.

    Raises:
        NumericalFailureError: If the relative moment error stays above 1e-8
    """
    lead = np.shape(m.rho)
    rho = np.reshape(m.rho, (-1,))
    velocity = np.reshape(m.bulk_velocity, (-1, 3))
    matrix = np.reshape(tensor.matrix, (-1, 3, 3))
    inverse = np.reshape(tensor.inverse, (-1, 3, 3))
    determinant = np.reshape(tensor.determinant, (-1,))

    scale_sq = np.trace(matrix, axis1=-2, axis2=-1) / 3.0
    scale = np.sqrt(scale_sq)
    xi = (grid.nodes[None, :, :] - velocity[:, None, :]) / scale[:, None, None]
    phi = _features(xi)

    scaled = matrix / scale_sq[:, None, None]
    target = np.zeros((rho.shape[0], 10))
    target[:, 0] = rho
    target[:, 4:] = rho[:, None] * scaled[:, _UPPER[0], _UPPER[1]]

    # analytic start: log g = log_norm - xi^T Q xi / 2 with Q = s^2 T^-1
    q = inverse * scale_sq[:, None, None]
    theta = np.zeros_like(target)
    theta[:, 0] = np.log(rho) - 0.5 * np.log((2.0 * np.pi) ** 3 * determinant)
    theta[:, 4:7] = -0.5 * q[:, [0, 1, 2], [0, 1, 2]]
    theta[:, 7:] = -q[:, [0, 0, 1], [1, 2, 2]]

    def residual(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = np.exp(np.einsum("kna,ka->kn", phi, coeffs))
        r = np.einsum("kn,kna->ka", g * grid.weights, phi) - target
        return g, r, np.max(np.abs(r), axis=-1) / rho

    g, r, err = residual(theta)
    for _ in range(max_iter):
        if np.all(err <= rtol):
            break
        gw = g * grid.weights
        jacobian = np.einsum("kn,kna,knb->kab", gw, phi, phi)
        step = np.linalg.solve(jacobian, r[..., None])[..., 0]
        alpha = np.ones(rho.shape[0])
        active = err > rtol
        for _ in range(12):
            trial = np.where(active[:, None], theta - alpha[:, None] * step, theta)
            g_trial, r_trial, err_trial = residual(trial)
            improved = (err_trial < err) | ~active
            if np.all(improved):
                break
            alpha = np.where(improved, alpha, 0.5 * alpha)
        keep = err_trial < err
        theta = np.where(keep[:, None], trial, theta)
        g = np.where(keep[:, None], g_trial, g)
        r = np.where(keep[:, None], r_trial, r)
        err = np.where(keep, err_trial, err)
        if not np.any(keep & active):
            break

    worst = float(np.max(err))
    if not np.isfinite(worst) or worst > MATCH_FAIL:
        node = int(np.argmax(np.where(np.isfinite(err), err, np.inf)))
        raise NumericalFailureError(
            f"Moment matching did not converge: relative error {worst:.3e} at node {node}"
        )
    if worst > rtol:
        logger.debug(f"Moment matching stalled at relative error {worst:.3e}")
    exponent = DiscreteExponent(
        coefficients=np.reshape(theta, lead + (10,)),
        scale=np.reshape(scale, lead),
    )
    return np.reshape(g, lead + (grid.size,)), exponent


class GaussianClosure:
    """Maps distribution slices to their Gaussian relaxation target."""

    def __init__(
        self,
        grid: VelocityGrid,
        nu: float,
        model: Model = "esbgk",
        closure: ClosureKind = "discrete",
    ):
        _check_nu(nu)
        if model not in ("esbgk", "bgk"):
            raise ConfigurationError(f"Model must be 'esbgk' or 'bgk', got '{model}'")
        if closure not in ("discrete", "analytic"):
            raise ConfigurationError(f"Closure must be 'discrete' or 'analytic', got '{closure}'")
        self.logger = logging.getLogger(__name__)
        self.grid = grid
        self.nu = float(nu)
        self.model = model
        self.closure = closure

    def tensor(self, macro: MacroFields) -> TemperatureTensor:
        if self.model == "bgk":
            return bgk_temperature_tensor(macro)
        return temperature_tensor(macro, self.nu)

    def gaussian(self, macro: MacroFields, tensor: TemperatureTensor) -> np.ndarray:
        if self.closure == "analytic":
            return evaluate_gaussian(macro, tensor, self.grid)
        return match_moments(macro, tensor, self.grid)

    def __call__(self, values: np.ndarray) -> ClosureResult:
        macro = compute_moments(values, self.grid)
        tensor = self.tensor(macro)
        if self.closure == "analytic":
            return ClosureResult(macro=macro, tensor=tensor,
                                 values=evaluate_gaussian(macro, tensor, self.grid))
        gaussian, exponent = fit_discrete_gaussian(macro, tensor, self.grid)
        return ClosureResult(macro=macro, tensor=tensor, values=gaussian, exponent=exponent)


@dataclass(frozen=True)
class EnvelopeCertificate:
    amplitude: Union[float, np.ndarray]
    decay: Union[float, np.ndarray]
    max_log_slack: float


def gaussian_envelope_certificate(
    m: MacroFields, tensor: TemperatureTensor, grid: VelocityGrid
) -> EnvelopeCertificate:
    """
    Constants with M(v) <= amplitude exp(-decay |v|^2) at every grid node.

    Uses (v-U)^T T^-1 (v-U) >= |v-U|^2 / lambda_3 and |v-U|^2 >= |v|^2/2 - |U|^2,
    so decay = 1/(4 lambda_3) and amplitude = rho det(2 pi T)^(-1/2) e^{|U|^2/(2 lambda_3)}.
    For U = 0 the sharper decay 1/(2 lambda_3) is used.

    Raises:
        InternalConsistencyError: If the per-node verification fails
    """
    lambda_max = tensor.lambda_max * (1.0 + EIGEN_GUARD)
    speed_u = np.sum(m.bulk_velocity ** 2, axis=-1)
    at_rest = speed_u == 0.0
    decay = np.where(at_rest, 0.5 / lambda_max, 0.25 / lambda_max)
    log_amp = (np.log(m.rho) - 0.5 * np.log((2.0 * np.pi) ** 3 * tensor.determinant)
               + np.where(at_rest, 0.0, 0.5 * speed_u / lambda_max))

    log_values = log_gaussian(m, tensor, grid)
    envelope = log_amp[..., None] - decay[..., None] * grid.speed_sq
    slack = log_values - envelope
    tolerance = 1e-10 * (1.0 + np.abs(envelope))
    if np.any(slack > tolerance):
        raise InternalConsistencyError(
            f"Gaussian envelope verification failed: log excess {float(np.max(slack)):.3e}"
        )

    amplitude = np.exp(log_amp)
    if np.ndim(amplitude) == 0:
        amplitude, decay = float(amplitude), float(decay)
    return EnvelopeCertificate(amplitude=amplitude, decay=decay, max_log_slack=float(np.max(slack)))


def discrete_envelope_certificate(
    m: MacroFields, exponent: DiscreteExponent, values: np.ndarray, grid: VelocityGrid
) -> EnvelopeCertificate:
    """
    Envelope constants read off the fitted exponent of a discrete Gaussian.

    With w = v - U, P = -C / s^2 (smallest eigenvalue mu) and p = b / s the exponent is
    c0 + p.w - w^T P w. The linear term costs half of mu when p != 0 and the shift
    |w|^2 >= |v|^2/2 - |U|^2 halves the rate again when U != 0.

    Raises:
        NumericalFailureError: If the fitted quadratic part is not negative definite
        InternalConsistencyError: If the per-node verification fails
    """
    scale_sq = np.asarray(exponent.scale, dtype=float) ** 2
    coefficients = np.asarray(exponent.coefficients, dtype=float)
    mu = -max_eigenvalue(exponent.quadratic_matrix()) / scale_sq
    if np.any(~(mu > 0)):
        raise NumericalFailureError(
            f"Fitted Gaussian exponent does not decay: smallest rate {float(np.min(mu)):.3e}"
        )

    linear_sq = np.sum(coefficients[..., 1:4] ** 2, axis=-1) / scale_sq
    drifting = linear_sq > 0.0
    rate = np.where(drifting, 0.5 * mu, mu)
    log_amp = coefficients[..., 0] + np.where(drifting, linear_sq / (2.0 * mu), 0.0)

    speed_u = np.sum(m.bulk_velocity ** 2, axis=-1)
    at_rest = speed_u == 0.0
    decay = np.where(at_rest, rate, 0.5 * rate)
    log_amp = log_amp + np.where(at_rest, 0.0, rate * speed_u)

    positive = values > 0
    log_values = np.where(positive, np.log(np.where(positive, values, 1.0)), -np.inf)
    envelope = log_amp[..., None] - decay[..., None] * grid.speed_sq
    slack = log_values - envelope
    tolerance = 1e-10 * (1.0 + np.abs(envelope))
    if np.any(slack > tolerance):
        raise InternalConsistencyError(
            f"Discrete Gaussian envelope verification failed: log excess {float(np.max(slack)):.3e}"
        )

    amplitude = np.exp(log_amp)
    if np.ndim(amplitude) == 0:
        amplitude, decay = float(amplitude), float(decay)
    return EnvelopeCertificate(amplitude=amplitude, decay=decay, max_log_slack=float(np.max(slack)))


def closure_envelope(result: "ClosureResult", grid: VelocityGrid) -> EnvelopeCertificate:
    """Envelope of the Gaussian a closure actually produced."""
    if result.exponent is None:
        return gaussian_envelope_certificate(result.macro, result.tensor, grid)
    return discrete_envelope_certificate(result.macro, result.exponent, result.values, grid)


@dataclass(frozen=True)
class LipschitzGap:
    gap_norm: float
    difference_norm: float
    ratio: Optional[float]
    bound: Optional[float]
    decay: float


def gaussian_lipschitz_gap(
    f_slice: np.ndarray,
    g_slice: np.ndarray,
    closure: GaussianClosure,
    constant: Optional[float] = None,
) -> LipschitzGap:
    """
    Weighted sup-distance between the Gaussians of two slices.

    gap_norm is max over nodes of |M(f) - M(g)| e^{decay |v|^2} with the smaller of the
    two envelope decay rates. The rates come from the Gaussians the closure produced:
    the fitted exponents for the discrete closure, the temperature tensors otherwise.
    The ratio to ||f - g||_{L^1_2} is reported, and a bound
    constant * ||f - g||_{L^1_2} when a calibrated constant is supplied.
    """
    grid = closure.grid
    result_f = closure(f_slice)
    result_g = closure(g_slice)
    decay = min(
        float(np.min(closure_envelope(result_f, grid).decay)),
        float(np.min(closure_envelope(result_g, grid).decay)),
    )

    diff = np.abs(result_f.values - result_g.values)
    positive = diff > 0
    log_weighted = np.where(positive, np.log(np.where(positive, diff, 1.0)) + decay * grid.speed_sq,
                            -np.inf)
    gap_norm = float(np.exp(np.max(log_weighted))) if np.any(positive) else 0.0
    difference_norm = sup_l1_2_norm(np.asarray(f_slice) - np.asarray(g_slice), grid)

    ratio = gap_norm / difference_norm if difference_norm > 0 else None
    bound = constant * difference_norm if constant is not None else None
    return LipschitzGap(
        gap_norm=gap_norm,
        difference_norm=difference_norm,
        ratio=ratio,
        bound=bound,
        decay=decay,
    )


def temperature_quadratic_form(tensor: TemperatureTensor, kappa: np.ndarray) -> np.ndarray:
    """kappa^T T_nu kappa."""
    return quadratic_form(tensor.matrix, kappa)


def directional_temperature(m: MacroFields, kappa: np.ndarray) -> np.ndarray:
    """kappa^T Theta kappa, the temperature seen along the unit direction kappa."""
    return quadratic_form(m.stress_tensor, kappa)


def critical_quadratic_form(values: np.ndarray, grid: VelocityGrid, kappa: np.ndarray) -> float:
    """
    (1/(2 rho)) integral of f (|v-U|^2 - ((v-U).kappa)^2) by direct quadrature.

    At nu = -1/2 this equals kappa^T T_nu kappa for unit kappa.
    """
    values = np.asarray(values, dtype=float)
    macro = compute_moments(values, grid)
    kappa = np.asarray(kappa, dtype=float)
    d = grid.nodes - macro.bulk_velocity
    integrand = np.sum(d ** 2, axis=1) - (d @ kappa) ** 2
    return float(half_space_moment(values, grid, None, integrand) / (2.0 * macro.rho))
