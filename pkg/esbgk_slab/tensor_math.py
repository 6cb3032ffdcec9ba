"""
Batched algebra for symmetric 3x3 tensors.

Eigenvalues use the trigonometric solution of the characteristic cubic followed by
one guarded Newton step on the cubic, so results are deterministic and do not
depend on LAPACK.
"""

import numpy as np


def symmetrize(matrices: np.ndarray) -> np.ndarray:
    """Average a batch of 3x3 matrices with their transposes."""
    matrices = np.asarray(matrices, dtype=float)
    return 0.5 * (matrices + np.swapaxes(matrices, -1, -2))


def characteristic_coefficients(matrices: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Coefficients (c2, c1, c0) of det(lambda I - A) = lambda^3 - c2 lambda^2 + c1 lambda - c0.

    Args:
        matrices: Array of shape (..., 3, 3), assumed symmetric

    Returns:
        Trace, sum of principal 2x2 minors, determinant
    """
    a = matrices
    c2 = a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]
    c1 = (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] ** 2
          + a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] ** 2
          + a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] ** 2)
    c0 = (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] ** 2)
          - a[..., 0, 1] * (a[..., 0, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 0, 2])
          + a[..., 0, 2] * (a[..., 0, 1] * a[..., 1, 2] - a[..., 1, 1] * a[..., 0, 2]))
    return c2, c1, c0


def _newton_polish(eigenvalues: np.ndarray, c2, c1, c0) -> np.ndarray:
    lam = eigenvalues
    c2, c1, c0 = (c[..., None] for c in (c2, c1, c0))
    value = ((lam - c2) * lam + c1) * lam - c0
    slope = (3.0 * lam - 2.0 * c2) * lam + c1
    with np.errstate(divide="ignore", invalid="ignore"):
        candidate = lam - value / slope
    candidate_value = ((candidate - c2) * candidate + c1) * candidate - c0
    # near-repeated roots have tiny slopes; keep the step only where it helps
    accept = np.isfinite(candidate) & (np.abs(candidate_value) < np.abs(value))
    return np.where(accept, candidate, lam)


def symmetric_eigenvalues(matrices: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of a batch of symmetric 3x3 matrices, sorted ascending.

    Args:
        matrices: Array of shape (..., 3, 3)

    Returns:
        Array of shape (..., 3) with lambda_1 <= lambda_2 <= lambda_3
    """
    a = symmetrize(matrices)
    if a.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) matrices, got shape {a.shape}")

    off = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    q = (a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]) / 3.0
    p2 = ((a[..., 0, 0] - q) ** 2 + (a[..., 1, 1] - q) ** 2 + (a[..., 2, 2] - q) ** 2
          + 2.0 * off)
    p = np.sqrt(p2 / 6.0)
    degenerate = p == 0.0
    safe_p = np.where(degenerate, 1.0, p)

    b = (a - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    _, _, det_b = characteristic_coefficients(b)
    r = np.clip(det_b / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    largest = q + 2.0 * p * np.cos(phi)
    smallest = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    middle = 3.0 * q - largest - smallest
    eigenvalues = np.stack([smallest, middle, largest], axis=-1)
    eigenvalues = np.where(degenerate[..., None], q[..., None], eigenvalues)

    c2, c1, c0 = characteristic_coefficients(a)
    eigenvalues = _newton_polish(eigenvalues, c2, c1, c0)
    return np.sort(eigenvalues, axis=-1)


def max_eigenvalue(matrices: np.ndarray) -> np.ndarray:
    return symmetric_eigenvalues(matrices)[..., 2]


def quadratic_form(matrices: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """kappa^T A kappa for a batch of matrices and one or more directions."""
    kappa = np.asarray(kappa, dtype=float)
    return np.einsum("...i,...ij,...j->...", kappa, matrices, kappa)
