"""Gaussian-process-regression baseline: RBF kernel, exact Cholesky training,
predictive mean and variance. Deliberately dense (no inducing points) so the
O(N^3) cost is visible in timing comparisons against ELM."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

log = logging.getLogger(__name__)

# defaults for grid-searched hyperparameters (validation RMSE criterion)
DEFAULT_SIGMA_F_GRID = (0.1, 0.25, 0.5, 1.0, 2.0)
DEFAULT_ELL_GRID = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)
DEFAULT_SIGMA_N = 1e-6


def rbf_kernel(x, x2, sigma_f: float, ell: float):
    """sigma_f^2 * exp(-||x - x'||^2 / (2 ell^2)) for single points."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    diff = np.asarray(x, float) - np.asarray(x2, float)
    return sigma_f**2 * np.exp(-float(diff @ diff) / (2.0 * ell**2))


def _kernel_matrix(A, B, sigma_f, ell):
    """Pairwise RBF kernel between row sets A (n,d) and B (m,d)."""
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    sq *= -1.0 / (2.0 * ell**2)
    np.exp(sq, out=sq)
    sq *= sigma_f**2
    return sq


@dataclass(frozen=True)
class GprModel:
    X_train: np.ndarray
    alpha: np.ndarray            # (K + sigma_n^2 I)^{-1} y
    chol: tuple                  # cho_factor of K + sigma_n^2 I
    sigma_f: float
    ell: float
    sigma_n: float


def gpr_fit(X: np.ndarray, y: np.ndarray, sigma_f: float, ell: float, sigma_n: float) -> GprModel:
    """Build the kernel matrix and factorize K + sigma_n^2 I."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise ValueError("need N >= 1 rows with matching targets")
    if sigma_n < 0:
        raise ValueError("sigma_n must be >= 0")
    K = _kernel_matrix(X, X, sigma_f, ell)
    K[np.diag_indices_from(K)] += sigma_n**2
    try:
        chol = cho_factor(K, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"kernel factorization failed (sigma_n={sigma_n}); raise sigma_n"
        ) from exc
    alpha = cho_solve(chol, y, check_finite=False)
    return GprModel(X, alpha, chol, float(sigma_f), float(ell), float(sigma_n))


def gpr_predict(
    model: GprModel, X: np.ndarray, batch_size: int = 2000
) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at the rows of X.

    Variance is clamped at zero; negative pre-clamp values (rounding in the
    Cholesky solve) are logged with their worst magnitude.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.X_train.shape[1]:
        raise ValueError("input dimension mismatch")
    mean = np.empty(X.shape[0])
    var = np.empty(X.shape[0])
    for start in range(0, X.shape[0], batch_size):
        stop = min(start + batch_size, X.shape[0])
        ks = _kernel_matrix(X[start:stop], model.X_train, model.sigma_f, model.ell)
        mean[start:stop] = ks @ model.alpha
        solved = cho_solve(model.chol, ks.T, check_finite=False)
        var[start:stop] = model.sigma_f**2 - np.einsum("ij,ji->i", ks, solved)
    neg = var < 0
    if neg.any():
        log.debug("clamped %d negative predictive variances (min %.3e)",
                  int(neg.sum()), float(var.min()))
        np.maximum(var, 0.0, out=var)
    return mean, var


def gpr_grid_search(
    X_train, y_train, X_val, y_val,
    sigma_f_grid=DEFAULT_SIGMA_F_GRID,
    ell_grid=DEFAULT_ELL_GRID,
    sigma_n: float = DEFAULT_SIGMA_N,
):
    """Pick (sigma_f, ell) minimizing validation RMSE; ties keep the first."""
    best = None
    for sf in sigma_f_grid:
        for ell in ell_grid:
            model = gpr_fit(X_train, y_train, sf, ell, sigma_n)
            pred, _ = gpr_predict(model, X_val)
            err = float(np.sqrt(np.mean((pred - y_val) ** 2)))
            if best is None or err < best[0]:
                best = (err, sf, ell)
    return {"sigma_f": best[1], "ell": best[2], "val_rmse": best[0], "sigma_n": sigma_n}
