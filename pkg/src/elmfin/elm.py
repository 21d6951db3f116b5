"""Randomized single-hidden-layer networks trained by ridge least squares.

The network is ``f(x) = sum_i beta_i * G(w_i . x + b_i)`` with the hidden
weights ``(w_i, b_i)`` drawn once from a zero-mean normal and never updated;
only the output weights ``beta`` are fitted, by (regularized) linear least
squares on the hidden-layer output matrix ``H``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

ACTIVATIONS = ("sine", "tanh", "sigmoid")


class SingularSystemError(RuntimeError):
    """Normal equations could not be solved (rank-deficient H with C=0)."""


def activation_deriv(kind: str, z, order: int = 0):
    """Evaluate an activation or one of its first two derivatives.

    All three kinds are smooth on the whole real line, so the derivatives
    are exact closed forms rather than finite differences.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    z = np.asarray(z, dtype=float)
    if kind == "sine":
        return (np.sin(z), np.cos(z), -np.sin(z))[order]
    if kind == "tanh":
        t = np.tanh(z)
        if order == 0:
            return t
        if order == 1:
            return 1.0 - t * t
        return -2.0 * t * (1.0 - t * t)
    if kind == "sigmoid":
        # clip to keep exp from overflowing; sigmoid saturates long before 500
        s = 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))
        if order == 0:
            return s
        if order == 1:
            return s * (1.0 - s)
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class HiddenLayer:
    """Random hidden layer: weights (L, d), biases (L,), all N(0, scale^2)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str
    scale: float
    seed: int

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


def init_hidden_layer(d: int, L: int, scale: float, activation: str, seed: int) -> HiddenLayer:
    """Draw a hidden layer deterministically from `seed`.

    Weights and biases for each node are drawn together (one row of a single
    (L, d+1) normal draw), so layers built from the same seed are nested:
    the first L' nodes of an L-node layer equal the L'-node layer.
    """
    if d < 1 or L < 1:
        raise ValueError(f"d and L must be >= 1, got d={d}, L={L}")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    wb = rng.normal(0.0, scale, size=(L, d + 1))
    return HiddenLayer(wb[:, :d].copy(), wb[:, d].copy(), activation, float(scale), int(seed))


def hidden_matrix(layer: HiddenLayer, X: np.ndarray) -> np.ndarray:
    """Hidden-layer output matrix H with H[j, i] = G(w_i . x_j + b_i)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != layer.input_dim:
        raise ValueError(
            f"input dim mismatch: layer expects {layer.input_dim}, got {X.shape[1]}"
        )
    Z = X @ layer.weights.T + layer.biases
    return activation_deriv(layer.activation, Z, 0)


def fit_ridge(H: np.ndarray, Y: np.ndarray, C: float, svd_fallback: bool = True) -> np.ndarray:
    """Solve min ||H beta - Y||^2 + C ||beta||^2 via the normal equations.

    Cholesky on H'H + C I first; if that breaks down and C == 0, falls back
    to an SVD pseudoinverse (minimum-norm least squares) unless disabled.
    """
    H = np.asarray(H, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if H.ndim != 2 or H.shape[0] != Y.shape[0]:
        raise ValueError(f"incompatible shapes H{H.shape}, Y{Y.shape}")
    if C < 0:
        raise ValueError(f"ridge constant must be >= 0, got {C}")
    if not (np.isfinite(H).all() and np.isfinite(Y).all()):
        raise ValueError("non-finite entries in H or Y")
    G = H.T @ H
    if C > 0:
        G[np.diag_indices_from(G)] += C
    try:
        c, low = cho_factor(G, overwrite_a=True, check_finite=False)
        beta = cho_solve((c, low), H.T @ Y, check_finite=False)
        # one step of iterative refinement: the Gram product squares the
        # condition number, and this recovers most of the lost digits
        resid = H.T @ (Y - H @ beta) - C * beta
        return beta + cho_solve((c, low), resid, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    if not svd_fallback:
        raise SingularSystemError(
            "H'H + C I is not positive definite and SVD fallback is disabled"
        )
    return np.linalg.lstsq(H, Y, rcond=None)[0] if C == 0 else _svd_ridge(H, Y, C)


def _svd_ridge(H, Y, C):
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    d = s / (s * s + C)
    return Vt.T @ (d * (U.T @ Y))


@dataclass(frozen=True)
class ElmModel:
    """A fitted network: fixed hidden layer plus trained output weights."""

    layer: HiddenLayer
    beta: np.ndarray
    ridge: float

    def __post_init__(self):
        if self.beta.shape != (self.layer.n_nodes,):
            raise ValueError(
                f"beta length {self.beta.shape} does not match L={self.layer.n_nodes}"
            )


def fit_elm(
    X: np.ndarray,
    y: np.ndarray,
    L: int,
    scale: float,
    activation: str,
    C: float,
    seed: int,
) -> ElmModel:
    """Draw a hidden layer and fit the output weights in one step."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    layer = init_hidden_layer(X.shape[1], L, scale, activation, seed)
    H = hidden_matrix(layer, X)
    beta = fit_ridge(H, np.asarray(y, dtype=float), C)
    return ElmModel(layer, beta, float(C))


def predict(model: ElmModel, X: np.ndarray, batch_size: int | None = None) -> np.ndarray:
    """Evaluate the network on rows of X.

    With `batch_size` set, the hidden matrix is materialized one row-batch at
    a time, keeping memory at O(batch_size * L) regardless of len(X).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if batch_size is None or batch_size >= X.shape[0]:
        return hidden_matrix(model.layer, X) @ model.beta
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], batch_size):
        stop = min(start + batch_size, X.shape[0])
        out[start:stop] = hidden_matrix(model.layer, X[start:stop]) @ model.beta
    return out


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


@dataclass(frozen=True)
class Dataset:
    """Supervised training pairs: inputs (N, d), targets (N,)."""

    inputs: np.ndarray
    targets: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"inputs must be a non-empty 2-d array, got {self.inputs.shape}")
        if self.targets.shape != (self.inputs.shape[0],):
            raise ValueError("targets length must match inputs rows")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.targets).all()):
            raise ValueError("non-finite entries in dataset")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def train_test_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random row split; deterministic given the seed."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(data)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValueError("split leaves no training rows")
    perm = np.random.default_rng(seed).permutation(n)
    te, tr = perm[:n_test], perm[n_test:]
    names = list(data.feature_names)
    return (
        Dataset(data.inputs[tr], data.targets[tr], names),
        Dataset(data.inputs[te], data.targets[te], names),
    )


def save_model(model: ElmModel, path) -> None:
    """Serialize a model to a .npz container; floats round-trip bit-exactly."""
    meta = {
        "format": "elmfin-model-v1",
        "activation": model.layer.activation,
        "scale": model.layer.scale,
        "seed": model.layer.seed,
        "ridge": model.ridge,
        "d": model.layer.input_dim,
        "L": model.layer.n_nodes,
    }
    np.savez(
        path,
        weights=model.layer.weights,
        biases=model.layer.biases,
        beta=model.beta,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    )


def load_model(path) -> ElmModel:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format") != "elmfin-model-v1":
            raise ValueError(f"not an elmfin model file: {path}")
        layer = HiddenLayer(
            z["weights"], z["biases"], meta["activation"], meta["scale"], meta["seed"]
        )
        return ElmModel(layer, z["beta"], meta["ridge"])
