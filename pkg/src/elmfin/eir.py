"""Incremental ELM growth: add hidden nodes one at a time, choosing the best
of k random candidates by regularized cost, with a rank-one update of the
regularized pseudoinverse D = (H'H + CI)^{-1} H'.

The update for a new hidden-output column v is the bordered-inverse formula

    M = v'(I - H D) / (v'(I - H D) v + C)
    D_new = [D (I - v M); M],    beta_new = D_new T

which extends D exactly (it is the block inverse of the grown Gram matrix),
so beta after every step coincides with a batch ridge solve up to rounding.
An exact-recompute mode re-solves the normal equations after each accepted
node for when accumulated drift matters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .elm import (
    Dataset,
    ElmModel,
    HiddenLayer,
    activation_deriv,
    fit_ridge,
    rmse,
)


@dataclass(frozen=True)
class EirConfig:
    N0: int
    Nmax: int
    epsilon: float
    k: int
    C: float
    seed: int
    scale: float
    activation: str
    mode: str = "recursive"        # or "exact"
    max_resamples: int = 10

    def __post_init__(self):
        if not 1 <= self.N0 <= self.Nmax:
            raise ValueError(f"need 1 <= N0 <= Nmax, got N0={self.N0}, Nmax={self.Nmax}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.C < 0:
            raise ValueError("C must be >= 0")
        if self.mode not in ("recursive", "exact"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class EirState:
    weights: np.ndarray    # (s, d) accumulated hidden weights
    biases: np.ndarray     # (s,)
    H: np.ndarray          # (N, s) hidden output matrix
    D: np.ndarray          # (s, N) regularized pseudoinverse
    beta: np.ndarray       # (s,)
    s: int
    C: float
    accuracy: float        # training RMSE


@dataclass
class TraceRow:
    s: int
    J: float
    epsilon_s: float
    wall_ms: float
    chosen_candidate: int
    test_rmse: float | None = None


def _node_column(X, w, b, activation):
    return activation_deriv(activation, X @ w + b, 0)


def _ridge_pseudoinverse(H, C):
    G = H.T @ H
    if C > 0:
        G[np.diag_indices_from(G)] += C
    return np.linalg.solve(G, H.T)


def eir_init(data: Dataset, cfg: EirConfig) -> EirState:
    """Draw the initial N0 nodes and solve the ridge system directly."""
    rng = np.random.default_rng([cfg.seed, 0])
    wb = rng.normal(0.0, cfg.scale, size=(cfg.N0, data.inputs.shape[1] + 1))
    weights, biases = wb[:, :-1], wb[:, -1]
    H = activation_deriv(cfg.activation, data.inputs @ weights.T + biases, 0)
    D = _ridge_pseudoinverse(H, cfg.C)
    beta = D @ data.targets
    return EirState(
        weights, biases, H, D, beta, cfg.N0, cfg.C, rmse(data.targets, H @ beta)
    )


def eir_step(
    state: EirState,
    data: Dataset,
    cfg: EirConfig,
    rng: np.random.Generator,
) -> tuple[EirState, float, int]:
    """Grow the network by one node, keeping the cheapest of k candidates.

    Returns (new state, cost J of the accepted node, chosen candidate index).
    Candidates whose update denominator nearly vanishes (the new column is
    numerically in the span of H, only possible at C=0) are resampled up to
    cfg.max_resamples times.
    """
    T = data.targets
    X = data.inputs
    H, D, beta = state.H, state.D, state.beta
    best = None
    idx = 0
    resamples = 0
    while idx < cfg.k:
        wb = rng.normal(0.0, cfg.scale, size=X.shape[1] + 1)
        w, b = wb[:-1], wb[-1]
        v = _node_column(X, w, b, cfg.activation)
        u = v - D.T @ (H.T @ v)            # (I - H D)' v
        if cfg.C == 0.0:
            # I - H D is an exact projector at C=0; applying it twice cleans
            # the cancellation error when v is close to span(H)
            u = u - D.T @ (H.T @ u)
        denom = float(u @ v) + cfg.C
        if denom <= 1e-10 * max(float(v @ v), 1.0):
            resamples += 1
            if resamples > cfg.max_resamples:
                raise RuntimeError(
                    f"candidate resampling bound exceeded at s={state.s + 1}"
                )
            continue
        m_row = u / denom
        beta_tail = float(m_row @ T)
        dv = D @ v
        beta_head = beta - dv * beta_tail
        resid = T - H @ beta_head - v * beta_tail
        J = float(resid @ resid) + cfg.C * (
            float(beta_head @ beta_head) + beta_tail**2
        )
        if best is None or J < best[0]:   # strict <: ties keep the lowest index
            best = (J, idx, w, b, v, m_row, dv, beta_head, beta_tail)
        idx += 1
    J, chosen, w, b, v, m_row, dv, beta_head, beta_tail = best
    weights = np.vstack([state.weights, w])
    biases = np.append(state.biases, b)
    H_new = np.column_stack([H, v])
    if cfg.mode == "exact":
        D_new = _ridge_pseudoinverse(H_new, cfg.C)
        beta_new = D_new @ T
    else:
        D_new = np.vstack([D - np.outer(dv, m_row), m_row])
        beta_new = np.append(beta_head, beta_tail)
    new_state = EirState(
        weights, biases, H_new, D_new, beta_new, state.s + 1, cfg.C,
        rmse(T, H_new @ beta_new),
    )
    return new_state, J, chosen


def eir_train(
    data: Dataset,
    cfg: EirConfig,
    eval_data: Dataset | None = None,
) -> tuple[ElmModel, list[TraceRow]]:
    """Grow from N0 to at most Nmax nodes or until the training RMSE drops
    to cfg.epsilon; returns the final model and the per-step growth trace."""
    state = eir_init(data, cfg)
    trace: list[TraceRow] = []
    eval_H = None
    if eval_data is not None:
        eval_H = activation_deriv(
            cfg.activation, eval_data.inputs @ state.weights.T + state.biases, 0
        )
    trace.append(
        TraceRow(
            state.s, float("nan"), state.accuracy, 0.0, -1,
            None if eval_data is None else rmse(eval_data.targets, eval_H @ state.beta),
        )
    )
    while state.s < cfg.Nmax and state.accuracy > cfg.epsilon:
        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, state.s + 1])
        state, J, chosen = eir_step(state, data, cfg, rng)
        wall_ms = (time.perf_counter() - t0) * 1e3
        test = None
        if eval_data is not None:
            col = _node_column(
                eval_data.inputs, state.weights[-1], state.biases[-1], cfg.activation
            )
            eval_H = np.column_stack([eval_H, col])
            test = rmse(eval_data.targets, eval_H @ state.beta)
        trace.append(TraceRow(state.s, J, state.accuracy, wall_ms, chosen, test))
    layer = HiddenLayer(state.weights, state.biases, cfg.activation, cfg.scale, cfg.seed)
    return ElmModel(layer, state.beta, cfg.C), trace


def batch_beta(data: Dataset, state: EirState, C: float) -> np.ndarray:
    """Independent batch solve on the grown H (for recursion verification)."""
    if C == 0:
        return np.linalg.lstsq(state.H, data.targets, rcond=None)[0]
    return fit_ridge(state.H, data.targets, C)


def write_trace_csv(trace: list[TraceRow], path, include_wall_ms: bool = True) -> None:
    """Growth trace CSV; wall_ms can be dropped for byte-reproducible output."""
    cols = ["s", "J", "epsilon_s"] + (["wall_ms"] if include_wall_ms else []) + [
        "chosen_candidate"
    ]
    has_test = any(row.test_rmse is not None for row in trace)
    if has_test:
        cols.append("test_rmse")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace:
            vals = [str(row.s), repr(row.J), repr(row.epsilon_s)]
            if include_wall_ms:
                vals.append(repr(row.wall_ms))
            vals.append(str(row.chosen_candidate))
            if has_test:
                vals.append("" if row.test_rmse is None else repr(row.test_rmse))
            fh.write(",".join(vals) + "\n")
