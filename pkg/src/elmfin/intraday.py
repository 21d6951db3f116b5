"""Intraday direction prediction: interval features from trades and order
book snapshots, binary labels from the forward price move, an ELM classifier
and a logistic-regression baseline, and the rolling daily-recalibration run."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .elm import ElmModel, fit_elm, predict
from .market_sim import LobSnapshot, Trade

# 7 transaction features + order imbalance at 3 depths + its time-weighted
# average at 3 depths = 13 candidates; the default mask drops twap (the one
# redundant average-price measure) to arrive at the 12-feature input
FEATURE_NAMES = [
    "open", "close", "high", "low", "vwap", "twap", "volume",
    "oi_1", "oi_5", "oi_inf", "twa_oi_1", "twa_oi_5", "twa_oi_inf",
]
DEFAULT_FEATURE_MASK = [n for n in FEATURE_NAMES if n != "twap"]

OI_DEPTHS = (1, 5, None)     # None means the whole visible book


@dataclass(frozen=True)
class Stream:
    """Array view of a (trades, snapshots) stream, sorted by time."""

    trade_ts: np.ndarray
    trade_px: np.ndarray
    trade_vol: np.ndarray
    snap_ts: np.ndarray
    snap_oi: np.ndarray      # (n_snaps, len(OI_DEPTHS))

    @classmethod
    def from_records(cls, trades: list[Trade], snapshots: list[LobSnapshot]) -> "Stream":
        trade_ts = np.array([t.timestamp for t in trades])
        if np.any(np.diff(trade_ts) < 0):
            raise ValueError("trade timestamps must be non-decreasing")
        snap_ts = np.array([s.timestamp for s in snapshots])
        if np.any(np.diff(snap_ts) < 0):
            raise ValueError("snapshot timestamps must be non-decreasing")
        oi = np.empty((len(snapshots), len(OI_DEPTHS)))
        for i, s in enumerate(snapshots):
            for j, depth in enumerate(OI_DEPTHS):
                k = len(s.bids) if depth is None else depth
                qb = float(sum(v for _, v in s.bids[:k]))
                qa = float(sum(v for _, v in s.asks[:k]))
                oi[i, j] = (qb - qa) / (qb + qa)
        return cls(
            trade_ts,
            np.array([t.price for t in trades]),
            np.array([t.volume for t in trades]),
            snap_ts,
            oi,
        )

    def price_at(self, t) -> np.ndarray:
        """Most recent trade price at or before t (piecewise constant)."""
        idx = np.searchsorted(self.trade_ts, np.asarray(t, dtype=float), side="right") - 1
        if np.any(idx < 0):
            raise ValueError("no trade history at or before the requested time")
        return self.trade_px[idx]


def _step_integral(ts, values, t0, t1):
    """Integral over [t0, t1] of the piecewise-constant process defined by
    (ts, values) with last-value-carried-forward."""
    i0 = np.searchsorted(ts, t0, side="right") - 1
    if i0 < 0:
        raise ValueError("process undefined at the integration start")
    i1 = np.searchsorted(ts, t1, side="right")
    knots = np.concatenate([[t0], ts[i0 + 1 : i1], [t1]])
    vals = values[i0:i1]
    return float(np.sum(vals * np.diff(knots)))


def compute_features(stream: Stream, t_start: float, t_end: float, delta: float = 300.0) -> dict:
    """All 13 candidate features for the interval [t_start, t_end).

    Transaction features use the trades inside the interval plus the running
    price for the open; book features are read at t_end (order imbalance) and
    integrated exactly over [t_end - delta, t_end] (its time-weighted average).
    """
    if not t_end > t_start:
        raise ValueError("need t_end > t_start")
    open_px = float(stream.price_at(t_start))
    lo_i = np.searchsorted(stream.trade_ts, t_start, side="left")
    hi_i = np.searchsorted(stream.trade_ts, t_end, side="left")
    px = stream.trade_px[lo_i:hi_i]
    vol = stream.trade_vol[lo_i:hi_i]
    close_px = float(px[-1]) if len(px) else open_px
    high = float(max(open_px, px.max())) if len(px) else open_px
    low = float(min(open_px, px.min())) if len(px) else open_px
    total_vol = float(vol.sum())
    vwap = float((px * vol).sum() / total_vol) if total_vol > 0 else close_px
    twap = _step_integral(stream.trade_ts, stream.trade_px, t_start, t_end) / (t_end - t_start)

    snap_i = np.searchsorted(stream.snap_ts, t_end, side="right") - 1
    if snap_i < 0:
        raise ValueError("no snapshot at or before the interval end")
    out = {
        "open": open_px, "close": close_px, "high": high, "low": low,
        "vwap": vwap, "twap": twap, "volume": total_vol,
    }
    for j, name in enumerate(("oi_1", "oi_5", "oi_inf")):
        out[name] = float(stream.snap_oi[snap_i, j])
    for j, name in enumerate(("twa_oi_1", "twa_oi_5", "twa_oi_inf")):
        out[name] = _step_integral(
            stream.snap_ts, stream.snap_oi[:, j], t_end - delta, t_end
        ) / delta
    return out


def label_rows(stream: Stream, times, horizon: float = 300.0):
    """+1 where the price `horizon` ahead is >= the current price, else -1.

    Times whose horizon falls past the last trade are dropped; returns
    (labels, kept_mask, n_dropped).
    """
    times = np.asarray(times, dtype=float)
    kept = times + horizon <= stream.trade_ts[-1]
    now = stream.price_at(times[kept])
    ahead = stream.price_at(times[kept] + horizon)
    labels = np.where(ahead >= now, 1.0, -1.0)
    return labels, kept, int((~kept).sum())


def feature_table(stream: Stream, cfg, interval: float = 300.0, delta: float = 300.0,
                  mask: list[str] | None = None):
    """Feature matrix + labels + day index for every full interval of every
    session; the first interval of a day starts one `delta` into the session
    so the book average has history."""
    mask = DEFAULT_FEATURE_MASK if mask is None else mask
    bad = set(mask) - set(FEATURE_NAMES)
    if bad:
        raise ValueError(f"unknown features {sorted(bad)}")
    rows, times = [], []
    session = cfg.session_seconds
    for day in range(cfg.n_days):
        t0 = day * session
        starts = np.arange(t0 + delta, t0 + session - interval + 1e-9, interval)
        for ts in starts:
            feats = compute_features(stream, float(ts), float(ts + interval), delta)
            rows.append([feats[name] for name in mask])
            times.append(ts + interval)
    X = np.array(rows)
    times = np.array(times)
    labels, kept, n_dropped = label_rows(stream, times, interval)
    X, times = X[kept], times[kept]
    return X, labels, times, cfg.day_of(times), n_dropped


# ---------------------------------------------------------------------------
# Models and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LrModel:
    coefs: np.ndarray
    intercept: float
    mean: np.ndarray
    std: np.ndarray
    iters: int


def train_logistic(X, y, iters: int = 1000) -> LrModel:
    """Full-batch gradient descent on the logistic loss for the fixed
    iteration budget; features are standardized internally, the step size is
    set from the curvature bound so descent is guaranteed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.isfinite(X).all():
        raise ValueError("non-finite features")
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be +-1")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Z = np.column_stack([(X - mean) / std, np.ones(len(X))])
    w = np.zeros(Z.shape[1])
    lr = 4.0 / max(float(np.linalg.norm(Z, axis=1).max() ** 2), 1e-12)
    for _ in range(iters):
        margins = y * (Z @ w)
        sig = 1.0 / (1.0 + np.exp(np.clip(margins, -500, 500)))
        grad = -(Z.T @ (y * sig)) / len(y)
        w -= lr * grad
    return LrModel(w[:-1], float(w[-1]), mean, std, iters)


def logistic_gradient_norm(model: LrModel, X, y) -> float:
    Z = np.column_stack([(np.asarray(X, float) - model.mean) / model.std, np.ones(len(X))])
    w = np.append(model.coefs, model.intercept)
    margins = np.asarray(y, float) * (Z @ w)
    sig = 1.0 / (1.0 + np.exp(np.clip(margins, -500, 500)))
    return float(np.linalg.norm(Z.T @ (np.asarray(y, float) * sig) / len(y)))


def lr_predict_label(model: LrModel, X) -> np.ndarray:
    Z = (np.asarray(X, dtype=float) - model.mean) / model.std
    score = Z @ model.coefs + model.intercept
    return np.where(score >= 0.0, 1.0, -1.0)


def elm_classify_train(
    X, y, L: int = 30, scale: float = 0.01, activation: str = "sine",
    C: float = 1e-6, seed: int = 0,
) -> ElmModel:
    """ELM regression on the +-1 labels; classification is the output sign."""
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be +-1")
    return fit_elm(np.asarray(X, dtype=float), y, L, scale, activation, C, seed)


def elm_predict_label(model: ElmModel, X) -> np.ndarray:
    # ties (exact zero output) count as +1
    return np.where(predict(model, np.asarray(X, dtype=float)) >= 0.0, 1.0, -1.0)


def metrics(y_true, y_pred) -> dict:
    """Accuracy and F1 of the +1 class, both in percent."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    acc = 100.0 * float(np.mean(y_true == y_pred))
    tp = float(np.sum((y_pred == 1) & (y_true == 1)))
    fp = float(np.sum((y_pred == 1) & (y_true == -1)))
    fn = float(np.sum((y_pred == -1) & (y_true == 1)))
    degenerate = (tp + fp == 0) or (tp + fn == 0) or (tp == 0)
    if degenerate:
        return {"accuracy": acc, "f1": 0.0, "f1_degenerate": True}
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return {
        "accuracy": acc,
        "f1": 100.0 * 2.0 * precision * recall / (precision + recall),
        "f1_degenerate": False,
    }


def rolling_run(
    X, y, times, days, n_train_days: int,
    model_specs: dict | None = None,
    lr_iters: int = 1000,
    seed: int = 0,
) -> list[dict]:
    """Daily recalibration: for each test day, retrain every model on all
    rows of earlier days, evaluate on the day. Asserts no lookahead.

    Returns one record per (day, model): day, model, accuracy, f1, train_ms.
    """
    if model_specs is None:
        model_specs = {"elm30": {"L": 30}, "elm300": {"L": 300}, "lr": {}}
    days = np.asarray(days)
    times = np.asarray(times, dtype=float)
    test_days = [d for d in np.unique(days) if d >= n_train_days]
    records = []
    for d in test_days:
        train = days < d
        test = days == d
        if not test.any():
            continue
        if not train.any():
            raise ValueError(f"no training data before day {d}")
        assert times[train].max() < times[test].min(), "lookahead in rolling split"
        for name, spec in sorted(model_specs.items()):
            t0 = time.perf_counter()
            if name == "lr":
                model = train_logistic(X[train], y[train], iters=lr_iters)
                pred = lr_predict_label(model, X[test])
            else:
                model = elm_classify_train(X[train], y[train], seed=seed, **spec)
                pred = elm_predict_label(model, X[test])
            train_ms = (time.perf_counter() - t0) * 1e3
            rec = {"day": int(d), "model": name, "train_ms": train_ms}
            rec.update(metrics(y[test], pred))
            records.append(rec)
    return records
