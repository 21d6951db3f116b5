"""Seeded synthetic tick/LOB market data.

Real exchange tick data is proprietary, so the classification pipeline runs
on a generated stream: a geometric random walk traded at Poisson times plus
order-book snapshots with stochastically imbalanced depth. The calendar is
plain: day d occupies [d * session_seconds, d * session_seconds + session).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LEVELS = 10
TICK = 0.01


@dataclass(frozen=True)
class Trade:
    timestamp: float
    price: float
    volume: float

    def __post_init__(self):
        if self.volume <= 0:
            raise ValueError("trade volume must be positive")


@dataclass(frozen=True)
class LobSnapshot:
    timestamp: float
    bids: list          # [(price, volume)] best first, price descending
    asks: list          # [(price, volume)] best first, price ascending

    def __post_init__(self):
        bp = [p for p, _ in self.bids]
        ap = [p for p, _ in self.asks]
        if bp and ap and bp[0] >= ap[0]:
            raise ValueError("best bid must be below best ask")
        if bp != sorted(bp, reverse=True) or ap != sorted(ap):
            raise ValueError("levels must be price-sorted")


@dataclass(frozen=True)
class MarketConfig:
    seed: int = 0
    n_days: int = 8
    session_minutes: int = 240
    trades_per_minute: float = 20.0
    snapshot_every_s: float = 5.0
    s0: float = 15.0
    daily_vol: float = 0.015
    base_depth: float = 5000.0
    imbalance_persistence: float = 0.995

    @property
    def session_seconds(self) -> float:
        return self.session_minutes * 60.0

    def day_of(self, ts) -> np.ndarray:
        return (np.asarray(ts) // self.session_seconds).astype(int)


def generate_market(cfg: MarketConfig) -> tuple[list[Trade], list[LobSnapshot]]:
    """Simulate the full stream; deterministic given cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    trades: list[Trade] = []
    snapshots: list[LobSnapshot] = []
    price = cfg.s0
    imb = 0.0
    per_trade_vol = cfg.daily_vol / np.sqrt(cfg.trades_per_minute * cfg.session_minutes)
    for day in range(cfg.n_days):
        t0 = day * cfg.session_seconds
        # Poisson trade times over the session
        n_tr = rng.poisson(cfg.trades_per_minute * cfg.session_minutes)
        times = np.sort(rng.uniform(0.0, cfg.session_seconds, size=n_tr))
        for ts in times:
            price *= float(np.exp(per_trade_vol * rng.standard_normal()))
            px = max(round(price / TICK) * TICK, TICK)
            vol = float(np.ceil(rng.lognormal(3.0, 1.0)))
            trades.append(Trade(t0 + float(ts), px, vol))
        # book snapshots on a fixed clock
        snap_times = np.arange(0.0, cfg.session_seconds, cfg.snapshot_every_s)
        tr_times = times
        tr_prices = np.array([t.price for t in trades[-n_tr:]]) if n_tr else np.array([cfg.s0])
        for ts in snap_times:
            i = np.searchsorted(tr_times, ts, side="right") - 1
            mid = tr_prices[i] if i >= 0 else (trades[-1].price if trades else cfg.s0)
            imb = cfg.imbalance_persistence * imb + np.sqrt(
                1 - cfg.imbalance_persistence**2
            ) * float(rng.standard_normal())
            tilt = float(np.tanh(imb))
            bids, asks = [], []
            for lvl in range(N_LEVELS):
                decay = np.exp(-0.15 * lvl)
                noise_b, noise_a = rng.lognormal(0.0, 0.3, size=2)
                bids.append((
                    round((mid - TICK * (lvl + 1)) / TICK) * TICK,
                    float(np.ceil(cfg.base_depth * decay * (1.0 + 0.6 * tilt) * noise_b)),
                ))
                asks.append((
                    round((mid + TICK * (lvl + 1)) / TICK) * TICK,
                    float(np.ceil(cfg.base_depth * decay * (1.0 - 0.6 * tilt) * noise_a)),
                ))
            snapshots.append(LobSnapshot(t0 + float(ts), bids, asks))
    return trades, snapshots


def write_trades_csv(trades: list[Trade], path) -> None:
    with open(path, "w") as fh:
        fh.write("timestamp,price,volume\n")
        for t in trades:
            fh.write(f"{float(t.timestamp)!r},{float(t.price)!r},{float(t.volume)!r}\n")


def write_snapshots_csv(snapshots: list[LobSnapshot], path) -> None:
    cols = ["timestamp"]
    for side in ("bid", "ask"):
        for lvl in range(1, N_LEVELS + 1):
            cols += [f"{side}_price_{lvl}", f"{side}_vol_{lvl}"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for s in snapshots:
            vals = [repr(float(s.timestamp))]
            for p, v in s.bids:
                vals += [repr(float(p)), repr(float(v))]
            for p, v in s.asks:
                vals += [repr(float(p)), repr(float(v))]
            fh.write(",".join(vals) + "\n")


def read_trades_csv(path) -> list[Trade]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [Trade(*(float(v) for v in row)) for row in data]


def read_snapshots_csv(path) -> list[LobSnapshot]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for row in data:
        ts = row[0]
        vals = row[1:]
        bids = [(float(vals[2 * l]), float(vals[2 * l + 1])) for l in range(N_LEVELS)]
        off = 2 * N_LEVELS
        asks = [(float(vals[off + 2 * l]), float(vals[off + 2 * l + 1])) for l in range(N_LEVELS)]
        out.append(LobSnapshot(float(ts), bids, asks))
    return out
