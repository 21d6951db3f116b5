"""Implied-volatility-surface fitting from option quotes and the static
no-arbitrage audit of the fitted surface.

Moneyness is measured against the forward: k = ln(K / (S e^{rT})). The audit
converts the fitted surface to call prices (S = 1, r = 0) on a mesh and
checks monotonicity in maturity, monotonicity in strike, and convexity in
strike via discrete differences."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .elm import ElmModel, fit_elm, predict
from .pricing import bs_price_arrays

# discrete differences this close to zero are rounding, not arbitrage
DIFF_TOLERANCE = -1e-10

REJECT_MISSING = "missing_iv"
REJECT_ITM = "itm"
REJECT_BOUNDS = "arbitrage_bounds"
REJECT_MONEYNESS = "moneyness_window"
REJECT_MATURITY = "maturity"

MONEYNESS_WINDOW = (-1.2, 0.3)
MAX_MATURITY = 3.0


@dataclass(frozen=True)
class IvQuote:
    K: float
    S: float
    r: float
    T: float
    iv: float              # NaN marks a missing quote
    kind: str              # "call" | "put"
    date: str = ""

    def __post_init__(self):
        if self.K <= 0 or self.S <= 0:
            raise ValueError("K and S must be positive")
        if self.kind not in ("call", "put"):
            raise ValueError(f"kind must be call or put, got {self.kind!r}")

    @property
    def log_moneyness(self) -> float:
        return float(np.log(self.K / (self.S * np.exp(self.r * self.T))))


def clean_quotes(raw: list[IvQuote]) -> tuple[list[IvQuote], list[tuple[IvQuote, str]]]:
    """Filter a raw quote list; every rejection is tagged with its reason.

    Removes quotes with missing/non-positive vol, in-the-money quotes
    (puts above / calls below the forward), prices outside the static
    no-arbitrage bounds, log moneyness outside the window, and maturities
    beyond the cap. Idempotent: cleaning a cleaned list rejects nothing.
    """
    kept: list[IvQuote] = []
    rejected: list[tuple[IvQuote, str]] = []
    for q in raw:
        reason = _rejection_reason(q)
        if reason is None:
            kept.append(q)
        else:
            rejected.append((q, reason))
    return kept, rejected


def _rejection_reason(q: IvQuote) -> str | None:
    if not np.isfinite(q.iv) or q.iv <= 0:
        return REJECT_MISSING
    k = q.log_moneyness
    if (q.kind == "put" and k > 0) or (q.kind == "call" and k < 0):
        return REJECT_ITM
    price = float(bs_price_arrays(q.S, q.K, q.r, q.iv, q.T, q.kind))
    disc_K = q.K * np.exp(-q.r * q.T)
    if q.kind == "call":
        lo_b, hi_b = max(0.0, q.S - disc_K), q.S
    else:
        lo_b, hi_b = max(0.0, disc_K - q.S), disc_K
    if price < lo_b - 1e-12 or price > hi_b + 1e-12:
        return REJECT_BOUNDS
    if not MONEYNESS_WINDOW[0] <= k <= MONEYNESS_WINDOW[1]:
        return REJECT_MONEYNESS
    if q.T > MAX_MATURITY or q.T <= 0:
        return REJECT_MATURITY
    return None


@dataclass(frozen=True)
class SurfaceFit:
    model: ElmModel
    n_train: int
    n_test: int
    rmse: float
    mae: float
    seed: int

    def iv(self, T, k) -> np.ndarray:
        """Evaluate the fitted surface at maturities T and log moneyness k."""
        T = np.asarray(T, dtype=float)
        k = np.asarray(k, dtype=float)
        T, k = np.broadcast_arrays(T, k)
        return predict(self.model, np.column_stack([T.ravel(), k.ravel()])).reshape(T.shape)


def fit_surface(
    quotes: list[IvQuote],
    L: int = 1000,
    scale: float = 0.5,
    activation: str = "tanh",
    C: float = 1e-6,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> SurfaceFit:
    """Learn (T, log moneyness) -> implied vol with a random 80/20 split."""
    if len(quotes) < 10:
        raise ValueError(f"need at least 10 quotes, got {len(quotes)}")
    X = np.array([[q.T, q.log_moneyness] for q in quotes])
    y = np.array([q.iv for q in quotes])
    perm = np.random.default_rng(seed).permutation(len(quotes))
    n_test = max(1, int(round(test_fraction * len(quotes))))
    if n_test >= len(quotes):
        raise ValueError("degenerate split")
    te, tr = perm[:n_test], perm[n_test:]
    model = fit_elm(X[tr], y[tr], L, scale, activation, C, seed)
    resid = predict(model, X[te]) - y[te]
    return SurfaceFit(
        model, len(tr), len(te),
        float(np.sqrt(np.mean(resid**2))), float(np.mean(np.abs(resid))), int(seed),
    )


@dataclass(frozen=True)
class ArbitrageReport:
    violation_rate_T: float           # % of moneyness slices with C(T) decreasing
    violation_rate_K: float           # % of maturity slices with C(K) increasing
    violation_rate_convexity: float   # % of maturity slices with C(K) concave
    K_grid: np.ndarray
    T_grid: np.ndarray
    dC_dT: np.ndarray                 # first differences along T   (len(T)-1, len(K))
    dC_dK: np.ndarray                 # first differences along K   (len(T), len(K)-1)
    d2C_dK2: np.ndarray               # second differences along K  (len(T), len(K)-2)


def arbitrage_report(
    surface,
    K_range: tuple[float, float] = (0.7, 1.2),
    T_range: tuple[float, float] = (0.05, 1.0),
    n_K: int = 100,
    n_T: int = 100,
    S: float = 1.0,
) -> ArbitrageReport:
    """Audit a fitted surface for static arbitrage on an n_T x n_K mesh.

    `surface` is a SurfaceFit or any object with .iv(T, k). IVs on the mesh
    become call prices with spot S and zero rate; a slice counts as violated
    as soon as one discrete difference crosses DIFF_TOLERANCE.
    """
    K = np.linspace(*K_range, n_K)
    T = np.linspace(*T_range, n_T)
    KK, TT = np.meshgrid(K, T)            # rows: maturities, cols: strikes
    iv = np.asarray(surface.iv(TT, np.log(KK / S)), dtype=float)
    if not np.isfinite(iv).all():
        raise ValueError("surface produced non-finite vols on the audit grid")
    C = bs_price_arrays(S, KK, 0.0, iv, TT, "call")

    dC_dT = np.diff(C, axis=0)
    dC_dK = np.diff(C, axis=1)
    d2C_dK2 = np.diff(C, n=2, axis=1)
    bad_T = (dC_dT < DIFF_TOLERANCE).any(axis=0)       # per moneyness slice
    bad_K = (-dC_dK < DIFF_TOLERANCE).any(axis=1)      # per maturity slice
    bad_conv = (d2C_dK2 < DIFF_TOLERANCE).any(axis=1)  # per maturity slice
    return ArbitrageReport(
        100.0 * float(np.mean(bad_T)),
        100.0 * float(np.mean(bad_K)),
        100.0 * float(np.mean(bad_conv)),
        K, T, dC_dT, dC_dK, d2C_dK2,
    )


def write_report_json(report: ArbitrageReport, path, seed: int | None = None) -> None:
    payload = {
        "violation_rate_T": report.violation_rate_T,
        "violation_rate_K": report.violation_rate_K,
        "violation_rate_convexity": report.violation_rate_convexity,
        "grid": {
            "K_min": float(report.K_grid[0]), "K_max": float(report.K_grid[-1]),
            "n_K": len(report.K_grid),
            "T_min": float(report.T_grid[0]), "T_max": float(report.T_grid[-1]),
            "n_T": len(report.T_grid),
        },
        "diff_tolerance": DIFF_TOLERANCE,
    }
    if seed is not None:
        payload["seed"] = int(seed)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_difference_csvs(report: ArbitrageReport, directory) -> list[str]:
    """Long-format CSVs of the three difference arrays (the audit figures)."""
    import os

    specs = [
        ("dC_dT.csv", report.dC_dT, report.T_grid[:-1], report.K_grid, "T", "K"),
        ("dC_dK.csv", report.dC_dK, report.T_grid, report.K_grid[:-1], "T", "K"),
        ("d2C_dK2.csv", report.d2C_dK2, report.T_grid, report.K_grid[:-2], "T", "K"),
    ]
    written = []
    for name, arr, rows, cols, rname, cname in specs:
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            fh.write(f"{rname},{cname},diff\n")
            for i, rv in enumerate(rows):
                for j, cv in enumerate(cols):
                    fh.write(f"{float(rv)!r},{float(cv)!r},{float(arr[i, j])!r}\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Synthetic option chains (the real vendor data is proprietary)
# ---------------------------------------------------------------------------

# maturity x moneyness histogram of a cleaned S&P-style option day: counts
# drive the sampling proportions, levels anchor the smile surface
K_BUCKETS = [(-1.2, -0.9), (-0.9, -0.6), (-0.6, -0.3), (-0.3, 0.0), (0.0, 0.3)]
T_BUCKETS = [(1 / 365, 7 / 365), (7 / 365, 30 / 365), (30 / 365, 90 / 365),
             (90 / 365, 1.0), (1.0, 3.0)]
BUCKET_COUNTS = np.array([
    [8, 134, 262, 1114, 459],
    [26, 194, 417, 2430, 917],
    [177, 725, 1421, 8480, 2934],
    [1291, 5769, 11378, 23659, 5627],
    [792, 4194, 7435, 16967, 3940],
], dtype=float)
BUCKET_IV = np.array([
    [2.28, 1.38, 0.82, 0.56, 0.42],
    [2.08, 1.02, 0.65, 0.46, 0.37],
    [1.50, 0.63, 0.44, 0.34, 0.30],
    [0.56, 0.31, 0.25, 0.24, 0.23],
    [0.44, 0.21, 0.17, 0.16, 0.16],
])


def smile_iv(T, k) -> np.ndarray:
    """Smooth positive surface interpolating the bucket-average vol levels
    bilinearly in (k, ln T)."""
    T = np.asarray(T, dtype=float)
    k = np.asarray(k, dtype=float)
    k_mid = np.array([0.5 * (a + b) for a, b in K_BUCKETS])
    logt_mid = np.array([0.5 * (np.log(a) + np.log(b)) for a, b in T_BUCKETS])
    ki = np.clip(np.interp(k, k_mid, np.arange(5.0)), 0, 4 - 1e-9)
    ti = np.clip(np.interp(np.log(np.maximum(T, 1e-6)), logt_mid, np.arange(5.0)), 0, 4 - 1e-9)
    i0, j0 = np.floor(ki).astype(int), np.floor(ti).astype(int)
    fi, fj = ki - i0, ti - j0
    v = (
        BUCKET_IV[i0, j0] * (1 - fi) * (1 - fj)
        + BUCKET_IV[i0 + 1, j0] * fi * (1 - fj)
        + BUCKET_IV[i0, j0 + 1] * (1 - fi) * fj
        + BUCKET_IV[i0 + 1, j0 + 1] * fi * fj
    )
    return v


def synthetic_chain(
    n: int = 2658,
    seed: int = 0,
    S: float = 100.0,
    r: float = 0.03,
    noise: float = 0.02,
    date: str = "synthetic",
) -> list[IvQuote]:
    """A cleaned-looking day of quotes whose (maturity, moneyness) histogram
    follows the bucket proportions; passes clean_quotes with zero rejections."""
    rng = np.random.default_rng(seed)
    probs = (BUCKET_COUNTS / BUCKET_COUNTS.sum()).ravel()
    cells = rng.choice(len(probs), size=n, p=probs)
    quotes = []
    for cell in cells:
        i, j = divmod(int(cell), len(T_BUCKETS))
        k = float(rng.uniform(*K_BUCKETS[i]))
        T = float(np.exp(rng.uniform(np.log(T_BUCKETS[j][0]), np.log(T_BUCKETS[j][1]))))
        iv = float(smile_iv(T, k) * np.exp(noise * rng.standard_normal()))
        K = float(S * np.exp(r * T) * np.exp(k))
        kind = "put" if k <= 0 else "call"
        quotes.append(IvQuote(K, S, r, T, iv, kind, date))
    return quotes


def flat_chain(n: int = 400, sigma: float = 0.2, seed: int = 0, S: float = 100.0,
               r: float = 0.02) -> list[IvQuote]:
    """Quotes from a constant-vol surface (the arbitrage-free reference)."""
    rng = np.random.default_rng(seed)
    quotes = []
    for _ in range(n):
        k = float(rng.uniform(-1.1, 0.29))
        T = float(rng.uniform(0.03, 2.9))
        K = float(S * np.exp(r * T) * np.exp(k))
        quotes.append(IvQuote(K, S, r, T, sigma, "put" if k <= 0 else "call"))
    return quotes


def write_quotes_csv(quotes: list[IvQuote], path) -> None:
    with open(path, "w") as fh:
        fh.write("date,K,S,r,T,iv,kind\n")
        for q in quotes:
            fh.write(f"{q.date},{float(q.K)!r},{float(q.S)!r},{float(q.r)!r},{float(q.T)!r},{float(q.iv)!r},{q.kind}\n")


def read_quotes_csv(path) -> list[IvQuote]:
    quotes = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "date,K,S,r,T,iv,kind":
            raise ValueError(f"unexpected quote CSV header: {header}")
        for line in fh:
            date, K, S, r, T, iv, kind = line.strip().split(",")
            quotes.append(IvQuote(float(K), float(S), float(r), float(T), float(iv), kind, date))
    return quotes
