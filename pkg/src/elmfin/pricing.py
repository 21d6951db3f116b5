"""Ground-truth option pricing: Black-Scholes closed forms, double-barrier
image-expansion series, Monte-Carlo engines, the Heston COS pricer, implied
volatility inversion, and Heston training-set generation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm


@lru_cache(maxsize=8)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)

GENERATOR_VERSION = "heston-cos-v1"


class NoImpliedVolError(ValueError):
    """Quoted price lies outside the attainable Black-Scholes range."""


# ---------------------------------------------------------------------------
# Black-Scholes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BsParams:
    S: float
    K: float
    r: float
    sigma: float
    tau: float

    def __post_init__(self):
        if self.S <= 0 or self.K <= 0:
            raise ValueError("S and K must be positive")
        if self.sigma < 0 or self.tau < 0:
            raise ValueError("sigma and tau must be non-negative")


def bs_price_arrays(S, K, r, sigma, tau, kind: str):
    """Vectorized Black-Scholes price; degenerate sigma/tau give the
    discounted deterministic payoff (intrinsic payoff at tau=0)."""
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put', got {kind!r}")
    S, K, r, sigma, tau = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (S, K, r, sigma, tau))
    )
    disc_K = K * np.exp(-r * tau)
    vol = sigma * np.sqrt(tau)
    out = np.empty(S.shape)
    degenerate = vol <= 0
    if degenerate.any():
        fwd = S[degenerate] - disc_K[degenerate]
        out[degenerate] = np.maximum(fwd if kind == "call" else -fwd, 0.0)
    live = ~degenerate
    if live.any():
        s, k, dk, v = S[live], K[live], disc_K[live], vol[live]
        d1 = (np.log(s / k) + r[live] * tau[live]) / v + 0.5 * v
        d2 = d1 - v
        if kind == "call":
            out[live] = s * norm.cdf(d1) - dk * norm.cdf(d2)
        else:
            out[live] = dk * norm.cdf(-d2) - s * norm.cdf(-d1)
    return out


def bs_price(p: BsParams, kind: str) -> float:
    """European Black-Scholes price for a single option."""
    return float(bs_price_arrays(p.S, p.K, p.r, p.sigma, p.tau, kind))


def bs_vega(p: BsParams) -> float:
    if p.sigma <= 0 or p.tau <= 0:
        return 0.0
    v = p.sigma * np.sqrt(p.tau)
    d1 = (np.log(p.S / p.K) + p.r * p.tau) / v + 0.5 * v
    return float(p.S * norm.pdf(d1) * np.sqrt(p.tau))


# ---------------------------------------------------------------------------
# Double-barrier knock-out call (image expansion)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    """Knock-out corridor [E, F] in price space with an in-range strike."""

    E: float
    F: float
    K: float
    r: float
    sigma: float
    tau: float

    def __post_init__(self):
        if not 0 < self.E < self.K < self.F:
            raise ValueError("need 0 < E < K < F")
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("tau and sigma must be positive")


class SeriesPrice(NamedTuple):
    price: float
    tail: float       # magnitude of the last included +/-n term pair
    converged: bool   # tail <= 1e-10 * |price|


def double_barrier_call_detail(b: BarrierSpec, S: float, n_terms: int = 10) -> SeriesPrice:
    """Knock-out double-barrier call price by the image-expansion series
    (Kunitomo-Ikeda), truncated symmetrically at n in [-n_terms, n_terms]."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if S <= b.E or S >= b.F:
        return SeriesPrice(0.0, 0.0, True)
    sig_rt = b.sigma * np.sqrt(b.tau)
    drift = (b.r + 0.5 * b.sigma**2) * b.tau
    W = np.log(b.F / b.E)  # corridor width in log space
    c = 2.0 * abs(b.r) / b.sigma**2 + 1.0
    n = np.arange(-n_terms, n_terms + 1, dtype=float)

    d1 = (np.log(S / b.K) + 2.0 * n * W + drift) / sig_rt
    d2 = (np.log(S / b.F) + 2.0 * n * W + drift) / sig_rt
    d3 = (np.log(b.E**2 / (b.K * S)) - 2.0 * n * W + drift) / sig_rt
    d4 = (np.log(b.E**2 / (b.F * S)) - 2.0 * n * W + drift) / sig_rt

    # powers computed in logs; the cdf differences underflow to 0 long
    # before the exponents overflow, so the products stay finite
    log_ratio = n * W                      # ln(F^n / E^n)
    log_image = (n + 1) * np.log(b.E) - n * np.log(b.F) - np.log(S)  # ln(E^{n+1}/(F^n S))

    spot_terms = np.exp(c * log_ratio) * (norm.cdf(d1) - norm.cdf(d2)) - np.exp(
        c * log_image
    ) * (norm.cdf(d3) - norm.cdf(d4))
    strike_terms = np.exp((c - 2.0) * log_ratio) * (
        norm.cdf(d1 - sig_rt) - norm.cdf(d2 - sig_rt)
    ) - np.exp((c - 2.0) * log_image) * (norm.cdf(d3 - sig_rt) - norm.cdf(d4 - sig_rt))

    disc_K = b.K * np.exp(-b.r * b.tau)
    price = float(S * spot_terms.sum() - disc_K * strike_terms.sum())
    tail = float(
        abs(S) * (abs(spot_terms[0]) + abs(spot_terms[-1]))
        + disc_K * (abs(strike_terms[0]) + abs(strike_terms[-1]))
    )
    converged = tail <= 1e-10 * abs(price) + 1e-15
    return SeriesPrice(price, tail, converged)


def double_barrier_call(b: BarrierSpec, S: float, n_terms: int = 10) -> float:
    return double_barrier_call_detail(b, S, n_terms).price


def mc_double_barrier_call(
    b: BarrierSpec,
    S: float,
    n_paths: int,
    n_steps: int = 250,
    seed: int = 0,
    n_images: int = 2,
) -> tuple[float, float]:
    """Monte-Carlo double-barrier call with Brownian-bridge survival
    weighting, approximating continuous monitoring.

    Each step multiplies the path weight by the exact probability that a
    Brownian bridge between consecutive log prices stays inside (ln E, ln F)
    (method of images for Brownian motion killed on an interval).
    """
    if S <= b.E or S >= b.F:
        return 0.0, 0.0
    lo, hi = np.log(b.E), np.log(b.F)
    d = hi - lo
    dt = b.tau / n_steps
    v = b.sigma**2 * dt
    drift = (b.r - 0.5 * b.sigma**2) * dt
    ks = np.arange(-n_images, n_images + 1, dtype=float)
    block = 250_000
    total_w_payoff = 0.0
    total_sq = 0.0
    done = 0
    for bi in range(0, n_paths, block):
        nb = min(block, n_paths - bi)
        rng = np.random.default_rng([seed, bi])
        x = np.full(nb, np.log(S) - lo)
        w = np.ones(nb)
        for _ in range(n_steps):
            y = x + drift + np.sqrt(v) * rng.standard_normal(nb)
            inside = (y > 0.0) & (y < d)
            diff_sq = (y - x) ** 2
            surv = np.zeros(nb)
            for k in ks:
                surv += np.exp((diff_sq - (y - x + 2.0 * k * d) ** 2) / (2.0 * v)) - np.exp(
                    (diff_sq - (y + x + 2.0 * k * d) ** 2) / (2.0 * v)
                )
            w *= np.where(inside, np.clip(surv, 0.0, 1.0), 0.0)
            x = y
        payoff = w * np.maximum(np.exp(x + lo) - b.K, 0.0)
        total_w_payoff += payoff.sum()
        total_sq += (payoff**2).sum()
        done += nb
    disc = np.exp(-b.r * b.tau)
    mean = total_w_payoff / done
    var = max(total_sq / done - mean**2, 0.0)
    return disc * mean, disc * np.sqrt(var / done)


# ---------------------------------------------------------------------------
# Rainbow put on the max of two assets
# ---------------------------------------------------------------------------

def mc_rainbow_put_max(
    S1, S2, K, r, sigma1, sigma2, rho, T, n_paths: int, seed: int = 0
) -> tuple[float, float]:
    """Monte-Carlo price of a put on max(S1, S2): exact terminal sampling of
    the correlated lognormals with antithetic variates."""
    if not abs(rho) < 1:
        raise ValueError("need |rho| < 1")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_pairs = (n_paths + 1) // 2
    block = 250_000
    acc = 0.0
    acc_sq = 0.0
    done = 0
    for bi in range(0, n_pairs, block):
        nb = min(block, n_pairs - bi)
        rng = np.random.default_rng([seed, bi])
        z = rng.standard_normal((nb, 2))
        payoff_pair = np.zeros(nb)
        for sign in (1.0, -1.0):
            z1 = sign * z[:, 0]
            z2 = rho * z1 + np.sqrt(1.0 - rho**2) * sign * z[:, 1]
            sT1 = S1 * np.exp((r - 0.5 * sigma1**2) * T + sigma1 * np.sqrt(T) * z1)
            sT2 = S2 * np.exp((r - 0.5 * sigma2**2) * T + sigma2 * np.sqrt(T) * z2)
            payoff_pair += 0.5 * np.maximum(K - np.maximum(sT1, sT2), 0.0)
        acc += payoff_pair.sum()
        acc_sq += (payoff_pair**2).sum()
        done += nb
    disc = np.exp(-r * T)
    mean = acc / done
    var = max(acc_sq / done - mean**2, 0.0)
    return disc * mean, disc * np.sqrt(var / done)


def rainbow_put_max_quad(
    S1, S2, K, r, sigma1, sigma2, rho, T, n_nodes: int = 200
):
    """Deterministic put-on-max price by conditioning on the second asset and
    integrating the closed-form conditional value over its driving normal.

    The conditional value vanishes once the conditioning asset ends above K,
    so Gauss-Legendre on the remaining (smooth) interval converges spectrally.
    Used as boundary data for the two-asset PDE; cross-checked against the
    Monte-Carlo engine in the test suite. Broadcasts over S1/S2 arrays.
    """
    if not abs(rho) < 1:
        raise ValueError("need |rho| < 1")
    S1, S2 = np.broadcast_arrays(np.asarray(S1, float), np.asarray(S2, float))
    scalar = S1.ndim == 0
    S1, S2 = np.atleast_1d(S1), np.atleast_1d(S2)
    if T <= 0:
        out = np.maximum(K - np.maximum(S1, S2), 0.0)
        return float(out[0]) if scalar else out
    sig2_rt = sigma2 * np.sqrt(T)
    # payoff is zero for z above z_star (where the conditioning asset hits K)
    z_star = (np.log(K / S2) - (r - 0.5 * sigma2**2) * T) / sig2_rt
    z_lo, z_hi = -12.0, np.clip(z_star, -12.0, 12.0)
    t, wq = _leggauss(n_nodes)
    shp = S1.shape + (1,)
    halfw = 0.5 * (z_hi - z_lo).reshape(shp)
    z = 0.5 * (z_lo + z_hi.reshape(shp)) + halfw * t
    s2 = S2.reshape(shp) * np.exp((r - 0.5 * sigma2**2) * T + sig2_rt * z)
    # conditional law of ln S1 given z: mean mu, std v
    mu = (
        np.log(S1.reshape(shp))
        + (r - 0.5 * sigma1**2) * T
        + rho * sigma1 * np.sqrt(T) * z
    )
    v = sigma1 * np.sqrt(T * (1.0 - rho**2))
    a_s = (np.log(s2) - mu) / v
    a_k = (np.log(K) - mu) / v
    mean_s1 = np.exp(mu + 0.5 * v * v)
    cond = (
        (K - s2) * norm.cdf(a_s)
        + K * (norm.cdf(a_k) - norm.cdf(a_s))
        - mean_s1 * (norm.cdf(a_k - v) - norm.cdf(a_s - v))
    )
    price = np.exp(-r * T) * np.maximum(
        (cond * norm.pdf(z) * wq) @ np.ones(n_nodes) * halfw[..., 0], 0.0
    )
    return float(price[0]) if scalar else price


# ---------------------------------------------------------------------------
# Heston: COS pricer, Euler Monte-Carlo, dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HestonParams:
    rho: float
    kappa: float
    sigma_v: float
    theta: float
    v0: float
    r: float = 0.0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("need |rho| < 1")
        if min(self.kappa, self.sigma_v, self.theta, self.v0) <= 0:
            raise ValueError("kappa, sigma_v, theta, v0 must be positive")


def _heston_cf(u, h: HestonParams, T: float):
    """Characteristic function of ln(S_T/S_0) in the trap-safe form."""
    xi = h.kappa - 1j * h.rho * h.sigma_v * u
    d = np.sqrt(xi**2 + h.sigma_v**2 * (u**2 + 1j * u))
    g = (xi - d) / (xi + d)
    e = np.exp(-d * T)
    A = 1j * u * h.r * T + (h.kappa * h.theta / h.sigma_v**2) * (
        (xi - d) * T - 2.0 * np.log((1.0 - g * e) / (1.0 - g))
    )
    B = (xi - d) / h.sigma_v**2 * (1.0 - e) / (1.0 - g * e)
    return np.exp(A + B * h.v0)


def _heston_cumulants(h: HestonParams, T: float) -> tuple[float, float]:
    """First two cumulants of ln(S_T/S_0) (Fang-Oosterlee truncation rule)."""
    k, th, s, v0 = h.kappa, h.theta, h.sigma_v, h.v0
    ekt = np.exp(-k * T)
    c1 = h.r * T + (1.0 - ekt) * (th - v0) / (2.0 * k) - 0.5 * th * T
    c2 = (
        s * T * k * ekt * (v0 - th) * (8.0 * k * h.rho - 4.0 * s)
        + k * h.rho * s * (1.0 - ekt) * (16.0 * th - 8.0 * v0)
        + 2.0 * th * k * T * (-4.0 * k * h.rho * s + s**2 + 4.0 * k**2)
        + s**2 * ((th - 2.0 * v0) * np.exp(-2.0 * k * T) + th * (6.0 * ekt - 7.0) + 2.0 * v0)
        + 8.0 * k**2 * (v0 - th) * (1.0 - ekt)
    ) / (8.0 * k**3)
    return float(c1), float(c2)


def heston_cos_price(
    h: HestonParams, S, K, T, kind: str = "call", N_cos: int = 256, trunc: float = 12.0
) -> float:
    """European price under Heston by the Fourier-cosine (COS) expansion.

    The put is computed from its payoff coefficients and the call recovered
    via put-call parity, which is the numerically stable direction.
    """
    if N_cos < 16:
        raise ValueError("N_cos must be >= 16")
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put', got {kind!r}")
    x0 = np.log(S / K)
    c1, c2 = _heston_cumulants(h, T)
    half = trunc * np.sqrt(max(abs(c2), 1e-12))
    a = x0 + c1 - half
    b = x0 + c1 + half
    if not (np.isfinite(a) and np.isfinite(b) and b > a):
        raise ValueError("degenerate COS truncation interval")
    k_idx = np.arange(N_cos)
    u = k_idx * np.pi / (b - a)
    cf = _heston_cf(u, h, T) * np.exp(1j * u * x0)   # cf of ln(S_T/K)
    Fk = np.real(cf * np.exp(-1j * u * a))
    Fk[0] *= 0.5
    Vk = 2.0 / (b - a) * K * (_cos_psi(k_idx, a, b, a, 0.0) - _cos_chi(k_idx, a, b, a, 0.0))
    put = np.exp(-h.r * T) * float(Fk @ Vk)
    if kind == "put":
        return put
    return put + float(S) - K * np.exp(-h.r * T)


def _cos_chi(k, a, b, c, d):
    """Integral of e^x cos(k pi (x-a)/(b-a)) over [c, d]."""
    w = k * np.pi / (b - a)
    return (
        np.cos(w * (d - a)) * np.exp(d)
        - np.cos(w * (c - a)) * np.exp(c)
        + w * (np.sin(w * (d - a)) * np.exp(d) - np.sin(w * (c - a)) * np.exp(c))
    ) / (1.0 + w**2)


def _cos_psi(k, a, b, c, d):
    """Integral of cos(k pi (x-a)/(b-a)) over [c, d]."""
    out = np.empty(np.shape(k), dtype=float)
    w = k * np.pi / (b - a)
    nz = k != 0
    out[nz] = (np.sin(w[nz] * (d - a)) - np.sin(w[nz] * (c - a))) / w[nz]
    out[~nz] = d - c
    return out


def mc_heston_call(
    h: HestonParams, S, K, T, n_paths: int, n_steps: int = 200, seed: int = 0
) -> tuple[float, float]:
    """Full-truncation Euler Monte-Carlo European call under Heston."""
    dt = T / n_steps
    block = 250_000
    acc = acc_sq = 0.0
    done = 0
    for bi in range(0, n_paths, block):
        nb = min(block, n_paths - bi)
        rng = np.random.default_rng([seed, bi])
        x = np.full(nb, np.log(S))
        v = np.full(nb, h.v0)
        for _ in range(n_steps):
            z = rng.standard_normal((nb, 2))
            zv = z[:, 0]
            zs = h.rho * zv + np.sqrt(1.0 - h.rho**2) * z[:, 1]
            vp = np.maximum(v, 0.0)
            x += (h.r - 0.5 * vp) * dt + np.sqrt(vp * dt) * zs
            v += h.kappa * (h.theta - vp) * dt + h.sigma_v * np.sqrt(vp * dt) * zv
        payoff = np.maximum(np.exp(x) - K, 0.0)
        acc += payoff.sum()
        acc_sq += (payoff**2).sum()
        done += nb
    disc = np.exp(-h.r * T)
    mean = acc / done
    var = max(acc_sq / done - mean**2, 0.0)
    return disc * mean, disc * np.sqrt(var / done)


# ---------------------------------------------------------------------------
# Implied volatility
# ---------------------------------------------------------------------------

def implied_vol(
    price: float, S: float, K: float, r: float, T: float, kind: str,
    lo: float = 1e-4, hi: float = 5.0,
) -> float:
    """Black-Scholes implied volatility by bracketed root finding.

    Raises NoImpliedVolError when the price is outside the range attainable
    for sigma in [lo, hi] (which covers prices violating static bounds).
    """
    f = lambda sig: bs_price_arrays(S, K, r, sig, T, kind) - price
    f_lo, f_hi = float(f(lo)), float(f(hi))
    if f_lo > 0 or f_hi < 0:
        raise NoImpliedVolError(
            f"price {price} not attainable for sigma in [{lo}, {hi}]"
        )
    sigma = brentq(f, lo, hi, xtol=1e-12, rtol=8.9e-16)
    if abs(float(f(sigma))) > 1e-10:
        raise NoImpliedVolError(f"root finding left price residual above 1e-10")
    return float(sigma)


# ---------------------------------------------------------------------------
# Heston dataset generation
# ---------------------------------------------------------------------------

HESTON_RANGES: dict[str, tuple[float, float]] = {
    "k": (0.714, 1.667),
    "T": (0.10, 3.00),
    "rho": (-1.0, 0.0),
    "kappa": (0.0, 4.0),
    "sigma": (0.0, 0.5),
    "theta": (0.0, 0.1),
    "v0": (0.0, 0.5),
}

HESTON_FEATURES = list(HESTON_RANGES)


def generate_heston_dataset(
    n: int,
    seed: int,
    ranges: dict[str, tuple[float, float]] | None = None,
    r: float = 0.0,
    N_cos: int = 256,
    trunc: float = 12.0,
    max_attempts_factor: int = 20,
    require_feller: bool = True,
):
    """Sample Heston parameters uniformly and label each row with the
    Black-Scholes implied vol of the COS call price (S=1, K=moneyness, so
    moneyness is strike over forward when r=0).

    By default the draw is conditioned on the Feller condition
    2 kappa theta >= sigma_v^2. Where it fails badly the variance process
    piles up at zero and the short-maturity vol surface develops near-
    singular gradients: no smooth regressor (dense GPR included) learns
    those corners at realistic sample sizes, while the Feller-conditioned
    surface is learnable to a few 1e-3 RMSE.

    Rows whose pricing or inversion fails are resampled and counted.
    Returns (Dataset, metadata dict).
    """
    from .elm import Dataset

    if n < 1:
        raise ValueError("n must be >= 1")
    ranges = dict(HESTON_RANGES if ranges is None else ranges)
    rng = np.random.default_rng(seed)
    rows = np.empty((n, 7))
    ivs = np.empty(n)
    filled = 0
    failures = 0
    feller_rejected = 0
    attempts = 0
    max_attempts = max_attempts_factor * n
    while filled < n:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"resample budget exhausted: {failures} failures in {attempts} draws"
            )
        attempts += 1
        draw = np.array([rng.uniform(*ranges[name]) for name in HESTON_FEATURES])
        k, T, rho, kappa, sig_v, theta, v0 = draw
        if require_feller and 2.0 * kappa * theta < sig_v**2:
            feller_rejected += 1
            continue
        try:
            h = HestonParams(rho=rho, kappa=kappa, sigma_v=sig_v, theta=theta, v0=v0, r=r)
            price = heston_cos_price(h, 1.0, k, T, "call", N_cos, trunc)
            iv = implied_vol(price, 1.0, k, r, T, "call")
        except (ValueError, RuntimeError):
            failures += 1
            continue
        rows[filled] = draw
        ivs[filled] = iv
        filled += 1
    meta = {
        "seed": int(seed),
        "r": float(r),
        "ranges": {k: list(v) for k, v in ranges.items()},
        "n": int(n),
        "failures": int(failures),
        "feller_rejected": int(feller_rejected),
        "require_feller": bool(require_feller),
        "generator_version": GENERATOR_VERSION,
    }
    return Dataset(rows, ivs, list(HESTON_FEATURES)), meta


def write_heston_csv(dataset, meta: dict, path) -> None:
    """CSV with header k,T,rho,kappa,sigma,theta,v0,iv plus a .meta.json sidecar."""
    path = str(path)
    with open(path, "w") as fh:
        fh.write(",".join(HESTON_FEATURES + ["iv"]) + "\n")
        for x, y in zip(dataset.inputs, dataset.targets):
            fh.write(",".join(repr(float(v)) for v in x) + "," + repr(float(y)) + "\n")
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_heston_csv(path):
    from .elm import Dataset

    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header != HESTON_FEATURES + ["iv"]:
        raise ValueError(f"unexpected header in {path}: {header}")
    return Dataset(data[:, :-1], data[:, -1], header[:-1])
