import json

import numpy as np
import pytest

from elmfin import ivs
from elmfin.ivs import IvQuote


def test_log_moneyness_is_forward_moneyness():
    q = IvQuote(K=110.0, S=100.0, r=0.02, T=1.0, iv=0.2, kind="call")
    assert q.log_moneyness == pytest.approx(np.log(110.0 / (100.0 * np.exp(0.02))), rel=1e-14)


def test_clean_rejects_itm_put():
    # k > 0 means strike above forward: in the money for a put
    q = IvQuote(K=125.0, S=100.0, r=0.0, T=1.0, iv=0.2, kind="put")
    assert q.log_moneyness > 0
    kept, rejected = ivs.clean_quotes([q])
    assert kept == [] and rejected[0][1] == ivs.REJECT_ITM


def test_clean_rejects_itm_call():
    q = IvQuote(K=80.0, S=100.0, r=0.0, T=1.0, iv=0.2, kind="call")
    _, rejected = ivs.clean_quotes([q])
    assert rejected[0][1] == ivs.REJECT_ITM


def test_clean_rejects_long_maturity():
    q = IvQuote(K=100.0, S=100.0, r=0.0, T=3.5, iv=0.2, kind="call")
    _, rejected = ivs.clean_quotes([q])
    assert rejected[0][1] == ivs.REJECT_MATURITY


def test_clean_rejects_moneyness_window():
    q = IvQuote(K=100.0 * np.exp(-1.3), S=100.0, r=0.0, T=1.0, iv=0.2, kind="put")
    _, rejected = ivs.clean_quotes([q])
    assert rejected[0][1] == ivs.REJECT_MONEYNESS


def test_clean_rejects_missing_iv():
    q = IvQuote(K=100.0, S=100.0, r=0.0, T=1.0, iv=float("nan"), kind="call")
    _, rejected = ivs.clean_quotes([q])
    assert rejected[0][1] == ivs.REJECT_MISSING
    q2 = IvQuote(K=100.0, S=100.0, r=0.0, T=1.0, iv=0.0, kind="call")
    _, rejected2 = ivs.clean_quotes([q2])
    assert rejected2[0][1] == ivs.REJECT_MISSING


def test_clean_synthetic_chain_zero_rejections():
    chain = ivs.synthetic_chain(500, seed=11)
    kept, rejected = ivs.clean_quotes(chain)
    assert len(kept) == 500 and rejected == []


def test_clean_idempotent():
    raw = ivs.synthetic_chain(200, seed=5) + [
        IvQuote(125.0, 100.0, 0.0, 1.0, 0.2, "put"),
        IvQuote(100.0, 100.0, 0.0, 4.0, 0.2, "call"),
    ]
    kept1, rej1 = ivs.clean_quotes(raw)
    kept2, rej2 = ivs.clean_quotes(kept1)
    assert kept2 == kept1 and rej2 == []
    assert len(rej1) == 2


def test_fit_flat_surface():
    quotes = ivs.flat_chain(300, sigma=0.2, seed=1)
    fit = ivs.fit_surface(quotes, seed=2)
    assert fit.rmse <= 1e-3
    assert fit.n_train == 240 and fit.n_test == 60


def test_fit_smooth_smile():
    rng = np.random.default_rng(7)
    quotes = []
    for _ in range(600):
        k = float(rng.uniform(-1.1, 0.29))
        T = float(rng.uniform(0.05, 2.5))
        iv = 0.2 + 0.08 * k * k + 0.05 * np.sqrt(T)
        quotes.append(IvQuote(100.0 * np.exp(0.02 * T + k), 100.0, 0.02, T, iv,
                              "put" if k <= 0 else "call"))
    fit = ivs.fit_surface(quotes, seed=3)
    assert fit.rmse <= 5e-3


def test_fit_requires_ten_quotes():
    with pytest.raises(ValueError):
        ivs.fit_surface(ivs.flat_chain(9, seed=0))


def test_audit_flat_surface_no_violations():
    fit = ivs.fit_surface(ivs.flat_chain(300, sigma=0.2, seed=1), seed=2)
    report = ivs.arbitrage_report(fit)
    assert report.violation_rate_T == 0.0
    assert report.violation_rate_K == 0.0
    assert report.violation_rate_convexity == 0.0


class KinkedSurface:
    """Flat vol with a concave price dent in K at a band of maturities."""

    def iv(self, T, k):
        iv = np.full(np.broadcast(T, k).shape, 0.2)
        dent = (np.abs(k - 0.05) < 0.01) & (T > 0.5)
        return iv + 0.3 * dent


def test_audit_flags_injected_kink():
    report = ivs.arbitrage_report(KinkedSurface())
    assert report.violation_rate_convexity >= 1.0


def test_audit_determinism_and_slice_logic():
    fit = ivs.fit_surface(ivs.synthetic_chain(800, seed=9), seed=10)
    r1 = ivs.arbitrage_report(fit)
    r2 = ivs.arbitrage_report(fit)
    assert (r1.violation_rate_T, r1.violation_rate_K, r1.violation_rate_convexity) == (
        r2.violation_rate_T, r2.violation_rate_K, r2.violation_rate_convexity
    )
    # brute-force per-cell scan must reproduce the slice rates
    K, T = r1.K_grid, r1.T_grid
    from elmfin.pricing import bs_price_arrays

    KK, TT = np.meshgrid(K, T)
    C = bs_price_arrays(1.0, KK, 0.0, fit.iv(TT, np.log(KK)), TT, "call")
    bad_T = bad_K = bad_c = 0
    for j in range(len(K)):
        if any(C[i + 1, j] - C[i, j] < ivs.DIFF_TOLERANCE for i in range(len(T) - 1)):
            bad_T += 1
    for i in range(len(T)):
        if any(-(C[i, j + 1] - C[i, j]) < ivs.DIFF_TOLERANCE for j in range(len(K) - 1)):
            bad_K += 1
        if any(C[i, j] - 2 * C[i, j + 1] + C[i, j + 2] < ivs.DIFF_TOLERANCE
               for j in range(len(K) - 2)):
            bad_c += 1
    assert r1.violation_rate_T == pytest.approx(100.0 * bad_T / len(K))
    assert r1.violation_rate_K == pytest.approx(100.0 * bad_K / len(T))
    assert r1.violation_rate_convexity == pytest.approx(100.0 * bad_c / len(T))


def test_report_outputs(tmp_path):
    fit = ivs.fit_surface(ivs.flat_chain(200, seed=3), seed=4)
    report = ivs.arbitrage_report(fit, n_K=20, n_T=15)
    ivs.write_report_json(report, tmp_path / "report.json", seed=4)
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["violation_rate_T"] == 0.0
    assert payload["grid"]["n_K"] == 20 and payload["seed"] == 4
    files = ivs.write_difference_csvs(report, tmp_path)
    assert len(files) == 3
    header = open(files[0]).readline().strip()
    assert header == "T,K,diff"
    n_lines = sum(1 for _ in open(files[0])) - 1
    assert n_lines == (15 - 1) * 20


def test_quotes_csv_round_trip(tmp_path):
    quotes = ivs.synthetic_chain(50, seed=6, date="2023-01-03")
    path = tmp_path / "quotes.csv"
    ivs.write_quotes_csv(quotes, path)
    back = ivs.read_quotes_csv(path)
    assert back == quotes


def test_chain_histogram_shape():
    chain = ivs.synthetic_chain(8000, seed=12)
    counts = np.zeros((5, 5))
    for q in chain:
        k, T = q.log_moneyness, q.T
        i = next(a for a, (lo, hi) in enumerate(ivs.K_BUCKETS) if lo <= k <= hi + 1e-12)
        j = next(a for a, (lo, hi) in enumerate(ivs.T_BUCKETS) if lo <= T <= hi + 1e-12)
        counts[i, j] += 1
    target = ivs.BUCKET_COUNTS / ivs.BUCKET_COUNTS.sum()
    got = counts / counts.sum()
    # generous tolerance: multinomial noise at n=8000
    assert np.max(np.abs(got - target)) <= 0.02
