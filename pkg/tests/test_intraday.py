import numpy as np
import pytest

from elmfin import intraday, market_sim
from elmfin.intraday import Stream
from elmfin.market_sim import LobSnapshot, MarketConfig, Trade


def tiny_stream():
    trades = [
        Trade(0.0, 10.0, 1.0),
        Trade(50.0, 10.0, 1.0),
        Trade(120.0, 20.0, 3.0),
        Trade(400.0, 12.0, 2.0),
    ]
    snaps = [
        LobSnapshot(0.0, [(9.9, 100.0), (9.8, 50.0)], [(10.1, 100.0), (10.2, 50.0)]),
        LobSnapshot(200.0, [(9.9, 300.0)], [(10.1, 100.0)]),
        LobSnapshot(350.0, [(9.9, 100.0)], [(10.1, 100.0)]),
    ]
    return Stream.from_records(trades, snaps)


def test_vwap_weighted_mean():
    st = tiny_stream()
    feats = intraday.compute_features(st, 40.0, 340.0, delta=300.0)
    # trades inside [40, 340): (10, q=1) and (20, q=3)
    assert feats["vwap"] == pytest.approx((10 * 1 + 20 * 3) / 4.0)
    assert feats["volume"] == 4.0


def test_vwap_falls_back_to_close_when_no_volume():
    st = tiny_stream()
    feats = intraday.compute_features(st, 130.0, 360.0, delta=100.0)
    assert feats["volume"] == 0.0
    assert feats["vwap"] == feats["close"] == 20.0


def test_ohlc_piecewise_constant_convention():
    st = tiny_stream()
    feats = intraday.compute_features(st, 60.0, 350.0)
    assert feats["open"] == 10.0          # price standing at t=60
    assert feats["close"] == 20.0         # last trade before 350
    assert feats["high"] == 20.0
    assert feats["low"] == 10.0


def test_twap_exact_integral():
    st = tiny_stream()
    feats = intraday.compute_features(st, 100.0, 300.0)
    # price path on [100, 300): 10 until 120, then 20
    expected = (10 * 20 + 20 * 180) / 200.0
    assert feats["twap"] == pytest.approx(expected, rel=1e-12)


def test_oi_symmetric_book_is_zero():
    snaps = [LobSnapshot(0.0, [(9.9, 100.0), (9.8, 70.0)], [(10.1, 100.0), (10.2, 70.0)])]
    trades = [Trade(0.0, 10.0, 1.0)]
    st = Stream.from_records(trades, snaps)
    feats = intraday.compute_features(st, 0.0, 10.0, delta=5.0)
    assert feats["oi_1"] == feats["oi_5"] == feats["oi_inf"] == 0.0
    assert feats["twa_oi_1"] == 0.0


def test_oi_bounds_on_generated_stream():
    cfg = MarketConfig(seed=1, n_days=1, session_minutes=30)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    assert np.all(st.snap_oi >= -1.0) and np.all(st.snap_oi <= 1.0)
    X, y, times, days, _ = intraday.feature_table(st, cfg)
    names = intraday.DEFAULT_FEATURE_MASK
    for col in ("oi_1", "oi_5", "oi_inf", "twa_oi_1", "twa_oi_5", "twa_oi_inf"):
        v = X[:, names.index(col)]
        assert np.all(v >= -1.0) and np.all(v <= 1.0)
    hi, lo = X[:, names.index("high")], X[:, names.index("low")]
    op, cl = X[:, names.index("open")], X[:, names.index("close")]
    assert np.all(hi >= np.maximum(op, cl) - 1e-12)
    assert np.all(lo <= np.minimum(op, cl) + 1e-12)


def test_feature_errors_without_history():
    st = tiny_stream()
    with pytest.raises(ValueError):
        intraday.compute_features(st, -10.0, 5.0)


def test_thirteen_candidates_and_default_mask():
    assert len(intraday.FEATURE_NAMES) == 13
    assert len(intraday.DEFAULT_FEATURE_MASK) == 12
    assert "twap" not in intraday.DEFAULT_FEATURE_MASK
    cfg = MarketConfig(seed=2, n_days=1, session_minutes=20)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    X_all, *_ = intraday.feature_table(st, cfg, mask=list(intraday.FEATURE_NAMES))
    assert X_all.shape[1] == 13
    with pytest.raises(ValueError):
        intraday.feature_table(st, cfg, mask=["open", "nope"])


def test_labels_flat_path_positive():
    trades = [Trade(float(t), 10.0, 1.0) for t in range(0, 2000, 50)]
    snaps = [LobSnapshot(0.0, [(9.9, 1.0)], [(10.1, 1.0)])]
    st = Stream.from_records(trades, snaps)
    labels, kept, dropped = intraday.label_rows(st, [100.0, 500.0], horizon=300.0)
    assert np.all(labels == 1.0)


def test_labels_decreasing_path_negative():
    trades = [Trade(float(t), 100.0 - 0.01 * t, 1.0) for t in range(0, 2000, 50)]
    snaps = [LobSnapshot(0.0, [(9.9, 1.0)], [(10.1, 1.0)])]
    st = Stream.from_records(trades, snaps)
    labels, kept, dropped = intraday.label_rows(st, [100.0, 500.0], horizon=300.0)
    assert np.all(labels == -1.0)


def test_labels_match_brute_force_and_drop():
    cfg = MarketConfig(seed=3, n_days=1, session_minutes=30)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    times = np.arange(300.0, cfg.session_seconds, 120.0)
    labels, kept, dropped = intraday.label_rows(st, times, horizon=300.0)
    j = 0
    for i, t in enumerate(times):
        if t + 300.0 > st.trade_ts[-1]:
            assert not kept[i]
            continue
        now = st.price_at(t)
        ahead = st.price_at(t + 300.0)
        assert labels[j] == (1.0 if ahead >= now else -1.0)
        j += 1
    assert dropped == int((~kept).sum())


def blobs(n, seed, gap=4.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X += (gap / 2.0) * y[:, None]
    return X, y


def test_logistic_separable_blobs():
    X, y = blobs(400, seed=4)
    model = intraday.train_logistic(X, y)
    acc = intraday.metrics(y, intraday.lr_predict_label(model, X))["accuracy"]
    assert acc >= 99.0


def test_logistic_constant_labels():
    X, _ = blobs(100, seed=5)
    y = np.ones(100)
    model = intraday.train_logistic(X, y)
    assert np.all(intraday.lr_predict_label(model, X) == 1.0)


def test_logistic_near_stationarity():
    # non-separable data: the optimum is interior, so the gradient must vanish
    rng = np.random.default_rng(6)
    X = rng.normal(size=(500, 3))
    logits = X @ np.array([1.0, -2.0, 0.5])
    y = np.where(rng.random(500) < 1 / (1 + np.exp(-logits)), 1.0, -1.0)
    model = intraday.train_logistic(X, y, iters=1000)
    assert intraday.logistic_gradient_norm(model, X, y) <= 1e-4


def test_elm_classifier_separable_blobs():
    X, y = blobs(400, seed=7)
    model = intraday.elm_classify_train(X, y, L=30, scale=0.01, seed=0)
    acc = intraday.metrics(y, intraday.elm_predict_label(model, X))["accuracy"]
    assert acc >= 99.0


def test_elm_capacity_monotone_on_train():
    cfg = MarketConfig(seed=8, n_days=2, session_minutes=60)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    X, y, *_ = intraday.feature_table(st, cfg)
    acc = {}
    for L in (30, 300):
        m = intraday.elm_classify_train(X, y, L=L, scale=0.01, seed=1)
        acc[L] = intraday.metrics(y, intraday.elm_predict_label(m, X))["accuracy"]
    assert acc[300] >= acc[30]


def test_elm_zero_beta_ties_positive():
    X, y = blobs(50, seed=9)
    model = intraday.elm_classify_train(X, y, L=5, scale=0.01, seed=0)
    zero = type(model)(model.layer, np.zeros_like(model.beta), model.ridge)
    assert np.all(intraday.elm_predict_label(zero, X) == 1.0)


def test_metrics_trivials():
    y = np.array([1.0, -1.0, 1.0, -1.0])
    out = intraday.metrics(y, y)
    assert out == {"accuracy": 100.0, "f1": 100.0, "f1_degenerate": False}
    allpos = intraday.metrics(y, np.ones(4))
    assert allpos["accuracy"] == 50.0
    assert allpos["f1"] == pytest.approx(100.0 * 2 / 3, rel=1e-12)


def test_metrics_zero_denominator_flagged():
    out = intraday.metrics(np.array([-1.0, -1.0]), np.array([-1.0, -1.0]))
    assert out["f1"] == 0.0 and out["f1_degenerate"]


def test_metrics_match_confusion_matrix():
    rng = np.random.default_rng(10)
    y = np.where(rng.random(200) < 0.4, 1.0, -1.0)
    p = np.where(rng.random(200) < 0.5, 1.0, -1.0)
    out = intraday.metrics(y, p)
    tp = np.sum((p == 1) & (y == 1)); fp = np.sum((p == 1) & (y == -1))
    fn = np.sum((p == -1) & (y == 1)); tn = np.sum((p == -1) & (y == -1))
    assert out["accuracy"] == pytest.approx(100.0 * (tp + tn) / 200)
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    assert out["f1"] == pytest.approx(100.0 * 2 * prec * rec / (prec + rec))


def test_rolling_run_no_lookahead_and_records():
    cfg = MarketConfig(seed=11, n_days=4, session_minutes=60)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    X, y, times, days, _ = intraday.feature_table(st, cfg)
    records = intraday.rolling_run(X, y, times, days, n_train_days=2, lr_iters=50)
    test_days = sorted({r["day"] for r in records})
    assert test_days == [2, 3]
    assert {r["model"] for r in records} == {"elm30", "elm300", "lr"}
    for r in records:
        assert 0.0 <= r["accuracy"] <= 100.0
        assert r["train_ms"] >= 0.0


def test_rolling_single_day_equals_direct_split():
    cfg = MarketConfig(seed=12, n_days=2, session_minutes=60)
    st = Stream.from_records(*market_sim.generate_market(cfg))
    X, y, times, days, _ = intraday.feature_table(st, cfg)
    records = intraday.rolling_run(
        X, y, times, days, n_train_days=1, model_specs={"elm30": {"L": 30}}, seed=3
    )
    assert len(records) == 1
    train, test = days == 0, days == 1
    model = intraday.elm_classify_train(X[train], y[train], L=30, seed=3)
    direct = intraday.metrics(y[test], intraday.elm_predict_label(model, X[test]))
    assert records[0]["accuracy"] == direct["accuracy"]
    assert records[0]["f1"] == direct["f1"]


def test_stream_csv_round_trip(tmp_path):
    cfg = MarketConfig(seed=13, n_days=1, session_minutes=10)
    trades, snaps = market_sim.generate_market(cfg)
    market_sim.write_trades_csv(trades, tmp_path / "t.csv")
    market_sim.write_snapshots_csv(snaps, tmp_path / "s.csv")
    tr2 = market_sim.read_trades_csv(tmp_path / "t.csv")
    sn2 = market_sim.read_snapshots_csv(tmp_path / "s.csv")
    assert len(tr2) == len(trades) and len(sn2) == len(snaps)
    s1 = Stream.from_records(trades, snaps)
    s2 = Stream.from_records(tr2, sn2)
    np.testing.assert_array_equal(s1.trade_px, s2.trade_px)
    np.testing.assert_array_equal(s1.snap_oi, s2.snap_oi)


def test_snapshot_invariants():
    with pytest.raises(ValueError):
        LobSnapshot(0.0, [(10.2, 1.0)], [(10.1, 1.0)])   # crossed book
    with pytest.raises(ValueError):
        LobSnapshot(0.0, [(9.8, 1.0), (9.9, 1.0)], [(10.1, 1.0)])  # unsorted
    with pytest.raises(ValueError):
        Trade(0.0, 10.0, 0.0)
