"""Single command-line entry point: dataset generation, training and
benchmarks, PDE solving, IVS fit/audit, and the classification experiment.

Usage: elmfin SUBCOMMAND --out DIR [--config FILE] [key=value ...]

Config values resolve as defaults < config file < command-line overrides;
unknown keys are rejected rather than silently ignored. Exit codes:
0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import eir, elm, gpr, intraday, ivs, market_sim, pinn, pricing
from .runs import RunWriter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


SCHEMAS: dict[str, dict[str, tuple]] = {
    "gen-heston": {
        "n": (int, 15000),
        "seed": (int, 0),
        "r": (float, 0.0),
        "n_cos": (int, 256),
        "trunc": (float, 12.0),
        "require_feller": (_bool, True),
    },
    "train-elm": {
        "data": (str, ""),
        "L": (int, 3000),
        "scale": (float, 0.5),
        "activation": (str, "sine"),
        "C": (float, 1e-8),
        "seed": (int, 0),
        "split_seed": (int, 1),
        "test_fraction": (float, 0.2),
        "batch_size": (int, 0),
    },
    "train-eir": {
        "data": (str, ""),
        "N0": (int, 10),
        "Nmax": (int, 500),
        "epsilon": (float, 0.0),
        "k": (int, 10),
        "C": (float, 0.0),
        "seed": (int, 0),
        "split_seed": (int, 1),
        "scale": (float, 0.5),
        "activation": (str, "sine"),
        "mode": (str, "recursive"),
        "test_fraction": (float, 0.2),
        "target_rmse": (float, 0.0),
    },
    "train-gpr": {
        "data": (str, ""),
        "sigma_f": (float, 1.0),
        "ell": (float, 1.0),
        "sigma_n": (float, 1e-6),
        "grid_search": (_bool, False),
        "max_train": (int, 0),
        "split_seed": (int, 1),
        "test_fraction": (float, 0.2),
    },
    "solve-pde": {
        "preset": (str, "bs_put"),
        "K": (float, None), "r": (float, None), "sigma": (float, None),
        "sigma1": (float, None), "sigma2": (float, None), "rho": (float, None),
        "E": (float, None), "F": (float, None), "horizon": (float, None),
        "s_lo_frac": (float, None), "s_hi_frac": (float, None),
        "L": (int, None), "scale": (float, None), "activation": (str, None),
        "C": (float, None), "n_interior": (int, None), "n_boundary": (int, None),
        "n_terminal": (int, None), "layer_seed": (int, None),
        "collocation_seed": (int, None), "weighting": (str, None),
        "late_time_fraction": (float, None),
        "n_line": (int, 100),
        "n_t_slices": (int, 20),
        "mc_paths": (int, 1000000),
        "mc_seed": (int, 7),
    },
    "ivs-fit": {
        "quotes": (str, ""),
        "n": (int, 2658),
        "chain_seed": (int, 0),
        "S": (float, 100.0),
        "r": (float, 0.03),
        "noise": (float, 0.02),
        "L": (int, 1000),
        "scale": (float, 0.5),
        "activation": (str, "tanh"),
        "C": (float, 1e-6),
        "test_fraction": (float, 0.2),
        "fit_seed": (int, 0),
    },
    "ivs-audit": {
        "fit_run": (str, ""),
        "K_min": (float, 0.7), "K_max": (float, 1.2), "n_K": (int, 100),
        "T_min": (float, 0.05), "T_max": (float, 1.0), "n_T": (int, 100),
        "S": (float, 1.0),
    },
    "classify-run": {
        "sim_seed": (int, 0),
        "n_days": (int, 16),
        "session_minutes": (int, 240),
        "trades_per_minute": (float, 20.0),
        "snapshot_every_s": (float, 5.0),
        "interval_s": (float, 300.0),
        "delta_s": (float, 300.0),
        "features": (str, ",".join(intraday.DEFAULT_FEATURE_MASK)),
        "n_train_days": (int, 0),       # 0 means 6/8 of the calendar
        "lr_iters": (int, 1000),
        "model_seed": (int, 0),
    },
    "bench": {
        "data": (str, ""),
        "L_values": (_int_list, [1000, 3000]),
        "scale": (float, 0.5),
        "scale_values": (_float_list, []),
        "scale_sweep_L": (int, 1000),
        "activation": (str, "sine"),
        "C": (float, 1e-8),
        "seeds": (_int_list, [0]),
        "split_seed": (int, 1),
        "test_fraction": (float, 0.2),
        "batch_size": (int, 0),
        "include_gpr": (_bool, False),
        "gpr_sigma_f": (float, 1.0),
        "gpr_ell": (float, 1.0),
        "gpr_sigma_n": (float, 1e-6),
        "gpr_max_train": (int, 0),
    },
}

PRESET_PROBLEM_KEYS = {
    "bs_put": {"K", "r", "sigma", "horizon", "s_lo_frac", "s_hi_frac"},
    "rainbow_max_put": {"K", "r", "sigma1", "sigma2", "rho", "horizon",
                        "s_lo_frac", "s_hi_frac"},
    "double_barrier_call": {"E", "F", "K", "r", "sigma", "horizon"},
}
PINN_CONFIG_KEYS = {
    "L", "scale", "activation", "C", "n_interior", "n_boundary", "n_terminal",
    "layer_seed", "collocation_seed", "weighting", "late_time_fraction",
}


def parse_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def resolve_config(subcommand: str, file_cfg: dict, overrides: list[str]):
    """Merge defaults, file values, and key=value overrides; reject unknowns."""
    schema = SCHEMAS[subcommand]
    raw: dict[str, str] = dict(file_cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {sorted(unknown)}")
    cfg = {}
    for key, (typ, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = typ(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        else:
            cfg[key] = default
    return cfg, set(raw)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def mae(y_true, y_pred) -> float:
    return float(np.mean(np.abs(np.asarray(y_true) - np.asarray(y_pred))))


def mape(y_true, y_pred, floor: float = 1e-8) -> tuple[float, int]:
    """Mean absolute percentage error, excluding |y_true| < floor rows
    (near-zero targets would explode the metric); returns (pct, n_excluded)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    keep = np.abs(y_true) >= floor
    if not keep.any():
        return float("nan"), int((~keep).sum())
    pct = 100.0 * float(np.mean(np.abs((y_pred[keep] - y_true[keep]) / y_true[keep])))
    return pct, int((~keep).sum())


def load_dataset_csv(path: str) -> elm.Dataset:
    """Generic numeric CSV: header row, features in all but the last column."""
    if not path:
        raise ConfigError("config key 'data' (dataset CSV path) is required")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return elm.Dataset(data[:, :-1], data[:, -1], header[:-1])


def regression_rows(model_name, L, scale, seed, datasets, predictor, run, timing_key):
    """train/test metric rows for the bench and train CSVs."""
    rows = []
    for phase, ds in datasets.items():
        t0 = time.perf_counter()
        pred = predictor(ds.inputs)
        run.timing(f"{timing_key} {phase}_predict_s", time.perf_counter() - t0)
        m, excl = mape(ds.targets, pred)
        rows.append((
            model_name, L, scale, seed, phase,
            elm.rmse(ds.targets, pred), mae(ds.targets, pred), m, excl,
        ))
    return rows


METRIC_HEADER = ["model", "L", "scale", "seed", "phase", "rmse", "mae", "mape_pct", "mape_excluded"]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_heston(cfg, run: RunWriter):
    t0 = time.perf_counter()
    ds, meta = pricing.generate_heston_dataset(
        cfg["n"], cfg["seed"], r=cfg["r"], N_cos=cfg["n_cos"], trunc=cfg["trunc"],
        require_feller=cfg["require_feller"],
    )
    run.timing("generate_s", time.perf_counter() - t0)
    pricing.write_heston_csv(ds, meta, run.path("heston.csv"))
    run.write_summary({
        "rows": len(ds),
        "failures": meta["failures"],
        "iv_mean": float(ds.targets.mean()),
        "iv_std": float(ds.targets.std()),
        "seed": cfg["seed"],
    })
    print(f"wrote {len(ds)} rows to {run.path('heston.csv')} "
          f"(iv mean {ds.targets.mean():.3f}, std {ds.targets.std():.3f})")


def cmd_train_elm(cfg, run: RunWriter):
    data = load_dataset_csv(cfg["data"])
    train, test = elm.train_test_split(data, cfg["test_fraction"], cfg["split_seed"])
    t0 = time.perf_counter()
    model = elm.fit_elm(
        train.inputs, train.targets, cfg["L"], cfg["scale"], cfg["activation"],
        cfg["C"], cfg["seed"],
    )
    train_s = time.perf_counter() - t0
    run.timing("train_s", train_s)
    batch = cfg["batch_size"] or None
    rows = regression_rows(
        "elm", cfg["L"], cfg["scale"], cfg["seed"],
        {"train": train, "test": test},
        lambda X: elm.predict(model, X, batch_size=batch), run, "elm",
    )
    run.write_csv("metrics.csv", METRIC_HEADER, rows)
    elm.save_model(model, run.path("model.npz"))
    test_rmse = rows[1][5]
    run.write_summary({"train_rows": len(train), "test_rows": len(test),
                       "test_rmse": test_rmse, "seed": cfg["seed"]})
    print(f"elm L={cfg['L']}: train {train_s:.2f}s, test rmse {test_rmse:.5f}")


def cmd_train_eir(cfg, run: RunWriter):
    data = load_dataset_csv(cfg["data"])
    train, test = elm.train_test_split(data, cfg["test_fraction"], cfg["split_seed"])
    eir_cfg = eir.EirConfig(
        N0=cfg["N0"], Nmax=cfg["Nmax"], epsilon=cfg["epsilon"], k=cfg["k"],
        C=cfg["C"], seed=cfg["seed"], scale=cfg["scale"],
        activation=cfg["activation"], mode=cfg["mode"],
    )
    t0 = time.perf_counter()
    model, trace = eir.eir_train(train, eir_cfg, eval_data=test)
    run.timing("train_s", time.perf_counter() - t0)
    for row in trace:
        run.timing("steps_ms_total", row.wall_ms / 1e3)
    eir.write_trace_csv(trace, run.path("trace.csv"), include_wall_ms=False)
    elm.save_model(model, run.path("model.npz"))
    summary = {
        "final_nodes": int(model.layer.n_nodes),
        "final_train_rmse": trace[-1].epsilon_s,
        "final_test_rmse": trace[-1].test_rmse,
        "seed": cfg["seed"],
    }
    if cfg["target_rmse"] > 0:
        reached = [r.s for r in trace if r.test_rmse is not None and r.test_rmse <= cfg["target_rmse"]]
        summary["nodes_to_target"] = int(reached[0]) if reached else -1
    run.write_summary(summary)
    print(f"eir k={cfg['k']}: grew to {model.layer.n_nodes} nodes, "
          f"test rmse {trace[-1].test_rmse:.5f}")


def cmd_train_gpr(cfg, run: RunWriter):
    data = load_dataset_csv(cfg["data"])
    train, test = elm.train_test_split(data, cfg["test_fraction"], cfg["split_seed"])
    X, y = train.inputs, train.targets
    if cfg["max_train"] and len(X) > cfg["max_train"]:
        X, y = X[: cfg["max_train"]], y[: cfg["max_train"]]
    params = {"sigma_f": cfg["sigma_f"], "ell": cfg["ell"], "sigma_n": cfg["sigma_n"]}
    if cfg["grid_search"]:
        n_val = max(1, len(X) // 5)
        found = gpr.gpr_grid_search(
            X[n_val:], y[n_val:], X[:n_val], y[:n_val], sigma_n=cfg["sigma_n"]
        )
        params = {k: found[k] for k in ("sigma_f", "ell", "sigma_n")}
    t0 = time.perf_counter()
    model = gpr.gpr_fit(X, y, **params)
    train_s = time.perf_counter() - t0
    run.timing("train_s", train_s)
    rows = regression_rows(
        "gpr", "", "", "", {"train": elm.Dataset(X, y), "test": test},
        lambda Z: gpr.gpr_predict(model, Z)[0], run, "gpr",
    )
    run.write_csv("metrics.csv", METRIC_HEADER, rows)
    run.write_summary({"train_rows": len(X), "test_rows": len(test),
                       "test_rmse": rows[1][5], **params})
    print(f"gpr N={len(X)}: train {train_s:.2f}s, test rmse {rows[1][5]:.5f}")


def _pde_truth_line(cfg, problem, preset_name, run):
    """Evaluation S-line and the matching ground-truth price function."""
    lo, hi = float(np.exp(problem.lo[0])), float(np.exp(problem.hi[0]))
    margin = 0.02 * (hi - lo)
    S = np.linspace(lo + margin, hi - margin, cfg["n_line"])
    if preset_name == "bs_put":
        K = cfg["K"] if cfg["K"] is not None else 15.0
        r = cfg["r"] if cfg["r"] is not None else 0.04
        sigma = cfg["sigma"] if cfg["sigma"] is not None else 0.25

        def truth(tau):
            return pricing.bs_price_arrays(S, K, r, sigma, tau, "put")

        return S, truth
    if preset_name == "double_barrier_call":
        E = cfg["E"] if cfg["E"] is not None else 10.0
        F = cfg["F"] if cfg["F"] is not None else 30.0
        K = cfg["K"] if cfg["K"] is not None else 20.0
        r = cfg["r"] if cfg["r"] is not None else 0.04
        sigma = cfg["sigma"] if cfg["sigma"] is not None else 0.15

        def truth(tau):
            spec = pricing.BarrierSpec(E, F, K, r, sigma, max(tau, 1e-9))
            return np.array([pricing.double_barrier_call(spec, s) for s in S])

        return S, truth
    # rainbow: Monte-Carlo oracle along the equal-spot diagonal
    K = cfg["K"] if cfg["K"] is not None else 20.0
    r = cfg["r"] if cfg["r"] is not None else 0.04
    s1 = cfg["sigma1"] if cfg["sigma1"] is not None else 0.25
    s2 = cfg["sigma2"] if cfg["sigma2"] is not None else 0.25
    rho = cfg["rho"] if cfg["rho"] is not None else 0.0

    def truth(tau):
        out = np.empty(len(S))
        for i, s in enumerate(S):
            out[i], _ = pricing.mc_rainbow_put_max(
                s, s, K, r, s1, s2, rho, max(tau, 1e-9), cfg["mc_paths"],
                seed=cfg["mc_seed"] + i,
            )
        return out

    return S, truth


def cmd_solve_pde(cfg, run: RunWriter, explicit: set):
    preset_name = cfg["preset"]
    if preset_name not in PRESET_PROBLEM_KEYS:
        raise ConfigError(f"unknown preset {preset_name!r}")
    problem_keys = PRESET_PROBLEM_KEYS[preset_name]
    misapplied = (explicit & set(SCHEMAS["solve-pde"])) - problem_keys - PINN_CONFIG_KEYS - {
        "preset", "n_line", "n_t_slices", "mc_paths", "mc_seed"
    }
    if misapplied:
        raise ConfigError(f"keys {sorted(misapplied)} do not apply to preset {preset_name}")
    problem_overrides = {
        k if k != "horizon" else "horizon": cfg[k]
        for k in problem_keys
        if cfg[k] is not None
    }
    config_overrides = {k: cfg[k] for k in PINN_CONFIG_KEYS if cfg[k] is not None}
    problem, pin_cfg = pinn.preset(preset_name, problem_overrides, **config_overrides)

    t0 = time.perf_counter()
    sol = pinn.solve_pde(problem, pin_cfg)
    run.timing("solve_s", time.perf_counter() - t0)

    S, truth_fn = _pde_truth_line(cfg, problem, preset_name, run)
    T = problem.horizon
    if problem.m == 1:
        X_line = np.log(S)[:, None]
    else:
        X_line = np.log(np.column_stack([S, S]))
    t_slices = np.linspace(0.0, 0.95 * T, cfg["n_t_slices"])
    grid_rows, err_rows, re_values = [], [], []
    t0 = time.perf_counter()
    for t in t_slices:
        pred = sol.evaluate(X_line, t)
        truth = truth_fn(T - t)
        re = pinn.relative_error(pred, truth)
        re_values.append(re)
        err_rows.append((float(t), re))
        for s, p, tv in zip(S, pred, truth):
            grid_rows.append(tuple([float(s)] * problem.m + [float(t), float(p), float(tv)]))
    run.timing("evaluate_s", time.perf_counter() - t0)
    x_cols = [f"S{i+1}" for i in range(problem.m)] if problem.m > 1 else ["S"]
    run.write_csv("grid.csv", x_cols + ["t", "value", "truth"], grid_rows)
    run.write_csv("errors.csv", ["t", "relative_error"], err_rows)
    summary = {
        "preset": preset_name,
        "relative_error_t0": re_values[0],
        "mean_relative_error": float(np.mean(re_values)),
        "residual_rms": dict(zip(("interior", "boundary", "terminal"), sol.residual_norms)),
        "L": pin_cfg.L,
    }
    run.write_summary(summary)
    print(f"{preset_name}: relative_error={re_values[0]:.6f} "
          f"mean_relative_error={np.mean(re_values):.6f}")


def cmd_ivs_fit(cfg, run: RunWriter):
    if cfg["quotes"]:
        raw = ivs.read_quotes_csv(cfg["quotes"])
    else:
        raw = ivs.synthetic_chain(cfg["n"], cfg["chain_seed"], cfg["S"], cfg["r"], cfg["noise"])
    kept, rejected = ivs.clean_quotes(raw)
    t0 = time.perf_counter()
    fit = ivs.fit_surface(
        kept, L=cfg["L"], scale=cfg["scale"], activation=cfg["activation"],
        C=cfg["C"], test_fraction=cfg["test_fraction"], seed=cfg["fit_seed"],
    )
    run.timing("fit_s", time.perf_counter() - t0)
    ivs.write_quotes_csv(kept, run.path("kept_quotes.csv"))
    reasons = {}
    for _, reason in rejected:
        reasons[reason] = reasons.get(reason, 0) + 1
    run.write_csv("rejections.csv", ["reason", "count"],
                  sorted(reasons.items()))
    elm.save_model(fit.model, run.path("model.npz"))
    run.write_summary({
        "kept": len(kept), "rejected": len(rejected),
        "test_rmse": fit.rmse, "test_mae": fit.mae,
        "n_train": fit.n_train, "n_test": fit.n_test, "seed": fit.seed,
    })
    print(f"ivs-fit: kept {len(kept)}, test rmse {fit.rmse:.5f}, mae {fit.mae:.5f}")


class _LoadedSurface:
    def __init__(self, model):
        self.model = model

    def iv(self, T, k):
        T = np.asarray(T, dtype=float)
        k = np.asarray(k, dtype=float)
        T, k = np.broadcast_arrays(T, k)
        return elm.predict(self.model, np.column_stack([T.ravel(), k.ravel()])).reshape(T.shape)


def cmd_ivs_audit(cfg, run: RunWriter):
    if not cfg["fit_run"]:
        raise ConfigError("config key 'fit_run' (ivs-fit output directory) is required")
    import os

    model_path = os.path.join(cfg["fit_run"], "model.npz")
    surface = _LoadedSurface(elm.load_model(model_path))
    t0 = time.perf_counter()
    report = ivs.arbitrage_report(
        surface,
        K_range=(cfg["K_min"], cfg["K_max"]), T_range=(cfg["T_min"], cfg["T_max"]),
        n_K=cfg["n_K"], n_T=cfg["n_T"], S=cfg["S"],
    )
    run.timing("audit_s", time.perf_counter() - t0)
    ivs.write_report_json(report, run.path("report.json"))
    ivs.write_difference_csvs(report, run.dir)
    run.write_summary({
        "violation_rate_T": report.violation_rate_T,
        "violation_rate_K": report.violation_rate_K,
        "violation_rate_convexity": report.violation_rate_convexity,
    })
    print(f"ivs-audit: violations T={report.violation_rate_T:.1f}% "
          f"K={report.violation_rate_K:.1f}% convexity={report.violation_rate_convexity:.1f}%")


def cmd_classify_run(cfg, run: RunWriter):
    sim = market_sim.MarketConfig(
        seed=cfg["sim_seed"], n_days=cfg["n_days"],
        session_minutes=cfg["session_minutes"],
        trades_per_minute=cfg["trades_per_minute"],
        snapshot_every_s=cfg["snapshot_every_s"],
    )
    t0 = time.perf_counter()
    trades, snaps = market_sim.generate_market(sim)
    stream = intraday.Stream.from_records(trades, snaps)
    run.timing("simulate_s", time.perf_counter() - t0)
    mask = [f.strip() for f in cfg["features"].split(",") if f.strip()]
    t0 = time.perf_counter()
    X, y, times, days, dropped = intraday.feature_table(
        stream, sim, interval=cfg["interval_s"], delta=cfg["delta_s"], mask=mask
    )
    run.timing("features_s", time.perf_counter() - t0)
    n_train_days = cfg["n_train_days"] or (6 * cfg["n_days"]) // 8
    t0 = time.perf_counter()
    records = intraday.rolling_run(
        X, y, times, days, n_train_days, lr_iters=cfg["lr_iters"], seed=cfg["model_seed"]
    )
    run.timing("rolling_s", time.perf_counter() - t0)
    rows = [(r["day"], r["model"], r["accuracy"], r["f1"]) for r in records]
    run.write_csv("daily_metrics.csv", ["day", "model", "accuracy", "f1"], rows)
    per_model: dict[str, list] = {}
    for r in records:
        per_model.setdefault(r["model"], []).append(r)
        run.timing(f"train_ms {r['model']}", r["train_ms"] / 1e3)
    summary = {"rows": len(X), "dropped_labels": dropped, "n_train_days": n_train_days}
    for name, recs in sorted(per_model.items()):
        summary[name] = {
            "mean_accuracy": float(np.mean([r["accuracy"] for r in recs])),
            "mean_f1": float(np.mean([r["f1"] for r in recs])),
            "total_train_ms": float(sum(r["train_ms"] for r in recs)),
        }
    run.write_summary(summary)
    for name, agg in sorted(per_model.items()):
        tot = sum(r["train_ms"] for r in agg)
        print(f"{name}: mean accuracy {np.mean([r['accuracy'] for r in agg]):.2f}%, "
              f"total retrain {tot:.0f} ms")


def cmd_bench(cfg, run: RunWriter):
    data = load_dataset_csv(cfg["data"])
    train, test = elm.train_test_split(data, cfg["test_fraction"], cfg["split_seed"])
    datasets = {"train": train, "test": test}
    batch = cfg["batch_size"] or None
    rows = []
    sweeps = [(L, cfg["scale"]) for L in cfg["L_values"]]
    sweeps += [(cfg["scale_sweep_L"], s) for s in cfg["scale_values"]]
    for L, scale in sweeps:
        for seed in cfg["seeds"]:
            t0 = time.perf_counter()
            model = elm.fit_elm(
                train.inputs, train.targets, L, scale, cfg["activation"], cfg["C"], seed
            )
            train_s = time.perf_counter() - t0
            key = f"elm L={L} scale={scale} seed={seed}"
            run.timing(f"{key} train_s", train_s)
            rows += regression_rows(
                "elm", L, scale, seed, datasets,
                lambda X: elm.predict(model, X, batch_size=batch), run, key,
            )
    if cfg["include_gpr"]:
        X, y = train.inputs, train.targets
        if cfg["gpr_max_train"] and len(X) > cfg["gpr_max_train"]:
            X, y = X[: cfg["gpr_max_train"]], y[: cfg["gpr_max_train"]]
        t0 = time.perf_counter()
        model = gpr.gpr_fit(X, y, cfg["gpr_sigma_f"], cfg["gpr_ell"], cfg["gpr_sigma_n"])
        run.timing("gpr train_s", time.perf_counter() - t0)
        rows += regression_rows(
            "gpr", "", "", "", {"train": elm.Dataset(X, y), "test": test},
            lambda Z: gpr.gpr_predict(model, Z, batch_size=2000)[0], run, "gpr",
        )
    run.write_csv("bench.csv", METRIC_HEADER, rows)
    best = {}
    for row in rows:
        if row[0] == "elm" and row[4] == "test":
            best.setdefault((row[1], row[2]), []).append(row[5])
    summary = {
        "train_rows": len(train), "test_rows": len(test),
        "elm_best_test_rmse": {f"L={k[0]} scale={k[1]}": min(v) for k, v in best.items()},
    }
    run.write_summary(summary)
    print(f"bench: {len(rows)} metric rows over {len(sweeps)} configurations "
          f"(timings in {run.path('timings.json')})")
    for (L, scale), v in sorted(best.items()):
        print(f"  elm L={L} scale={scale}: best test rmse {min(v):.5f}")


COMMANDS = {
    "gen-heston": cmd_gen_heston,
    "train-elm": cmd_train_elm,
    "train-eir": cmd_train_eir,
    "train-gpr": cmd_train_gpr,
    "solve-pde": cmd_solve_pde,
    "ivs-fit": cmd_ivs_fit,
    "ivs-audit": cmd_ivs_audit,
    "classify-run": cmd_classify_run,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="elmfin",
        description="ELM experiments: pricing-function learning, incremental "
        "growth, PDE solving, IVS fitting and auditing, return classification.",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", required=True, help="run output directory")
    args, overrides = parser.parse_known_args(argv)

    try:
        bad = [o for o in overrides if o.startswith("-")]
        if bad:
            raise ConfigError(f"unrecognized arguments: {bad}")
        file_cfg = parse_config_file(args.config) if args.config else {}
        cfg, explicit = resolve_config(args.subcommand, file_cfg, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run = RunWriter(args.out)
    run.echo_config(args.subcommand, cfg)
    run.log(f"start {args.subcommand}")
    try:
        if args.subcommand == "solve-pde":
            COMMANDS[args.subcommand](cfg, run, explicit)
        else:
            COMMANDS[args.subcommand](cfg, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        run.log(f"config error: {exc}")
        return EXIT_CONFIG
    except (elm.SingularSystemError, pricing.NoImpliedVolError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        run.log(f"numerical failure: {exc}")
        run.close()
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.log("done")
    run.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
