"""Regenerate paper-style figures from elmfin run directories.

Each figure is a pure reader: it consumes the CSV/JSON artifacts a run wrote
and never recomputes numerics. Output images are deterministic for identical
inputs (fixed style, pinned PNG metadata, no timestamps).

Usage: elmfin-plots RUN_DIR [--figure ID ...] [--list]
Images land in RUN_DIR/figures/.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PNG_METADATA = {"Software": "elmfin-plots"}
STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


class FigureError(RuntimeError):
    """Missing/empty inputs or schema mismatch; the caller exits non-zero."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: dict = field(default_factory=dict)   # name -> path
    output: str = ""


def read_csv_columns(path: str, required: list[str]) -> dict[str, list]:
    """Load a CSV into per-column lists; loud errors on absence/emptiness."""
    if not os.path.exists(path):
        raise FigureError(f"missing input CSV: {path}")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FigureError(f"empty CSV (no header): {path}")
        missing = set(required) - set(reader.fieldnames)
        if missing:
            raise FigureError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise FigureError(f"empty CSV (no data rows): {path}")
    out: dict[str, list] = {name: [] for name in reader.fieldnames}
    for row in rows:
        for name in reader.fieldnames:
            out[name].append(row[name])
    return out


def _floats(values: list) -> list[float]:
    return [float(v) for v in values]


def _save(fig, path: str) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Figure renderers
# ---------------------------------------------------------------------------

def fig1_scale(spec: FigureSpec) -> None:
    """Test RMSE vs hidden-node count and vs sampling scale (bench sweep)."""
    cols = read_csv_columns(spec.inputs["bench"], ["model", "L", "scale", "seed", "phase", "rmse"])
    rows = [
        {k: cols[k][i] for k in cols}
        for i in range(len(cols["model"]))
        if cols["model"][i] == "elm" and cols["phase"][i] == "test"
    ]
    if not rows:
        raise FigureError("bench.csv has no elm test rows")
    by_L: dict[float, list[float]] = {}
    by_scale: dict[float, list[float]] = {}
    scales = {float(r["scale"]) for r in rows}
    Ls = {int(r["L"]) for r in rows}
    for r in rows:
        by_L.setdefault(int(r["L"]), []).append(float(r["rmse"]))
        by_scale.setdefault(float(r["scale"]), []).append(float(r["rmse"]))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    xs = sorted(by_scale)
    axes[0].plot(xs, [min(by_scale[s]) for s in xs], "o-")
    axes[0].set_xscale("log")
    axes[0].set_xlabel("sampling scale")
    axes[0].set_ylabel("test RMSE")
    axes[0].set_title("RMSE vs scale")
    xl = sorted(by_L)
    axes[1].plot(xl, [min(by_L[L]) for L in xl], "o-")
    axes[1].set_xlabel("hidden nodes L")
    axes[1].set_ylabel("test RMSE")
    axes[1].set_title("RMSE vs node count")
    fig.tight_layout()
    _save(fig, spec.output)


def fig2_time(spec: FigureSpec) -> None:
    """Training/prediction wall time per configuration (bench timings)."""
    path = spec.inputs["timings"]
    if not os.path.exists(path):
        raise FigureError(f"missing input JSON: {path}")
    with open(path) as fh:
        timings = json.load(fh)
    train_keys = sorted(k for k in timings if k.endswith("train_s"))
    if not train_keys:
        raise FigureError("timings.json has no *train_s entries")
    labels = [k[: -len(" train_s")] for k in train_keys]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(labels)), 3.4))
    ax.bar(range(len(labels)), [timings[k] for k in train_keys])
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("training wall time (s)")
    ax.set_title("training time by configuration")
    fig.tight_layout()
    _save(fig, spec.output)


def fig4_accuracy(spec: FigureSpec) -> None:
    """Per-day out-of-sample accuracy and F1 for each classifier."""
    cols = read_csv_columns(spec.inputs["daily"], ["day", "model", "accuracy", "f1"])
    models = sorted(set(cols["model"]))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    for model in models:
        days = [int(d) for d, m in zip(cols["day"], cols["model"]) if m == model]
        acc = [float(a) for a, m in zip(cols["accuracy"], cols["model"]) if m == model]
        f1 = [float(a) for a, m in zip(cols["f1"], cols["model"]) if m == model]
        axes[0].plot(days, acc, "o-", label=model)
        axes[1].plot(days, f1, "o-", label=model)
    axes[0].set_xlabel("day")
    axes[0].set_ylabel("accuracy (%)")
    axes[1].set_xlabel("day")
    axes[1].set_ylabel("F1 (%)")
    axes[0].legend()
    fig.suptitle("daily recalibration performance")
    fig.tight_layout()
    _save(fig, spec.output)


def fig5_violations(spec: FigureSpec) -> None:
    """Bar chart of the three static-arbitrage violation rates."""
    path = spec.inputs["report"]
    if not os.path.exists(path):
        raise FigureError(f"missing input JSON: {path}")
    with open(path) as fh:
        report = json.load(fh)
    keys = ["violation_rate_T", "violation_rate_K", "violation_rate_convexity"]
    missing = [k for k in keys if k not in report]
    if missing:
        raise FigureError(f"report.json missing {missing}")
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.bar(range(3), [report[k] for k in keys])
    ax.set_xticks(range(3))
    ax.set_xticklabels(["monotone T", "monotone K", "convexity"])
    ax.set_ylabel("violation rate (%)")
    ax.set_title("static-arbitrage audit")
    fig.tight_layout()
    _save(fig, spec.output)


def fig6_conds(spec: FigureSpec) -> None:
    """Three-panel plot of the audit's discrete difference vectors."""
    names = [("dC_dT", "dC(T)"), ("dC_dK", "dC(K)"), ("d2C_dK2", "d2C(K)")]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, (key, label) in zip(axes, names):
        cols = read_csv_columns(spec.inputs[key], ["T", "K", "diff"])
        slices: dict[float, list[tuple[float, float]]] = {}
        axis_col, slice_col = ("K", "T") if key == "dC_dT" else ("K", "T")
        for t, k, d in zip(_floats(cols["T"]), _floats(cols["K"]), _floats(cols["diff"])):
            if key == "dC_dT":
                slices.setdefault(k, []).append((t, d))   # one curve per moneyness
            else:
                slices.setdefault(t, []).append((k, d))   # one curve per maturity
        worst_key = min(slices, key=lambda s: min(d for _, d in slices[s]))
        for skey, pts in slices.items():
            pts = sorted(pts)
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    color="0.75", lw=0.5, zorder=1)
        pts = sorted(slices[worst_key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], color="C3", lw=1.2,
                zorder=2, label=f"worst slice {worst_key:.3g}")
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_title(label)
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, spec.output)


def fig7_pde(spec: FigureSpec) -> None:
    """Learned PDE solution against the oracle plus error over time."""
    grid = read_csv_columns(spec.inputs["grid"], ["t", "value", "truth"])
    errors = read_csv_columns(spec.inputs["errors"], ["t", "relative_error"])
    s_col = "S" if "S" in grid else "S1"
    if s_col not in grid:
        raise FigureError("grid.csv lacks an S/S1 coordinate column")
    t_vals = _floats(grid["t"])
    t0 = min(t_vals)
    S = [float(s) for s, t in zip(grid[s_col], t_vals) if t == t0]
    v = [float(x) for x, t in zip(grid["value"], t_vals) if t == t0]
    tr = [float(x) for x, t in zip(grid["truth"], t_vals) if t == t0]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].plot(S, tr, label="analytic/oracle")
    axes[0].plot(S, v, "--", label="network")
    axes[0].set_xlabel(s_col)
    axes[0].set_ylabel("price")
    axes[0].set_title(f"solution at t={t0:g}")
    axes[0].legend()
    axes[1].plot(_floats(errors["t"]), _floats(errors["relative_error"]), "o-")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("relative error")
    axes[1].set_yscale("log")
    axes[1].set_title("error by time slice")
    fig.tight_layout()
    _save(fig, spec.output)


def fig10_eir(spec: FigureSpec) -> None:
    """Growth trace: accuracy against the number of hidden nodes."""
    cols = read_csv_columns(spec.inputs["trace"], ["s", "epsilon_s"])
    s = [int(v) for v in cols["s"]]
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(s, _floats(cols["epsilon_s"]), label="training RMSE")
    if "test_rmse" in cols and any(v for v in cols["test_rmse"]):
        test = [(si, float(v)) for si, v in zip(s, cols["test_rmse"]) if v]
        ax.plot([p[0] for p in test], [p[1] for p in test], label="test RMSE")
    ax.set_xlabel("hidden nodes")
    ax.set_ylabel("RMSE")
    ax.set_yscale("log")
    ax.set_title("incremental growth")
    ax.legend()
    fig.tight_layout()
    _save(fig, spec.output)


RENDERERS = {
    "fig1_scale": (fig1_scale, {"bench": "bench.csv"}),
    # bench.csv is listed so auto-detection scopes this figure to bench runs
    "fig2_time": (fig2_time, {"timings": "timings.json", "bench": "bench.csv"}),
    "fig4_accuracy": (fig4_accuracy, {"daily": "daily_metrics.csv"}),
    "fig5_violations": (fig5_violations, {"report": "report.json"}),
    "fig6_conds": (fig6_conds, {"dC_dT": "dC_dT.csv", "dC_dK": "dC_dK.csv",
                                "d2C_dK2": "d2C_dK2.csv"}),
    "fig7_pde": (fig7_pde, {"grid": "grid.csv", "errors": "errors.csv"}),
    "fig10_eir": (fig10_eir, {"trace": "trace.csv"}),
}


def build_specs(run_dir: str, figure_ids: list[str] | None = None) -> list[FigureSpec]:
    """Figure specs for a run directory: explicit ids, or every figure whose
    inputs are all present."""
    specs = []
    ids = figure_ids or sorted(RENDERERS)
    for fid in ids:
        if fid not in RENDERERS:
            raise FigureError(f"unknown figure id {fid!r}; have {sorted(RENDERERS)}")
        _, inputs = RENDERERS[fid]
        paths = {name: os.path.join(run_dir, fname) for name, fname in inputs.items()}
        present = all(os.path.exists(p) for p in paths.values())
        if figure_ids is None and not present:
            continue
        specs.append(FigureSpec(fid, paths, os.path.join(run_dir, "figures", fid + ".png")))
    return specs


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    with plt.rc_context(STYLE):
        RENDERERS[spec.figure_id][0](spec)
    if not (os.path.exists(spec.output) and os.path.getsize(spec.output) > 0):
        raise FigureError(f"renderer produced no image at {spec.output}")
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="elmfin-plots",
        description="Render figures from an elmfin run directory into run_dir/figures/.",
    )
    parser.add_argument("run_dir")
    parser.add_argument("--figure", action="append",
                        help="figure id (repeatable); default: all applicable")
    parser.add_argument("--list", action="store_true", help="list applicable figures")
    args = parser.parse_args(argv)
    if not os.path.isdir(args.run_dir):
        print(f"not a run directory: {args.run_dir}", file=sys.stderr)
        return 1
    try:
        specs = build_specs(args.run_dir, args.figure)
        if args.list:
            for spec in specs:
                print(spec.figure_id)
            return 0
        if not specs:
            raise FigureError(f"no applicable figures in {args.run_dir}")
        for spec in specs:
            print(f"{spec.figure_id} -> {render(spec)}")
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
