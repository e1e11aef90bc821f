"""Figure rendering for experiment outputs.

Reads the delimited outputs (or the in-memory metric table) and renders
matplotlib figures next to them. Kept deliberately plain: line/step plots,
PNG only, fixed metadata so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": "crbeam"}

plt.rcParams.update({
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.4,
    "font.size": 10,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return os.path.basename(path)


def plot_interference_cdf(cdfs: dict, limit_w: float, path: str) -> str:
    """Step plot of empirical interference CDFs with the limit marked."""
    fig, ax = plt.subplots()
    for name, pairs in cdfs.items():
        if not pairs:
            continue
        xs = [v for v, _ in pairs]
        ys = [p for _, p in pairs]
        ax.step(xs, ys, where="post", label=name)
    ax.axvline(limit_w, color="red", linestyle="-", linewidth=1.2,
               label="limit")
    ax.set_xlabel("interference power at PU (W)")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_mse_trace(trace_csv: str, path: str, max_runs: int = 8) -> str:
    """Sum-MSE vs cycle for the first few runs of an experiment."""
    per_run = defaultdict(list)
    with open(trace_csv) as fh:
        for row in csv.DictReader(fh):
            per_run[int(row["run"])].append(
                (int(row["cycle"]), float(row["sum_mse"])))
    fig, ax = plt.subplots()
    for run in sorted(per_run)[:max_runs]:
        pts = sorted(per_run[run])
        ax.plot([c for c, _ in pts], [m for _, m in pts],
                marker=".", markersize=3, linewidth=1.0,
                label=f"run {run}")
    ax.set_xlabel("cycle")
    ax.set_ylabel("sum MSE")
    ax.legend(loc="upper right", fontsize=7)
    return _save(fig, path)


def plot_budgets(budgets_csv: str, path: str, run: int = 0) -> str | None:
    """Budget and multiplier trajectories of one run's master loop."""
    iota = defaultdict(list)
    with open(budgets_csv) as fh:
        for row in csv.DictReader(fh):
            if int(row["run"]) != run:
                continue
            iota[int(row["link"])].append(
                (int(row["master_iter"]), float(row["iota_w"])))
    if not iota:
        return None
    fig, ax = plt.subplots()
    for link in sorted(iota):
        pts = sorted(iota[link])
        ax.plot([m for m, _ in pts], [v for _, v in pts],
                linewidth=1.2, label=f"link {link}")
    ax.set_xlabel("master iteration")
    ax.set_ylabel("interference budget (W)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_sweep(points, parameter: str, path: str) -> str:
    """Mean sum-MSE with standard-error bars over a parameter grid."""
    fig, ax = plt.subplots()
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    es = [p[2] for p in points]
    ax.errorbar(xs, ys, yerr=es, marker="o", markersize=4, capsize=3,
                linewidth=1.2)
    if parameter == "iota_max" and min(xs) > 0:
        ax.set_xscale("log")
    ax.set_xlabel(parameter)
    ax.set_ylabel("mean sum MSE")
    return _save(fig, path)


def render_experiment_figures(cfg, table, out: str) -> list:
    """Render the standard report figures for one experiment directory."""
    produced = []
    cdfs = {k: v for k, v in table.cdfs.items()
            if k in ("total_realized_w", "total_worst_case_w")}
    if cdfs:
        produced.append(plot_interference_cdf(
            cdfs, cfg.iota_max_w, os.path.join(out, "interference_cdf.png")))
    trace_csv = os.path.join(out, "mse_trace.csv")
    if os.path.exists(trace_csv):
        produced.append(plot_mse_trace(
            trace_csv, os.path.join(out, "mse_trace.png")))
    budgets_csv = os.path.join(out, "budgets.csv")
    if cfg.algo == "primal_decomp" and os.path.exists(budgets_csv):
        name = plot_budgets(budgets_csv, os.path.join(out, "budgets.png"))
        if name:
            produced.append(name)
    return produced
