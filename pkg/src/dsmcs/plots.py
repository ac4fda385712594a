"""Figures from harness CSV output.

Two views, no recomputation beyond differences and quantiles:

  - ``plot_ess``:   ESS-vs-step curves for chosen runs at chosen epochs.
  - ``plot_elbo_diff``: boxplots of per-cell final-ELBO differences between
    two grid summaries.

Each writer emits both the requested file and a sibling with the other
extension (SVG for papers, PNG for quick inspection).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_ess", "plot_elbo_diff", "ess_main", "diff_main"]


def _save_both(fig, out):
    root, ext = os.path.splitext(out)
    ext = ext or ".svg"
    other = ".png" if ext.lower() == ".svg" else ".svg"
    fig.savefig(root + ext, bbox_inches="tight")
    fig.savefig(root + other, bbox_inches="tight")
    plt.close(fig)
    return [root + ext, root + other]


# ---------------------------------------------------------------------------
# ESS-vs-step curves

def _read_run_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no epochs recorded")
    ess_cols = sorted((c for c in rows[0] if c.startswith("ess_")),
                      key=lambda c: int(c.split("_")[1]))
    if not ess_cols:
        raise ValueError(f"{path}: no ess_<k> columns found")
    return rows, ess_cols


def _ess_at_epoch(rows, ess_cols, epoch, path):
    """ESS curve after ``epoch`` training epochs (row ``epoch - 1``)."""
    if not 1 <= epoch <= len(rows):
        raise ValueError(f"{path}: epoch {epoch} not in file "
                         f"(has {len(rows)} epochs)")
    row = rows[epoch - 1]
    steps, values = [], []
    for col in ess_cols:
        if row[col] == "":            # grid padding for smaller K
            continue
        steps.append(int(col.split("_")[1]))
        values.append(float(row[col]))
    return steps, values


def plot_ess(run_dirs, epochs, out):
    """One ESS-vs-step curve per run per epoch; later epochs more opaque."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, rundir in enumerate(run_dirs):
        path = os.path.join(rundir, "run.csv")
        rows, ess_cols = _read_run_csv(path)
        color = colors[i % len(colors)]
        for j, epoch in enumerate(epochs):
            steps, values = _ess_at_epoch(rows, ess_cols, epoch, path)
            alpha = (j + 1) / len(epochs)
            ax.plot(steps, values, color=color, alpha=alpha, marker=".",
                    label=f"{os.path.basename(os.path.normpath(rundir))} "
                          f"@ {epoch}")
    ax.set_xlabel("step $k$")
    ax.set_ylabel("ESS")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=7, loc="best")
    ax.set_title("Effective sample size per annealing step")
    return _save_both(fig, out)


# ---------------------------------------------------------------------------
# ELBO-difference boxplots

CELL_KEYS = ("kernel", "num_steps", "num_particles", "delta_hat")


def _read_summary(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cells = {}
    for row in rows:
        if row["status"] != "ok" or row["elbo_mean"] == "":
            continue
        key = tuple(row[k] for k in CELL_KEYS)
        cells[key] = float(row["elbo_mean"])
    return cells


def plot_elbo_diff(summary_a, summary_b, out):
    """Boxplots of ELBO(A) - ELBO(B) grouped by (K, N); sign-colored."""
    a = _read_summary(summary_a)
    b = _read_summary(summary_b)
    matched = sorted(set(a) & set(b))
    for key in sorted(set(a) ^ set(b)):
        print(f"warning: unmatched cell {key}, skipped", file=sys.stderr)
    if not matched:
        raise ValueError("no matching grid cells between the two summaries")

    groups = {}
    for key in matched:
        kn = (key[1], key[2])        # (K, N)
        groups.setdefault(kn, []).append(a[key] - b[key])

    labels = [f"K={k}\nN={n}" for k, n in sorted(groups)]
    data = [groups[kn] for kn in sorted(groups)]
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(data), 4))
    boxes = ax.boxplot(data, tick_labels=labels, patch_artist=True)
    for patch, vals in zip(boxes["boxes"], data):
        patch.set_facecolor("#aec7e8" if np.median(vals) >= 0 else "#ff9896")
    ax.axhline(0.0, color="gray", lw=0.8, ls="--")
    ax.set_ylabel("ELBO difference (nats)")
    ax.set_title(f"{os.path.basename(summary_a)} - {os.path.basename(summary_b)}")
    return _save_both(fig, out)


# ---------------------------------------------------------------------------
# entry points

def ess_main(argv=None):
    parser = argparse.ArgumentParser(
        description="ESS-vs-step curves from harness run directories.")
    parser.add_argument("--runs", nargs="+", required=True,
                        help="run directories containing run.csv")
    parser.add_argument("--epochs", default="100,500",
                        help="comma-separated epoch counts, e.g. 100,500")
    parser.add_argument("--out", default="fig_ess.svg")
    args = parser.parse_args(argv)
    epochs = [int(e) for e in args.epochs.split(",") if e]
    try:
        written = plot_ess(args.runs, epochs, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("\n".join(written))
    return 0


def diff_main(argv=None):
    parser = argparse.ArgumentParser(
        description="Per-cell ELBO-difference boxplots from two grid summaries.")
    parser.add_argument("--a", required=True, help="summary.csv for method A")
    parser.add_argument("--b", required=True, help="summary.csv for method B")
    parser.add_argument("--out", default="fig_diff.svg")
    args = parser.parse_args(argv)
    try:
        written = plot_elbo_diff(args.a, args.b, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("\n".join(written))
    return 0
