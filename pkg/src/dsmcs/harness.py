"""Experiment orchestration: single runs, grids, and their CSV/JSON emission.

A *run* is one training protocol under a fixed RunConfig; it produces
``run.csv`` (one row per epoch), ``config.json`` (the resolved config) and
``final.json`` (last-10-epoch summary).  A *grid* enumerates cells of
(kernel, scheme, K, N, delta_hat); each cell searches the learning-rate list
on the first seed, re-runs the remaining seeds at the best rate, and
contributes one ``summary.csv`` row.

All files are written atomically (temp file + rename).  The worker count for
grid cells is capped by the ``DSMCS_THREADS`` environment variable.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .training import TrainingDiverged, train

__all__ = [
    "run",
    "grid",
    "load_grid_config",
    "worker_count",
    "FINAL_WINDOW",
    "SUMMARY_COLUMNS",
]

# final ELBO is summarized over this many trailing epochs
FINAL_WINDOW = 10

SUMMARY_COLUMNS = ["kernel", "resampling", "num_steps", "num_particles",
                   "delta_hat", "lr", "seeds", "elbo_mean", "elbo_std",
                   "status"]


def worker_count():
    """Worker cap from DSMCS_THREADS (default 1)."""
    raw = os.environ.get("DSMCS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DSMCS_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValueError("DSMCS_THREADS must be >= 1")
    return n


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_header(num_steps, pad_to=None):
    k = pad_to or num_steps
    return (["epoch", "elbo_mean", "elbo_std"]
            + [f"ess_{i}" for i in range(1, k + 1)]
            + [f"resample_rate_{i}" for i in range(1, k + 1)]
            + ["seconds"])


def _csv_row(record, num_steps, pad_to=None):
    k = pad_to or num_steps
    pad = [""] * (k - num_steps)
    return ([record.epoch, f"{record.elbo_mean:.6f}", f"{record.elbo_std:.6f}"]
            + [f"{v:.3f}" for v in record.ess] + pad
            + [f"{v:.4f}" for v in record.resample_rate] + pad
            + [f"{record.seconds:.3f}"])


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _final_summary(records, status):
    if status != "ok" or not records:
        return {"status": "N/A", "elbo_mean": None, "elbo_std": None,
                "final_ess": None, "epochs_completed": len(records)}
    tail = records[-FINAL_WINDOW:]
    means = np.array([r.elbo_mean for r in tail])
    return {
        "status": "ok",
        "elbo_mean": float(means.mean()),
        "elbo_std": float(means.std()),
        "final_ess": [float(v) for v in records[-1].ess],
        "epochs_completed": len(records),
    }


def run(cfg: RunConfig, outdir, pad_steps=None):
    """Train one configuration and write run.csv / config.json / final.json.

    Returns the final.json payload.  A run that diverges (persistent
    non-finite losses) is recorded with status "N/A" rather than raised.
    """
    os.makedirs(outdir, exist_ok=True)
    cfg.to_json(os.path.join(outdir, "config.json"))

    header = _csv_header(cfg.num_steps, pad_steps)
    records = []
    rows = []
    progress = os.path.join(outdir, "run.csv.partial")

    def on_epoch(record):
        records.append(record)
        rows.append(_csv_row(record, cfg.num_steps, pad_steps))
        # streamed (non-atomic) copy so long runs can be monitored
        with open(progress, "a") as fh:
            csv.writer(fh, lineterminator="\n").writerow(rows[-1])

    if os.path.exists(progress):
        os.unlink(progress)
    status = "ok"
    try:
        train(cfg, on_epoch=on_epoch)
    except TrainingDiverged:
        status = "diverged"

    _write_csv(os.path.join(outdir, "run.csv"), header, rows)
    if os.path.exists(progress):
        os.unlink(progress)
    final = _final_summary(records, "ok" if status == "ok" else "N/A")
    _atomic_write(os.path.join(outdir, "final.json"),
                  json.dumps(final, indent=2) + "\n")
    return final


GRID_KEYS = ("kernels", "schemes", "num_steps", "num_particles",
             "delta_hats", "lrs", "seeds", "base")


def load_grid_config(path):
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid config fields: {sorted(unknown)}")
    grid_cfg = {
        "kernels": data.get("kernels", ["langevin"]),
        "schemes": data.get("schemes", ["none"]),
        "num_steps": data.get("num_steps", [8]),
        "num_particles": data.get("num_particles", [64]),
        "delta_hats": data.get("delta_hats", [1.0]),
        "lrs": data.get("lrs", [0.01]),
        "seeds": data.get("seeds", [0]),
        "base": data.get("base", {}),
    }
    for key in GRID_KEYS[:-1]:
        if not isinstance(grid_cfg[key], list) or not grid_cfg[key]:
            raise ValueError(f"grid field {key!r} must be a non-empty list")
    return grid_cfg


def _cell_config(grid_cfg, kernel, scheme, k, n, dhat, lr, seed):
    base = dict(grid_cfg["base"])
    base.update(kernel=kernel, resampling=scheme, num_steps=k,
                num_particles=n, delta_hat=dhat, lr=lr, seed=seed)
    return RunConfig.from_dict(base)


def _run_dir(root, cfg):
    name = (f"{cfg.kernel}-{cfg.resampling}-K{cfg.num_steps}-N{cfg.num_particles}"
            f"-d{cfg.delta_hat:g}-lr{cfg.lr:g}-s{cfg.seed}")
    return os.path.join(root, name)


def _run_cell_job(args):
    cfg, outdir, pad = args
    return run(cfg, outdir, pad_steps=pad)


def _execute(jobs, workers):
    """Run (cfg, outdir, pad) jobs, reusing finished runs on disk."""
    pending, results = [], {}
    for job in jobs:
        final_path = os.path.join(job[1], "final.json")
        if os.path.exists(final_path):
            with open(final_path) as fh:
                results[job[1]] = json.load(fh)
        else:
            pending.append(job)
    if pending:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for job, final in zip(pending, pool.map(_run_cell_job, pending)):
                    results[job[1]] = final
        else:
            for job in pending:
                results[job[1]] = _run_cell_job(job)
    return results


def grid(grid_cfg, outdir):
    """Run the Cartesian grid with per-cell LR search and write summary.csv.

    Per cell: every LR in ``lrs`` is trained on the first seed; the remaining
    seeds re-run the best LR (highest final ELBO).  Cells where every run
    diverged are recorded with status N/A; the grid always completes.
    """
    os.makedirs(outdir, exist_ok=True)
    workers = worker_count()
    cells = [(kern, scheme, k, n, dhat)
             for kern in grid_cfg["kernels"]
             for scheme in grid_cfg["schemes"]
             for k in grid_cfg["num_steps"]
             for n in grid_cfg["num_particles"]
             for dhat in grid_cfg["delta_hats"]]
    pad = max(grid_cfg["num_steps"])
    seeds = grid_cfg["seeds"]

    # phase 1: learning-rate search on the first seed
    search = []
    for cell in cells:
        for lr in grid_cfg["lrs"]:
            cfg = _cell_config(grid_cfg, *cell, lr, seeds[0])
            search.append((cfg, _run_dir(outdir, cfg), pad))
    results = _execute(search, workers)

    # phase 2: remaining seeds at each cell's best learning rate
    best_lr = {}
    for cell in cells:
        scored = []
        for lr in grid_cfg["lrs"]:
            cfg = _cell_config(grid_cfg, *cell, lr, seeds[0])
            final = results[_run_dir(outdir, cfg)]
            if final["status"] == "ok":
                scored.append((final["elbo_mean"], lr))
        best_lr[cell] = max(scored)[1] if scored else None

    extra = []
    for cell in cells:
        if best_lr[cell] is None:
            continue
        for seed in seeds[1:]:
            cfg = _cell_config(grid_cfg, *cell, best_lr[cell], seed)
            extra.append((cfg, _run_dir(outdir, cfg), pad))
    results.update(_execute(extra, workers))

    rows = []
    for cell in cells:
        kern, scheme, k, n, dhat = cell
        lr = best_lr[cell]
        if lr is None:
            rows.append([kern, scheme, k, n, dhat, "", len(seeds), "", "", "N/A"])
            continue
        finals = []
        for seed in seeds:
            cfg = _cell_config(grid_cfg, *cell, lr, seed)
            final = results[_run_dir(outdir, cfg)]
            if final["status"] == "ok":
                finals.append(final["elbo_mean"])
        if not finals:
            rows.append([kern, scheme, k, n, dhat, lr, len(seeds), "", "", "N/A"])
            continue
        arr = np.array(finals)
        rows.append([kern, scheme, k, n, dhat, lr, len(finals),
                     f"{arr.mean():.6f}", f"{arr.std():.6f}", "ok"])
    _write_csv(os.path.join(outdir, "summary.csv"), SUMMARY_COLUMNS, rows)
    return rows
