"""Sweeps over (augmentation kind x strength x mode x seed).

Output directory layout::

    runs.csv                    one row per training step of every run
    summary.csv                 one row per (kind, strength, mode) cell
    plots/<kind>.svg            final proxy-FID (top-15%) vs strength, one line per mode
    grids/<cell>_s<seed>_step<k>.ppm   8x8 sample grids
    checkpoints/<cell>_s<seed>.ckpt    final generator/discriminator state
"""

from __future__ import annotations

import logging
import math
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import data as data_mod
from ..errors import ConfigError
from ..gan import save_checkpoint
from ..trainer import RunRecord, TrainConfig, run
from . import emit
from .config import DataConfig, SweepConfig

log = logging.getLogger(__name__)

GRID_COLS = 8


@dataclass
class SweepResult:
    records: dict  # (kind, strength, mode, seed) -> RunRecord
    summary: list  # summary.csv rows
    out_dir: Path | None


def load_data(dc: DataConfig, base: TrainConfig):
    """Training set and held-out evaluation images (None: sample from training data)."""
    shape = tuple(base.model.image_shape)
    if dc.source == "toy":
        train = data_mod.gen_toy(dc.n, dims=shape, seed=dc.seed)
        eval_n = dc.eval_n if dc.eval_n is not None else base.eval_samples
        return train, data_mod.gen_toy(eval_n, dims=shape, seed=dc.eval_seed).images
    if dc.source == "cifar10":
        train = data_mod.load_cifar10(dc.path)
    else:
        train = data_mod.load_idx(dc.path, channels=dc.channels)
    if train.image_shape != shape:
        raise ConfigError(
            f"{dc.source} images are {train.image_shape} but the model expects {shape}",
            "train.model.image_shape",
        )
    return train, None


def cell_name(kind: str, strength: float, mode: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9]+", "-", kind).strip("-")
    return f"{safe}_{strength!r}_{mode}"


def _ensure_writable(out: Path) -> None:
    for sub in ("", "plots", "grids", "checkpoints"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    fd, probe = tempfile.mkstemp(dir=out, prefix=".probe")
    os.close(fd)
    os.unlink(probe)


# worker globals, set once per process
_DATA = None


def _init_worker(train, eval_images):
    global _DATA
    _DATA = (train, eval_images)


def _run_cell(job):
    key, cfg = job
    train, eval_images = _DATA
    rec = run(cfg, train, eval_images)
    return key, rec


def run_rows(key, rec: RunRecord) -> list[dict]:
    kind, strength, mode, seed = key
    rows = []
    for m in rec.losses:
        rows.append({
            "kind": kind, "strength": float(strength), "mode": mode, "seed": int(seed),
            "step": int(m["step"]), "L_D": m["L_D"], "L_G": m["L_G"],
            "L_bcr": m.get("L_bcr"), "L_cntr": m.get("L_cntr"), "proxy_fid": m.get("proxy_fid"),
        })
    return rows


def summarize(records: dict) -> list[dict]:
    cells = {}
    for (kind, strength, mode, seed), rec in records.items():
        cells.setdefault((kind, strength, mode), []).append(rec.final_fid)
    rows = []
    for (kind, strength, mode), fids in sorted(cells.items()):
        arr = np.asarray(fids)
        rows.append({
            "kind": kind, "strength": float(strength), "mode": mode, "n_runs": len(fids),
            "mean_fid": float(math.fsum(fids) / len(fids)), "std_fid": float(arr.std()),
            "top15_fid": emit.top_fraction_mean(fids),
        })
    return rows


def _plots(summary, modes, out: Path):
    by_kind = {}
    for row in summary:
        by_kind.setdefault(row["kind"], {}).setdefault(row["mode"], []).append((row["strength"], row["top15_fid"]))
    for kind, series in by_kind.items():
        ordered = {m: sorted(series[m]) for m in modes if m in series}
        if any(len(p) < 2 for p in ordered.values()):
            log.info("skipping plot for %s: needs at least two strengths", kind)
            continue
        name = re.sub(r"[^A-Za-z0-9]+", "-", kind).strip("-")
        emit.emit_svg_lines(ordered, "strength", "top-15% proxy-FID", out / "plots" / f"{name}.svg", title=kind)


def run_sweep(cfg: SweepConfig, out_dir=None, threads: int = 1) -> SweepResult:
    """Train every grid cell for every seed, then write CSV, plots, grids and checkpoints.

    With ``threads > 1`` runs execute in worker processes; the output is the
    same as a sequential sweep because every run is seeded independently and
    rows are sorted before writing.
    """
    jobs = []
    for kind, strength, mode in cfg.cells():
        for seed in cfg.seeds:
            jobs.append(((kind, float(strength), mode, int(seed)), cfg.cell_config(kind, strength, mode, seed)))
    return run_jobs(jobs, cfg, out_dir, threads)


def single_run(cfg: SweepConfig, out_dir=None, seed: int | None = None) -> SweepResult:
    """Train the base configuration alone (the ``train`` command)."""
    base = cfg.base if seed is None else replace(cfg.base, seed=seed)
    key = ("+".join(s.label for s in base.augment), float(base.augment[0].strength), base.mode, base.seed)
    return run_jobs([(key, base)], replace(cfg, modes=(base.mode,)), out_dir, 1)


def run_jobs(jobs, cfg: SweepConfig, out_dir=None, threads: int = 1) -> SweepResult:
    out = out_dir or cfg.out_dir
    out = Path(out) if out else None
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}", "--threads")
    for _, c in jobs:
        c.validate()
    if out is not None:
        _ensure_writable(out)
    train, eval_images = load_data(cfg.data, cfg.base)
    log.info("%d runs", len(jobs))

    records = {}
    if threads == 1 or len(jobs) == 1:
        _init_worker(train, eval_images)
        results = map(_run_cell, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(train, eval_images))
        results = pool.map(_run_cell, jobs)
    try:
        for i, (key, rec) in enumerate(results, 1):
            records[key] = rec
            log.info("[%d/%d] %s seed=%d proxy-FID %.4f", i, len(jobs), cell_name(*key[:3]), key[3], rec.final_fid)
    finally:
        if pool is not None:
            pool.shutdown()

    summary = summarize(records)
    if out is not None:
        rows = [r for key in sorted(records) for r in run_rows(key, records[key])]
        emit.write_csv(out / "runs.csv", emit.RUN_COLUMNS, rows)
        emit.write_csv(out / "summary.csv", emit.SUMMARY_COLUMNS, summary)
        _plots(summary, cfg.modes, out)
        for key in sorted(records):
            rec = records[key]
            stem = f"{cell_name(*key[:3])}_s{key[3]}"
            save_checkpoint(rec.state, out / "checkpoints" / f"{stem}.ckpt")
            for step, grid in sorted(rec.grids.items()):
                emit.emit_ppm_grid(grid, GRID_COLS, out / "grids" / f"{stem}_step{step}.ppm")
    return SweepResult(records, summary, out)
