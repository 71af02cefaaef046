"""Static figures from sweep and creation-sample CSV files."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FORMATS = ("png", "svg", "pdf")


def _rows_for(rows: Sequence[dict], n_cycles: int | None, placement: str | None):
    cyc = n_cycles if n_cycles is not None else min(int(r["n_cycles"]) for r in rows)
    pl = placement or rows[0]["placement"]
    return [r for r in rows if int(r["n_cycles"]) == cyc and r["placement"] == pl], cyc


def _by_ring(rows):
    curves = defaultdict(list)
    for r in rows:
        curves[int(r["n_bds"])].append(r)
    for n in curves:
        curves[n].sort(key=lambda r: int(r["bytes_per_bd"]))
    return dict(sorted(curves.items()))


def plot_throughput(rows: Sequence[dict], path: str | Path, ceiling_MBps: float | None = None,
                    n_cycles: int | None = None, placement: str | None = None) -> Path:
    """Median throughput against payload per BD, one curve per ring size."""
    sel, cyc = _rows_for(rows, n_cycles, placement)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for n, pts in _by_ring(sel).items():
        x = [int(r["bytes_per_bd"]) for r in pts]
        y = [float(r["throughput_MBps_median"]) / 1000 for r in pts]
        ax.plot(x, y, marker="o", ms=3, lw=1, label=f"{n} BDs")
    if ceiling_MBps:
        ax.axhline(ceiling_MBps / 1000, color="k", ls="--", lw=0.8, label="bus ceiling")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("bytes per BD")
    ax.set_ylabel("median throughput (GB/s)")
    ax.set_title(f"MM2S throughput, {cyc} ring cycle(s)")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_latency(rows: Sequence[dict], path: str | Path, n_cycles: int | None = None,
                 placement: str | None = None) -> Path:
    """Latency median with the min-max band; ring sizes overlaid."""
    sel, _ = _rows_for(rows, n_cycles, placement)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for n, pts in _by_ring(sel).items():
        x = [int(r["bytes_per_bd"]) for r in pts]
        med = [float(r["latency_ns_median"]) for r in pts]
        lo = [float(r["latency_ns_min"]) for r in pts]
        hi = [float(r["latency_ns_max"]) for r in pts]
        line, = ax.plot(x, med, lw=1, label=f"{n} BDs")
        ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.05)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("bytes per BD")
    ax.set_ylabel("latency (ns)")
    ax.set_title("Tail write to first stream word")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def read_creation_csv(path: str | Path) -> dict[tuple[str, int], np.ndarray]:
    data: dict[tuple[str, int], list[float]] = defaultdict(list)
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            data[(r["cpu"], int(r["n_bds"]))].append(float(r["per_bd_ns"]))
    return {k: np.asarray(v) for k, v in data.items()}


def plot_creation_hist(samples: dict[tuple[str, int], np.ndarray], path: str | Path,
                       n_bds: int | None = None) -> Path:
    """Per-BD creation-time histograms (log count axis)."""
    if n_bds is None:  # the size with the most samples
        n_bds = max(samples, key=lambda k: len(samples[k]))[1]
    n = n_bds
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for ax, cpu in zip(axes, ("APU", "RPU")):
        xs = samples.get((cpu, n))
        if xs is None:
            ax.set_visible(False)
            continue
        ax.hist(xs / 1000, bins=100, log=True)
        ax.set_xlabel("time per BD (us)")
        ax.set_title(f"{cpu}, {n}-BD ring, {len(xs)} samples")
    axes[0].set_ylabel("count")
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".")
    if fmt not in FORMATS:
        raise ValueError(f"unsupported plot format '{fmt}'")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
