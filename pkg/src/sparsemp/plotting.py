"""PNG figures for the report command (matplotlib, headless backend)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_objective_vs_k", "plot_traces", "read_trace"]


def plot_objective_vs_k(rows: Sequence, path) -> Path:
    """Seed-mean objective against ``k``, one line per method."""
    methods: List[str] = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        ks = sorted({r.k for r in rows if r.method == m})
        ys = [np.mean([r.objective for r in rows if r.method == m and r.k == k]) for k in ks]
        ax.plot(ks, ys, marker="o", label=m)
    ax.set_xlabel("k")
    ax.set_ylabel("objective")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def read_trace(path):
    """Return ``(header, columns)`` from a trace CSV written by the harness."""
    header = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key] = val
        else:
            body.append(line)
    reader = csv.DictReader(body)
    cols = {name: [] for name in reader.fieldnames or ()}
    for rec in reader:
        for name, val in rec.items():
            cols[name].append(float(val))
    return header, {k: np.array(v) for k, v in cols.items()}


def plot_traces(trace_paths: Sequence, path) -> Path:
    """Objective against iteration for each trace file."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for tp in trace_paths:
        header, cols = read_trace(tp)
        if cols.get("iteration") is None or not len(cols["iteration"]):
            continue
        label = f"{header.get('method', Path(tp).stem)} k={header.get('k', '?')}"
        ax.plot(cols["iteration"], cols["objective"], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.set_xscale("log")
    if len(trace_paths) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
