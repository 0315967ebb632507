"""Artifact writers: verdict JSON, CSV tables and matplotlib figures."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def verdict(name: str, value, tolerance, passed: bool, **extra) -> dict:
    out = {"name": name, "value": _jsonable(value), "tolerance": _jsonable(tolerance),
           "passed": bool(passed)}
    out.update({k: _jsonable(v) for k, v in extra.items()})
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def plot_trace(trace, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(trace.times, trace.energy, "o-", ms=3)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("energy")
    for j, lab in enumerate("xyz"):
        axes[1].plot(trace.times, trace.momentum[:, j] - trace.momentum[0, j], label=f"p_{lab}")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("momentum drift")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_radial(grids, labels, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for g, lab in zip(grids, labels):
        k, v = g.radial_slice()
        ax.plot(k, np.real(v), label=f"Re phi, {lab}")
    ax.set_xlabel("|xi| along the first axis")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_study(levels, diffs, axis_name, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(levels[1:], np.maximum(diffs, 1e-300), "o-")
    ax.set_xlabel(axis_name)
    ax.set_ylabel("sup difference to previous level")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_gaps(values, path, ylabel="relative gap") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(np.arange(len(values)), np.maximum(values, 1e-300), "o")
    ax.set_xlabel("sample")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
