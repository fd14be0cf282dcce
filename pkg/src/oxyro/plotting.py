"""PNG figures for the command-line reports (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_forecast(actual: np.ndarray, mean: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                  path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    k = np.arange(1, actual.size + 1)
    ax.fill_between(k, lower, upper, color="tab:blue", alpha=0.2, label="interval")
    ax.plot(k, mean, color="tab:blue", label="forecast")
    ax.plot(k, actual, "k.", label="actual")
    ax.set_xlabel("held-out step")
    ax.set_ylabel("demand")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_gantt(rows: Sequence[tuple[str, str, str, float, float]], oxygen: set[str], path: Path,
               title: str = "") -> Path:
    """``rows`` are (job, stage, machine, start, end)."""
    machines = sorted({r[2] for r in rows})
    ypos = {m: k for k, m in enumerate(machines)}
    jobs = sorted({r[0] for r in rows})
    colors = plt.get_cmap("tab20")(np.linspace(0, 1, max(len(jobs), 2)))
    fig, ax = plt.subplots(figsize=(9, 0.45 * len(machines) + 1.5))
    for job, stage, mach, s, e in rows:
        c = colors[jobs.index(job)]
        ax.barh(ypos[mach], e - s, left=s, color=c, edgecolor="k" if stage in oxygen else "none", height=0.7)
        ax.text(0.5 * (s + e), ypos[mach], job, ha="center", va="center", fontsize=7)
    ax.set_yticks(range(len(machines)), machines)
    ax.set_xlabel("minute")
    ax.set_title(title)
    return _save(fig, path)


def plot_levels(levels: dict[str, np.ndarray], bounds: tuple[float, float, float], path: Path) -> Path:
    lo, mid, hi = bounds
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for name, lv in levels.items():
        ax.plot(np.arange(1, lv.size + 1), lv, marker=".", label=name)
    for v, ls in ((lo, "--"), (mid, ":"), (hi, "--")):
        ax.axhline(v, color="gray", ls=ls, lw=1)
    ax.set_xlabel("period")
    ax.set_ylabel("gasholder level")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_grid(a_values: np.ndarray, b_values: np.ndarray, objective: np.ndarray, path: Path) -> Path:
    """``objective[i, j]`` for ``a_values[i]`` and ``b_values[j]``; sentinel cells are masked."""
    fig, ax = plt.subplots(figsize=(6, 5))
    grid = np.ma.masked_less_equal(objective, -1.0e6)
    im = ax.pcolormesh(b_values, a_values, grid, shading="nearest", cmap="viridis")
    fig.colorbar(im, ax=ax, label="objective")
    ax.set_xlabel("b")
    ax.set_ylabel("a")
    return _save(fig, path)


def plot_ramp(ramps: np.ndarray, series: dict[str, np.ndarray], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, vals in series.items():
        v = np.where(vals <= -1.0e6, np.nan, vals)
        ax.plot(ramps, v, marker="o", label=name)
    ax.set_xlabel("ramp limit")
    ax.set_ylabel("objective")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_simulation(labels: Sequence[str], nominal: dict[str, np.ndarray], mean: dict[str, np.ndarray],
                    std: dict[str, np.ndarray], path: Path) -> Path:
    """Nominal objective and simulated mean with two-standard-deviation bars per case."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels) + 2), 4))
    for k, name in enumerate(nominal):
        off = (k - 0.5 * (len(nominal) - 1)) * 0.25
        nom = np.where(nominal[name] <= -1.0e6, np.nan, nominal[name])
        mu = np.where(mean[name] <= -1.0e6, np.nan, mean[name])
        ax.errorbar(x + off, mu, yerr=2 * std[name], fmt="o", capsize=3, label=f"{name} simulated")
        ax.plot(x + off, nom, "x", label=f"{name} nominal")
    ax.set_xticks(x, labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("objective")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)
