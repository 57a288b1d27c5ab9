"""PNG figures for run reports (Agg canvas, no display needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> Path:
    FigureCanvasAgg(fig)
    path = Path(path)
    # no Software/date metadata so that reruns give identical bytes
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    return path


def plot_curve(report, path, baseline: float | None = None) -> Path:
    """Average absolute error against epoch, in- and out-sample."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    epochs = [r.epoch for r in report.rows]
    ax.plot(epochs, [r.in_err for r in report.rows], label="in-sample")
    if any(r.out_err is not None for r in report.rows):
        ax.plot(epochs, [np.nan if r.out_err is None else r.out_err for r in report.rows],
                label="out-sample")
    if report.best is not None and report.best.epoch > 0:
        ax.axvline(report.best.epoch, color="0.6", lw=0.8, ls=":")
    if baseline is not None:
        ax.axhline(baseline, color="k", lw=0.8, ls="--", label="linear baseline")
    ax.set_xlabel("epoch")
    ax.set_ylabel("avg |error|")
    ax.set_title(f"{report.name}, seed {report.seed}")
    ax.legend()
    return _save(fig, path)


def plot_seeds(reports, path, baseline: float | None = None) -> Path:
    """Out-sample (or in-sample) curves of several seeds on one axis."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    for r in reports:
        ys = [row.out_err if row.out_err is not None else row.in_err for row in r.rows]
        ax.plot([row.epoch for row in r.rows], ys, lw=0.9, label=f"seed {r.seed}")
    if baseline is not None:
        ax.axhline(baseline, color="k", lw=0.8, ls="--", label="linear baseline")
    ax.set_xlabel("epoch")
    ax.set_ylabel("avg |error|")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_regression(targets, predicted, path, label: str = "target") -> Path:
    """Predicted against actual values with the identity line."""
    t = np.ravel(targets)
    p = np.ravel(predicted)
    fig = Figure(figsize=(4.5, 4.5))
    ax = fig.add_subplot()
    ax.scatter(t, p, s=8)
    lo, hi = float(min(t.min(), p.min())), float(max(t.max(), p.max()))
    ax.plot([lo, hi], [lo, hi], color="k", lw=0.8)
    ax.set_xlabel(f"actual {label}")
    ax.set_ylabel(f"predicted {label}")
    return _save(fig, path)
