"""Figure rendering for exported prediction tables.

Renders the tidy long-format plot table (series id, t, value, optional
band bounds) to a static image file.  Uses the Agg backend so it works
headless, and pins the PNG metadata so repeated runs produce identical
bytes on one platform.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BAND_ALPHA = 0.25


def render_series_figure(rows, path, title=None, xlabel="t", ylabel="value"):
    """Render tidy rows to an image file.

    Each row is a mapping with keys ``series``, ``t``, ``value`` and
    optionally ``lo``/``hi`` (NaN when absent).  Prediction series are drawn
    as lines with uncertainty bands, data series as points.
    """
    by_series = {}
    for row in rows:
        by_series.setdefault(row["series"], []).append(row)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name in sorted(by_series):
        entries = by_series[name]
        t = np.array([e["t"] for e in entries], dtype=float)
        v = np.array([e["value"] for e in entries], dtype=float)
        order = np.argsort(t)
        t, v = t[order], v[order]
        lo = np.array([e.get("lo", np.nan) for e in entries], dtype=float)[order]
        hi = np.array([e.get("hi", np.nan) for e in entries], dtype=float)[order]
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            ax.fill_between(t, lo, hi, alpha=_BAND_ALPHA, linewidth=0)
            ax.plot(t, v, label=name)
        else:
            ax.plot(t, v, linestyle="none", marker="o", markersize=3, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(by_series) <= 12:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "funcgp"})
    plt.close(fig)
