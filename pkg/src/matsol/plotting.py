"""Rendered figures (PNG) for fields and diagnostics.

These accompany the delimited exports: the CSV stays the
machine-readable artifact, the figures are what a person looks at.
Rendering uses a non-interactive backend and fixed layouts so repeated
runs of the same scenario produce the same images.
"""

from __future__ import annotations

import os
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import ConservedSeries, EnergyPartition, PeakTrack  # noqa: E402
from .evaluate import MatrixField  # noqa: E402


def field_figure(field: MatrixField, out_path: str,
                 shared_scale: bool = False, title: str = "") -> str:
    """d x d panel of |V_ij| heatmaps over the (x, t) window; masked
    points drawn red."""
    d = field.d
    g = field.grid
    mag = np.abs(np.nan_to_num(field.values))
    vmax = float(mag.max()) if shared_scale else None
    extent = (g.x_min, g.x_max, g.t_min, g.t_max)
    fig, axes = plt.subplots(d, d, figsize=(3.2 * d, 2.6 * d),
                             squeeze=False, sharex=True, sharey=True)
    masked = np.ma.masked_where(~field.mask, np.ones_like(field.mask,
                                                          dtype=float))
    for i in range(d):
        for j in range(d):
            ax = axes[i][j]
            im = ax.imshow(mag[:, :, i, j], origin="lower", aspect="auto",
                           extent=extent, cmap="viridis",
                           vmin=0.0 if shared_scale else None, vmax=vmax)
            if field.mask.any():
                ax.imshow(masked, origin="lower", aspect="auto",
                          extent=extent, cmap="autumn", vmin=0, vmax=1,
                          alpha=0.9)
            ax.set_title(f"|V_{i + 1}{j + 1}|", fontsize=9)
            if i == d - 1:
                ax.set_xlabel("x")
            if j == 0:
                ax.set_ylabel("t")
            fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def diagnostics_figure(series: List[ConservedSeries],
                       partition: Optional[EnergyPartition],
                       track: Optional[PeakTrack],
                       out_path: str, title: str = "") -> str:
    """Three-panel summary: functional candidates over t, per-entry
    energy partition, and tracked peak positions."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))

    ax = axes[0]
    for s in series:
        vals = np.asarray(s.values)
        ax.plot(s.t_values, vals.real, label=f"{s.tag} (re)")
        if np.iscomplexobj(vals) and np.abs(vals.imag).max() > 1e-12:
            ax.plot(s.t_values, vals.imag, "--", label=f"{s.tag} (im)")
    ax.set_xlabel("t")
    ax.set_title("functional candidates")
    if series:
        ax.legend(fontsize=7)

    ax = axes[1]
    if partition is not None:
        d = partition.d
        for i in range(d):
            for j in range(d):
                col = partition.per_entry[:, i, j]
                if col.max() > 1e-12:
                    ax.plot(partition.t_values, col,
                            label=f"E_{i + 1}{j + 1}")
        ax.plot(partition.t_values, partition.total, "k--", label="total")
        ax.legend(fontsize=7)
    ax.set_xlabel("t")
    ax.set_title("energy partition")

    ax = axes[2]
    if track is not None:
        ts, xs, hs = [], [], []
        for t, peaks in zip(track.t_values, track.peaks_per_t):
            for x, h in peaks:
                ts.append(t)
                xs.append(x)
                hs.append(h)
        if ts:
            sc = ax.scatter(ts, xs, c=hs, s=8, cmap="plasma")
            fig.colorbar(sc, ax=ax, shrink=0.85, label="height")
    ax.set_xlabel("t")
    ax.set_ylabel("peak x")
    ax.set_title("peak tracks")

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def convergence_figure(sups_by_h: Dict[str, List], out_path: str,
                       title: str = "") -> str:
    """log-log residual sup vs step size, one line per equation."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for eq, pairs in sups_by_h.items():
        if not pairs:
            continue
        hs = [p[0] for p in pairs]
        sups = [max(p[1], 1e-300) for p in pairs]
        ax.loglog(hs, sups, "o-", label=eq)
    ax.set_xlabel("step h")
    ax.set_ylabel("residual sup")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
