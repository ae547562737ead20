# =============================
# infrastructure/plots.py
# =============================
"""
Figure rendering with matplotlib's object API on the Agg canvas, so plots can
be produced from worker threads and processes without a display.
"""

import logging
import os
from typing import Mapping, Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from app.domain.core_affect import AffectTrajectory, Emotion, InteroceptiveProfile, N_EMOTIONS
from app.domain.metrics import PcaProjection, RecallHeatmap

logger = logging.getLogger(__name__)

# stable SVG element ids across runs
matplotlib.rcParams["svg.hashsalt"] = "co-construction"

_EMOTION_COLORS = matplotlib.colormaps["tab10"]


def _new_figure(size=(6.4, 5.2)) -> Figure:
    fig = Figure(figsize=size)
    FigureCanvasAgg(fig)
    return fig


def _save_svg(fig: Figure, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    logger.info("Wrote %s", path)
    return path


def draw_heatmap(fig: Figure, heatmap: RecallHeatmap, title: str = ""):
    """Recall matrix with the unmatched-sign column appended on the right."""
    ax = fig.add_subplot(1, 1, 1)
    data = np.column_stack([heatmap.matrix, heatmap.other])
    im = ax.imshow(data, vmin=0.0, vmax=1.0, cmap="viridis")
    names = heatmap.row_labels
    ax.set_xticks(range(data.shape[1]), [*names, "other"], rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("matched sign")
    ax.set_ylabel("reference label")
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            ax.text(j, i, f"{data[i, j]:.2f}", ha="center", va="center", fontsize=7,
                    color="black" if data[i, j] > 0.5 else "white")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="recall")


def save_heatmap_svg(path: str, heatmap: RecallHeatmap, title: str = "") -> str:
    fig = _new_figure()
    draw_heatmap(fig, heatmap, title)
    return _save_svg(fig, path)


def heatmap_rgba(heatmap: RecallHeatmap, title: str = "", size=(5.0, 4.2), dpi: int = 90) -> np.ndarray:
    """Renders a heatmap to an (H, W, 4) uint8 array for in-app previews."""
    fig = Figure(figsize=size, dpi=dpi)
    canvas = FigureCanvasAgg(fig)
    draw_heatmap(fig, heatmap, title)
    canvas.draw()
    return np.asarray(canvas.buffer_rgba()).copy()


def save_pca_svg(
    path: str, projections: Mapping[str, PcaProjection], labels: Sequence[int], title: str = ""
) -> str:
    """One scatter panel per agent, colored by reference label, with a shared legend."""
    labels = np.asarray(labels, dtype=int)
    fig = _new_figure(size=(5.0 * len(projections), 4.6))
    for i, (name, proj) in enumerate(projections.items()):
        ax = fig.add_subplot(1, len(projections), i + 1)
        coords = proj.coords
        if coords.shape[1] == 0:
            coords = np.zeros((coords.shape[0], 2))
        elif coords.shape[1] == 1:
            coords = np.column_stack([coords, np.zeros(coords.shape[0])])
        for e in Emotion:
            sel = labels == int(e)
            if np.any(sel):
                ax.scatter(coords[sel, 0], coords[sel, 1], s=8, alpha=0.7, color=_EMOTION_COLORS(int(e)), label=e.title)
        ratio = ", ".join(f"{r:.2f}" for r in proj.explained_ratio)
        ax.set_title(f"agent {name} (explained {ratio}{', degenerate' if proj.degenerate else ''})", fontsize=9)
        ax.set_xlabel("PC1")
        ax.set_ylabel("PC2")
    handles, names = fig.axes[0].get_legend_handles_labels()
    fig.legend(handles, names, loc="lower center", ncol=N_EMOTIONS, fontsize=8, markerscale=2)
    if title:
        fig.suptitle(title)
    fig.subplots_adjust(bottom=0.2)
    return _save_svg(fig, path)


def save_affect_svg(
    path: str,
    trajectories: Sequence[AffectTrajectory],
    profile: InteroceptiveProfile,
    target: Emotion,
    title: Optional[str] = None,
) -> str:
    """Replica trajectories in the valence-arousal plane over the profile's attractors."""
    fig = _new_figure(size=(5.6, 5.6))
    ax = fig.add_subplot(1, 1, 1)
    means = profile.circumplex_means()
    for e in Emotion:
        ax.scatter(*means[int(e)], marker="*", s=120, color=_EMOTION_COLORS(int(e)), edgecolor="black", zorder=3)
        ax.annotate(e.title, means[int(e)], textcoords="offset points", xytext=(5, 5), fontsize=8)
    for tr in trajectories:
        ax.plot(tr.samples[:, 0], tr.samples[:, 1], lw=0.8, alpha=0.8, color=_EMOTION_COLORS(int(tr.initial)))
        ax.scatter(*tr.samples[0], s=12, color=_EMOTION_COLORS(int(tr.initial)))
    ax.axhline(0, color="grey", lw=0.5)
    ax.axvline(0, color="grey", lw=0.5)
    ax.set_xlabel("valence")
    ax.set_ylabel("arousal")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title or f"{profile.kind.value}: trajectories toward {Emotion.parse(target).title}")
    return _save_svg(fig, path)
