"""Report figures. Uses the object-oriented Figure API so nothing depends on
a display or pyplot global state."""

from __future__ import annotations

import math

import numpy as np
from matplotlib.colors import BoundaryNorm, ListedColormap
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from .geometry import CLASS_NAMES, BevGrid
from .viewgraph import CROSS_GEO, CROSS_OBJ, INTRA, ViewGraph

CLASS_COLORS = ["#f2f2f2", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#d62728"]
EDGE_STYLE = {
    INTRA: dict(color="#555555", linestyle="-", linewidth=1.2),
    CROSS_OBJ: dict(color="#d62728", linestyle="-", linewidth=1.6),
    CROSS_GEO: dict(color="#1f77b4", linestyle="--", linewidth=1.0),
}
AGENT_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

_CMAP = ListedColormap(CLASS_COLORS)
_NORM = BoundaryNorm(np.arange(len(CLASS_COLORS) + 1) - 0.5, len(CLASS_COLORS))
_PNG_META = {"Software": None}


def _save(fig: Figure, path) -> None:
    fig.savefig(path, dpi=100, metadata=_PNG_META)


def plot_masks(masks: dict, path) -> None:
    """Grid of FPV masks, one row per agent."""
    verts = sorted(masks)
    agents = sorted({v.agent_id for v in verts})
    ncols = max(sum(v.agent_id == a for v in verts) for a in agents)
    fig = Figure(figsize=(3.2 * ncols, 2.0 * len(agents) + 0.6))
    axes = fig.subplots(len(agents), ncols, squeeze=False)
    for ax in axes.ravel():
        ax.set_axis_off()
    for v in verts:
        ax = axes[agents.index(v.agent_id), v.camera_index]
        ax.imshow(masks[v].cells, cmap=_CMAP, norm=_NORM, interpolation="nearest")
        ax.set_title(v.label, fontsize=9)
    handles = [Polygon([[0, 0]], color=c, label=n) for c, n in zip(CLASS_COLORS[1:], CLASS_NAMES)]
    fig.legend(handles=handles, loc="lower center", ncol=len(CLASS_NAMES), fontsize=8, frameon=False)
    _save(fig, path)


def plot_bev(grid: BevGrid, path, footprints: dict | None = None, agents=()) -> None:
    """BEV class raster with optional camera footprints and agent markers."""
    p = grid.params
    extent = (p.x_min, p.x_min + p.width * p.resolution, p.y_min, p.y_min + p.height * p.resolution)
    fig = Figure(figsize=(6, 6))
    ax = fig.subplots()
    ax.imshow(grid.cells, cmap=_CMAP, norm=_NORM, origin="lower", extent=extent, interpolation="nearest")
    for v, fp in sorted((footprints or {}).items()):
        color = AGENT_COLORS[v.agent_id % len(AGENT_COLORS)]
        ax.add_patch(Polygon(fp.vertices, closed=True, fill=False, edgecolor=color, linewidth=0.8, alpha=0.7))
    for a in agents:
        ax.plot(a.pose[0], a.pose[1], marker="^", color=AGENT_COLORS[a.id % len(AGENT_COLORS)], markersize=8)
        ax.annotate(f"a{a.id}", (a.pose[0], a.pose[1]), textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    _save(fig, path)


def plot_graph(graph: ViewGraph, path) -> None:
    """Cameras on a circle grouped by agent; edges styled by kind."""
    verts = graph.vertices
    n = len(verts)
    pos = {v: (math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n)) for i, v in enumerate(verts)}
    fig = Figure(figsize=(5.5, 5.5))
    ax = fig.subplots()
    for (u, v), kind in sorted(graph.edges.items()):
        (x0, y0), (x1, y1) = pos[u], pos[v]
        ax.plot([x0, x1], [y0, y1], **EDGE_STYLE[kind])
    for v, (x, y) in pos.items():
        ax.scatter([x], [y], s=260, color=AGENT_COLORS[v.agent_id % len(AGENT_COLORS)], zorder=3)
        ax.annotate(v.label, (x, y), ha="center", va="center", fontsize=7, color="white", zorder=4)
    for kind, style in EDGE_STYLE.items():
        ax.plot([], [], label=kind, **style)
    ax.legend(loc="upper right", fontsize=8, frameon=False)
    ax.set_xlim(-1.3, 1.3)
    ax.set_ylim(-1.3, 1.3)
    ax.set_aspect("equal")
    ax.set_axis_off()
    _save(fig, path)
