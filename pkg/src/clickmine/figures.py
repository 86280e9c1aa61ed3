"""Render report figures: network views of the graphs and bounce shares.

Pure presentation on top of the analysis results; nothing here feeds
back into any computed statistic. Uses the Agg backend so figures render
in headless batch runs.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import cm, colors, patches

from .bounce import BounceStats
from .graphs import EXIT_NODES, TransitionGraph, node_degree
from .model import ServiceRegistry


def _node_positions(graph: TransitionGraph, registry: ServiceRegistry | None) -> dict[str, tuple[float, float]]:
    exit_nodes = [n for n in EXIT_NODES if n in graph.nodes]
    if registry is not None:
        ring = [name for name in registry.names() if name in graph.nodes]
        ring += sorted(graph.nodes - set(ring) - set(exit_nodes))
    else:
        ring = sorted(graph.nodes - set(exit_nodes))
    positions = {}
    for i, name in enumerate(ring):
        angle = 2.0 * math.pi * i / max(len(ring), 1)
        positions[name] = (math.cos(angle), math.sin(angle))
    # exit-method nodes sit inside the service ring
    for i, name in enumerate(exit_nodes):
        positions[name] = (-0.35 + 0.7 * i, 0.0)
    return positions


def save_graph_figure(
    graph: TransitionGraph,
    path,
    title: str,
    registry: ServiceRegistry | None = None,
) -> None:
    """Draw the weighted digraph: services on a ring, edge color by weight."""
    positions = _node_positions(graph, registry)
    fig, ax = plt.subplots(figsize=(8.5, 8.5))
    cmap = cm.get_cmap("RdYlGn_r")
    norm = colors.Normalize(vmin=0.0, vmax=max((e.weight for e in graph.edges), default=1.0))
    max_count = max((e.count for e in graph.edges), default=1)

    for e in sorted(graph.edges, key=lambda e: e.count):
        x0, y0 = positions[e.source]
        x1, y1 = positions[e.target]
        if e.source == e.target:
            loop = patches.Arc((x0 * 1.12, y0 * 1.12), 0.16, 0.16, color=cmap(norm(e.weight)), lw=1.5)
            ax.add_patch(loop)
            continue
        ax.annotate(
            "",
            xy=(x1, y1),
            xytext=(x0, y0),
            arrowprops=dict(
                arrowstyle="-|>",
                color=cmap(norm(e.weight)),
                lw=0.6 + 3.4 * e.count / max_count,
                alpha=0.85,
                connectionstyle="arc3,rad=0.08",
                shrinkA=14,
                shrinkB=14,
            ),
        )

    max_degree = max((node_degree(graph, n)[2] for n in graph.nodes), default=1) or 1
    for name, (x, y) in positions.items():
        total = node_degree(graph, name)[2]
        size = 180 + 900 * total / max_degree
        is_exit = name in EXIT_NODES
        ax.scatter([x], [y], s=size, zorder=3, color="#5b3a8c" if is_exit else "#2f6f8f", edgecolors="white")
        lx, ly = (x, y + 0.1) if is_exit else (x * 1.18, y * 1.18)
        ax.text(lx, ly, name, ha="center", va="center", fontsize=10, zorder=4)

    fig.colorbar(
        cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax, fraction=0.04, pad=0.02, label="edge weight"
    )
    ax.set_title(title)
    ax.set_xlim(-1.45, 1.45)
    ax.set_ylim(-1.45, 1.45)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_bounce_figure(stats: BounceStats, path) -> None:
    """Two bar groups: session share and pageview share, single vs multi."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    groups = ("sessions", "pageviews")
    single = (stats.session_share_single, stats.pageview_share_single)
    multi = (stats.session_share_multi, stats.pageview_share_multi)
    x = range(len(groups))
    width = 0.38
    bars_single = ax.bar([i - width / 2 for i in x], single, width, label="single-page", color="#c05746")
    bars_multi = ax.bar([i + width / 2 for i in x], multi, width, label="multi-page", color="#2f6f8f")
    for bars in (bars_single, bars_multi):
        for bar in bars:
            ax.text(
                bar.get_x() + bar.get_width() / 2,
                bar.get_height() + 1.0,
                f"{bar.get_height():.2f}%",
                ha="center",
                fontsize=9,
            )
    ax.set_xticks(list(x))
    ax.set_xticklabels(groups)
    ax.set_ylabel("share (%)")
    ax.set_ylim(0, 112)
    ax.set_title("Single-page vs multi-page sessions")
    ax.legend(loc="upper left")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
