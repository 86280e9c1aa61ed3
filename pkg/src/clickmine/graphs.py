"""Weighted directed graphs over portal services and exit methods.

Two graphs are built from session groups: the transition graph counts
consecutive pageview pairs that cross services, and the exit graph links
each session's exit service to an exit-method node. Counts are summed
over all sessions; weights are per-source normalized by default so each
service's out-edges read as probabilities, or globally normalized with
``normalization="global"``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable

from .enrich import SessionGroup, determine_exit
from .model import ClickmineError, ServiceRegistry

EXIT_SECURE = "secure_exit"
EXIT_DIRECT = "direct_exit"
EXIT_NODES = (EXIT_DIRECT, EXIT_SECURE)


class UnknownNodeError(ClickmineError):
    def __init__(self, node):
        super().__init__(f"node not in graph: {node!r}")


class UnknownFormatError(ClickmineError):
    def __init__(self, fmt):
        super().__init__(f"unknown graph export format: {fmt!r}")


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    count: int
    weight: float


@dataclass(frozen=True)
class TransitionGraph:
    """Count-based directed multigraph with normalized edge weights."""

    nodes: frozenset[str]
    edges: tuple[GraphEdge, ...]  # sorted by (source, target)
    normalization: str  # "source" | "global"

    def edge_count_total(self) -> int:
        return sum(e.count for e in self.edges)


def _finalize(nodes: Iterable[str], counts: dict[tuple[str, str], int], normalization: str) -> TransitionGraph:
    if normalization not in ("source", "global"):
        raise ValueError(f"unknown normalization: {normalization!r}")
    if normalization == "source":
        out_totals: dict[str, int] = {}
        for (src, _dst), count in counts.items():
            out_totals[src] = out_totals.get(src, 0) + count
        edges = tuple(
            GraphEdge(src, dst, count, count / out_totals[src])
            for (src, dst), count in sorted(counts.items())
        )
    else:
        total = sum(counts.values())
        edges = tuple(
            GraphEdge(src, dst, count, count / total)
            for (src, dst), count in sorted(counts.items())
        )
    return TransitionGraph(nodes=frozenset(nodes), edges=edges, normalization=normalization)


class TransitionAccumulator:
    """Mergeable edge counter for the service transition graph.

    Consecutive pageviews in the same service produce no edge unless the
    second page's id is in the configured re-login page set (the explicit
    way a self-loop back through the sign-in page shows up).
    """

    def __init__(self, registry: ServiceRegistry, relogin_page_ids: frozenset[int] = frozenset()):
        self.registry = registry
        self.relogin_page_ids = relogin_page_ids
        self.counts: dict[tuple[str, str], int] = {}

    def add(self, group: SessionGroup) -> None:
        events = group.events
        if len(events) < 2:
            return
        name_of = self.registry.name_of
        counts = self.counts
        relogin = self.relogin_page_ids
        prev = events[0]
        for e in events[1:]:
            if e.service_id != prev.service_id or (relogin and e.page_id in relogin):
                key = (name_of(prev.service_id), name_of(e.service_id))
                counts[key] = counts.get(key, 0) + 1
            prev = e

    def merge(self, other: "TransitionAccumulator") -> None:
        for key, count in other.counts.items():
            self.counts[key] = self.counts.get(key, 0) + count

    def result(self, normalization: str = "source") -> TransitionGraph:
        return _finalize(self.registry.names(), self.counts, normalization)


class ExitAccumulator:
    """Mergeable edge counter for the exit-method graph.

    Warning-window logouts merge into the secure-exit node: both are
    regular session termination, as opposed to a direct exit.
    """

    def __init__(self, registry: ServiceRegistry):
        self.registry = registry
        self.counts: dict[tuple[str, str], int] = {}

    def add(self, group: SessionGroup) -> None:
        service_id, method = determine_exit(group)
        key = (self.registry.name_of(service_id), EXIT_SECURE if method.is_secure else EXIT_DIRECT)
        self.counts[key] = self.counts.get(key, 0) + 1

    def add_exit(self, service_id: int, secure: bool) -> None:
        key = (self.registry.name_of(service_id), EXIT_SECURE if secure else EXIT_DIRECT)
        self.counts[key] = self.counts.get(key, 0) + 1

    def merge(self, other: "ExitAccumulator") -> None:
        for key, count in other.counts.items():
            self.counts[key] = self.counts.get(key, 0) + count

    def result(self, normalization: str = "source") -> TransitionGraph:
        return _finalize(self.registry.names() + EXIT_NODES, self.counts, normalization)


def build_transition_graph(
    groups: Iterable[SessionGroup],
    registry: ServiceRegistry,
    relogin_page_ids: frozenset[int] = frozenset(),
    normalization: str = "source",
) -> TransitionGraph:
    """Count service-to-service transitions across all sessions."""
    acc = TransitionAccumulator(registry, relogin_page_ids)
    for group in groups:
        acc.add(group)
    return acc.result(normalization)


def build_exit_graph(
    groups: Iterable[SessionGroup],
    registry: ServiceRegistry,
    normalization: str = "source",
) -> TransitionGraph:
    """One edge per session, from its exit service to its exit-method node."""
    acc = ExitAccumulator(registry)
    for group in groups:
        acc.add(group)
    return acc.result(normalization)


def node_degree(graph: TransitionGraph, node: str) -> tuple[int, int, int]:
    """(in, out, total) degree of a node, counting edge multiplicity."""
    if node not in graph.nodes:
        raise UnknownNodeError(node)
    in_degree = sum(e.count for e in graph.edges if e.target == node)
    out_degree = sum(e.count for e in graph.edges if e.source == node)
    return in_degree, out_degree, in_degree + out_degree


# ---------------------------------------------------------------------------
# exports

def export_graph(graph: TransitionGraph, fmt: str) -> str:
    """Render a graph as "dot", "edge-list-csv" or "json" text.

    Node and edge ordering is lexicographic, so output is deterministic.
    The edge list carries from,to,count,weight with full-precision weights
    and re-parses to an equal graph via parse_edge_list (isolated nodes
    are only representable in the json and dot forms).
    """
    if fmt == "dot":
        lines = ["digraph clickstream {"]
        for node in sorted(graph.nodes):
            lines.append(f'  "{node}";')
        for e in sorted(graph.edges, key=lambda e: (e.source, e.target)):
            lines.append(f'  "{e.source}" -> "{e.target}" [weight={e.weight!r}, label={e.count}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    if fmt == "edge-list-csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("from", "to", "count", "weight"))
        for e in sorted(graph.edges, key=lambda e: (e.source, e.target)):
            writer.writerow((e.source, e.target, e.count, repr(e.weight)))
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(
            {
                "normalization": graph.normalization,
                "nodes": sorted(graph.nodes),
                "edges": [
                    {"from": e.source, "to": e.target, "count": e.count, "weight": e.weight}
                    for e in sorted(graph.edges, key=lambda e: (e.source, e.target))
                ],
            },
            indent=2,
        ) + "\n"
    raise UnknownFormatError(fmt)


def parse_edge_list(text: str, normalization: str = "source") -> TransitionGraph:
    """Rebuild a graph from edge-list CSV text (nodes = incident nodes)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["from", "to", "count", "weight"]:
        raise ValueError("not an edge-list export: bad header")
    nodes: set[str] = set()
    edges = []
    for row in reader:
        if not row:
            continue
        src, dst, count, weight = row
        nodes.update((src, dst))
        edges.append(GraphEdge(src, dst, int(count), float(weight)))
    edges.sort(key=lambda e: (e.source, e.target))
    return TransitionGraph(nodes=frozenset(nodes), edges=tuple(edges), normalization=normalization)
