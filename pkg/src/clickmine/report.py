"""Pipeline orchestration: wire enrichment into the analyses and reports.

The full report runs two passes over the raw export: a light counting
pass (per-user logins, input-order check), then one enrichment pass that
fans each session out to every requested analysis and, optionally, the
enriched dataset writers. Nothing is held in memory beyond running
tallies, so a month of traffic processes in bounded space.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass

from . import __version__
from .bounce import (
    BounceAccumulator,
    ContingencyAccumulator,
    chi_square,
)
from .dataio import (
    PAGEVIEW_COLUMNS,
    manifest_for_file,
    pageview_row,
    read_enriched_sessions,
    read_events,
    session_header,
    session_row,
    write_manifest,
)
from .enrich import (
    aggregate_session,
    enrich_pageviews,
    group_by_session,
    prescan_export,
)
from .graphs import (
    EXIT_SECURE,
    ExitAccumulator,
    TransitionAccumulator,
    export_graph,
    node_degree,
)
from .model import DEFAULT_REGISTRY, ServiceRegistry
from .rules import TransactionAccumulator, apriori, generate_rules, rules_to_csv, top_rules

log = logging.getLogger(__name__)

DEFAULT_ATTRIBUTES = ("Browser_Type", "Referer_Type", "User_Language_TR", "User_Location")
ALL_ANALYSES = ("bounce", "chisq", "exits", "transitions", "mine")


@dataclass
class PipelineConfig:
    """Everything the report path needs, echoed into the summary."""

    input: str | None = None
    output_dir: str = "."
    registry: ServiceRegistry = DEFAULT_REGISTRY
    analyses: tuple[str, ...] = ALL_ANALYSES
    attributes: tuple[str, ...] = DEFAULT_ATTRIBUTES
    min_support: float = 0.25
    min_confidence: float = 0.98
    significance: float = 0.05
    chi_mode: str = "counts"  # counts | row_percentages
    yates: str = "auto"
    normalization: str = "source"
    rule_ordering: str = "lift"
    top_n: int = 30
    seed: int = 1
    relogin_page_ids: frozenset[int] = frozenset()
    write_enriched: bool = False
    figures: bool = True

    def validate(self) -> None:
        for value, name in ((self.min_support, "min_support"), (self.min_confidence, "min_confidence"),
                            (self.significance, "significance")):
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        unknown = set(self.analyses) - set(ALL_ANALYSES)
        if unknown:
            raise ValueError(f"unknown analyses: {sorted(unknown)}")

    def echo(self) -> dict:
        return {
            "input": self.input,
            "output_dir": self.output_dir,
            "registry": [[sid, name] for sid, name in self.registry],
            "analyses": list(self.analyses),
            "attributes": list(self.attributes),
            "min_support": self.min_support,
            "min_confidence": self.min_confidence,
            "significance": self.significance,
            "chi_square_cell_mode": self.chi_mode,
            "yates_policy": self.yates,
            "normalization": self.normalization,
            "rule_ordering": self.rule_ordering,
            "top_n": self.top_n,
            "seed": self.seed,
            "relogin_page_ids": sorted(self.relogin_page_ids),
        }


def iter_sessions_from_export(path, registry: ServiceRegistry, age_thresholds=None):
    """Yield (group, session) pairs from a raw export, two-pass.

    Streams group-by-group when the export keeps sessions contiguous and
    ascending (the collector-export contract); otherwise falls back to
    buffered grouping.
    """
    from .model import DEFAULT_AGE_THRESHOLDS

    thresholds = age_thresholds or DEFAULT_AGE_THRESHOLDS
    prescan = prescan_export(path)
    if not prescan.grouped_ascending:
        log.warning("%s: sessions are interleaved; falling back to buffered grouping", path)
    groups = group_by_session(read_events(path, registry), sorted_input=prescan.grouped_ascending)
    for group in groups:
        yield group, aggregate_session(group, registry, prescan.login_counts, thresholds)


def sessions_from_any(path, registry: ServiceRegistry):
    """Yield enriched sessions from either dataset flavor.

    Accepts an enriched session file directly, or a raw collector export
    (which is enriched on the fly).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if header and header[0] == "Log_ID":
        yield from read_enriched_sessions(path, registry)
    else:
        for _group, session in iter_sessions_from_export(path, registry):
            yield session


# ---------------------------------------------------------------------------
# full report

def run_report(config: PipelineConfig) -> dict:
    """Run the requested analyses over one raw export; write everything.

    Returns the summary document (also written to summary.json). Output
    files land in config.output_dir: per-analysis CSV/JSON/DOT files,
    rendered figures under figures/, and optionally the enriched
    datasets.
    """
    config.validate()
    registry = config.registry
    out = config.output_dir
    os.makedirs(out, exist_ok=True)

    wants = set(config.analyses)
    bounce_acc = BounceAccumulator() if "bounce" in wants or "chisq" in wants else None
    contingency = (
        {name: ContingencyAccumulator(name) for name in config.attributes} if "chisq" in wants else {}
    )
    transactions = TransactionAccumulator(registry) if "mine" in wants else None
    exits_acc = ExitAccumulator(registry) if "exits" in wants else None
    transitions_acc = (
        TransitionAccumulator(registry, config.relogin_page_ids) if "transitions" in wants else None
    )

    session_count = 0
    event_count = 0
    ts_min = None
    ts_max = None
    sess_writer = page_writer = None
    sess_file = page_file = None
    sess_path = os.path.join(out, "va_sess1.csv")
    page_path = os.path.join(out, "va_page1.csv")
    if config.write_enriched:
        sess_file = open(sess_path, "w", encoding="utf-8", newline="")
        page_file = open(page_path, "w", encoding="utf-8", newline="")
        sess_writer = csv.writer(sess_file)
        sess_writer.writerow(session_header(registry))
        page_writer = csv.writer(page_file)
        page_writer.writerow(PAGEVIEW_COLUMNS)

    try:
        for group, session in iter_sessions_from_export(config.input, registry):
            session_count += 1
            event_count += session.page_count
            ts = session.log_date_time
            ts_min = ts if ts_min is None or ts < ts_min else ts_min
            ts_max = ts if ts_max is None or ts > ts_max else ts_max
            if bounce_acc is not None:
                bounce_acc.add(session)
            for acc in contingency.values():
                acc.add(session)
            if transactions is not None:
                transactions.add(session)
            if exits_acc is not None:
                exits_acc.add(group)
            if transitions_acc is not None:
                transitions_acc.add(group)
            if sess_writer is not None:
                sess_writer.writerow(session_row(session))
                for record in enrich_pageviews(group, session):
                    page_writer.writerow(pageview_row(record))
    finally:
        if sess_file is not None:
            sess_file.close()
            page_file.close()

    if config.write_enriched and ts_min is not None:
        write_manifest(manifest_for_file(sess_path, (ts_min, ts_max), session_count),
                       sess_path.replace(".csv", ".manifest.json"))
        write_manifest(manifest_for_file(page_path, (ts_min, ts_max), event_count),
                       page_path.replace(".csv", ".manifest.json"))

    results: dict = {
        "bounce": None,
        "chi_square": None,
        "exits": None,
        "transitions": None,
        "rules": None,
    }
    figure_paths: list[str] = []
    figures_dir = os.path.join(out, "figures")
    if config.figures:
        os.makedirs(figures_dir, exist_ok=True)

    if "bounce" in wants:
        stats = bounce_acc.result()
        results["bounce"] = stats.as_report()
        _write_json(os.path.join(out, "bounce.json"), stats.as_report())
        if config.figures and stats.total_sessions:
            from .figures import save_bounce_figure

            path = os.path.join(figures_dir, "bounce_shares.png")
            save_bounce_figure(stats, path)
            figure_paths.append(path)

    if "chisq" in wants:
        per_attribute = []
        for name in config.attributes:
            table = contingency[name].result(config.chi_mode)
            result = chi_square(table, yates=config.yates)
            per_attribute.append(result.as_report(name, table))
        results["chi_square"] = {
            "significance_threshold": config.significance,
            "cell_mode": config.chi_mode,
            "yates_policy": config.yates,
            "attributes": per_attribute,
        }
        _write_json(os.path.join(out, "chi_square.json"), results["chi_square"])

    if "exits" in wants:
        graph = exits_acc.result(config.normalization)
        results["exits"] = _exit_block(graph, registry)
        _write_graph_files(graph, out, "exit_graph")
        if config.figures:
            from .figures import save_graph_figure

            path = os.path.join(figures_dir, "exit_methods.png")
            save_graph_figure(graph, path, "Exit methods by service", registry)
            figure_paths.append(path)

    if "transitions" in wants:
        graph = transitions_acc.result(config.normalization)
        results["transitions"] = {
            "edge_semantics": "consecutive pageview pairs crossing services",
            "total_transitions": graph.edge_count_total(),
            "node_degrees": {
                node: dict(zip(("in", "out", "total"), node_degree(graph, node)))
                for node in sorted(graph.nodes)
            },
        }
        _write_graph_files(graph, out, "transition_graph")
        if config.figures:
            from .figures import save_graph_figure

            path = os.path.join(figures_dir, "service_transitions.png")
            save_graph_figure(graph, path, "Transitions between services", registry)
            figure_paths.append(path)

    if "mine" in wants:
        t = transactions.result()
        frequent = apriori(t, config.min_support)
        rules = generate_rules(frequent, config.min_confidence)
        best = top_rules(rules, config.top_n, config.rule_ordering)
        with open(os.path.join(out, "rules.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(rules_to_csv(best))
        results["rules"] = {
            "transactions": len(t),
            "frequent_itemsets": len(frequent),
            "rules_mined": len(rules),
            "rules_returned": len(best),
            "top": [
                {
                    "antecedent": list(r.antecedent),
                    "consequent": list(r.consequent),
                    "support": round(r.metrics.support, 6),
                    "confidence": round(r.metrics.confidence, 6),
                    "lift": round(r.metrics.lift, 6),
                }
                for r in best[:10]
            ],
        }

    summary = emit_summary(results, config, session_count, event_count, figure_paths)
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def _exit_block(graph, registry: ServiceRegistry) -> dict:
    total = graph.edge_count_total()
    secure = sum(e.count for e in graph.edges if e.target == EXIT_SECURE)
    per_service = {}
    for name in registry.names():
        outgoing = [e for e in graph.edges if e.source == name]
        n_out = sum(e.count for e in outgoing)
        if n_out:
            per_service[name] = {
                "sessions": n_out,
                "secure_rate": round(
                    sum(e.count for e in outgoing if e.target == EXIT_SECURE) / n_out, 4
                ),
            }
    return {
        "sessions": total,
        "global_secure_rate": round(secure / total, 4) if total else 0.0,
        "per_service": per_service,
    }


def _write_graph_files(graph, out_dir: str, stem: str) -> None:
    for fmt, extension in (("edge-list-csv", "csv"), ("dot", "dot"), ("json", "json")):
        with open(os.path.join(out_dir, f"{stem}.{extension}"), "w", encoding="utf-8") as fh:
            fh.write(export_graph(graph, fmt))


def _write_json(path: str, document: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")


def emit_summary(
    results: dict,
    config: PipelineConfig,
    session_count: int,
    event_count: int,
    figure_paths: list[str] | None = None,
) -> dict:
    """Assemble the single JSON summary document.

    Key order is fixed, contains no wall-clock values, and echoes the
    config plus the two numeric-agreement assumptions (percentage-mode
    cells, Yates policy), so identical inputs produce identical bytes.
    """
    return {
        "tool": {"name": "clickmine", "version": __version__},
        "config": config.echo(),
        "assumptions": {
            "chi_square_cell_mode": config.chi_mode,
            "yates_policy": config.yates,
            "significance_threshold": config.significance,
            "transition_edge_semantics": "consecutive pageview pairs crossing services",
        },
        "input": {"sessions": session_count, "events": event_count},
        "figures": [os.path.relpath(p, config.output_dir) for p in (figure_paths or [])],
        "bounce": results.get("bounce"),
        "chi_square": results.get("chi_square"),
        "exits": results.get("exits"),
        "transitions": results.get("transitions"),
        "rules": results.get("rules"),
    }
