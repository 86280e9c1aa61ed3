"""The clickmine command line.

Subcommands: synth, enrich, bounce, chisq, exits, transitions, mine,
report, verify. Logs go to stderr; data goes only to the declared output
paths. Exit status 0 on success, 1 on data errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

from . import __version__
from .bounce import bounce_summary, chi_square, contingency_table
from .dataio import (
    manifest_for_file,
    read_events,
    write_enriched_pageviews,
    write_enriched_sessions,
    write_events,
    write_manifest,
)
from .enrich import group_by_session
from .graphs import (
    ExitAccumulator,
    build_transition_graph,
    export_graph,
)
from .model import ClickmineError, DEFAULT_REGISTRY, ServiceRegistry
from .report import (
    ALL_ANALYSES,
    DEFAULT_ATTRIBUTES,
    PipelineConfig,
    iter_sessions_from_export,
    run_report,
    sessions_from_any,
)
from .rules import encode_transactions, apriori, generate_rules, rules_to_csv, top_rules
from .synth import ConfigError, default_config, generate, load_config, save_config

log = logging.getLogger("clickmine")

_GRAPH_FORMATS = {"csv": "edge-list-csv", "dot": "dot", "json": "json"}


def _fraction_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1]: {text}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text}")
    return value


def _csv_ints(text: str) -> frozenset[int]:
    try:
        return frozenset(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickmine",
        description="Clickstream sessionization, enrichment and usage-mining toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"clickmine {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, input_required=True):
        p.add_argument("--input", required=input_required, help="input dataset path")
        p.add_argument("--output-dir", default=".", help="directory for output files")
        p.add_argument("--config", help="pipeline config file (JSON)")

    p_synth = sub.add_parser("synth", help="generate a synthetic collector export")
    p_synth.add_argument("--sessions", type=_nonnegative_int, default=None, help="number of sessions")
    p_synth.add_argument("--seed", type=int, default=None, help="generator seed")
    p_synth.add_argument("--config", help="generator config file (JSON)")
    p_synth.add_argument("--output-dir", default=".", help="directory for events.csv")

    p_enrich = sub.add_parser("enrich", help="build enriched session/pageview datasets")
    add_common(p_enrich)

    p_bounce = sub.add_parser("bounce", help="single- vs multi-page session summary")
    add_common(p_bounce)

    p_chisq = sub.add_parser("chisq", help="client-attribute chi-squared tests")
    add_common(p_chisq)
    p_chisq.add_argument("--percentage-mode", action="store_true",
                         help="test row-percentage cells instead of raw counts")
    p_chisq.add_argument("--yates", choices=("auto", "on", "off"), default="auto")
    p_chisq.add_argument("--attributes", default=",".join(DEFAULT_ATTRIBUTES),
                         help="comma-separated client attributes")

    p_exits = sub.add_parser("exits", help="exit-method graph")
    add_common(p_exits)
    p_exits.add_argument("--normalize", choices=("source", "global"), default="source")
    p_exits.add_argument("--format", choices=sorted(_GRAPH_FORMATS), default="csv")

    p_trans = sub.add_parser("transitions", help="service transition graph")
    add_common(p_trans)
    p_trans.add_argument("--normalize", choices=("source", "global"), default="source")
    p_trans.add_argument("--format", choices=sorted(_GRAPH_FORMATS), default="csv")
    p_trans.add_argument("--relogin-pages", type=_csv_ints, default=frozenset(),
                         help="page ids whose revisit counts as an intra-service transition")

    p_mine = sub.add_parser("mine", help="frequent itemsets and association rules")
    add_common(p_mine)
    p_mine.add_argument("--min-support", type=_fraction_arg, default=0.25)
    p_mine.add_argument("--min-confidence", type=_fraction_arg, default=0.98)
    p_mine.add_argument("--top", type=_nonnegative_int, default=30)
    p_mine.add_argument("--order", choices=("support", "confidence", "lift", "zhang"), default="lift")
    p_mine.add_argument("--include-attributes", default="",
                        help="client attributes to mine alongside services")

    p_report = sub.add_parser("report", help="run every analysis and emit a summary")
    add_common(p_report)
    p_report.add_argument("--min-support", type=_fraction_arg, default=0.25)
    p_report.add_argument("--min-confidence", type=_fraction_arg, default=0.98)
    p_report.add_argument("--percentage-mode", action="store_true")
    p_report.add_argument("--yates", choices=("auto", "on", "off"), default="auto")
    p_report.add_argument("--normalize", choices=("source", "global"), default="source")
    p_report.add_argument("--top", type=_nonnegative_int, default=30)
    p_report.add_argument("--write-enriched", action="store_true",
                          help="also write va_sess1.csv / va_page1.csv")
    p_report.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_report.add_argument("--seed", type=int, default=1)

    sub.add_parser("verify", help="run the bundled reference-data checks")

    return parser


# ---------------------------------------------------------------------------
# subcommand implementations

def _registry_from_config(path: str | None) -> ServiceRegistry:
    if not path:
        return DEFAULT_REGISTRY
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "registry" in data:
        return ServiceRegistry(entries=tuple((int(s), n) for s, n in data["registry"]))
    return DEFAULT_REGISTRY


def cmd_synth(args) -> int:
    if args.config:
        config = load_config(args.config)
        if args.sessions is not None:
            config = dataclasses.replace(config, session_count=args.sessions)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    else:
        config = default_config(
            session_count=args.sessions if args.sessions is not None else 10_000,
            seed=args.seed if args.seed is not None else 1,
        )
    config.validate()
    os.makedirs(args.output_dir, exist_ok=True)
    events_path = os.path.join(args.output_dir, "events.csv")
    count = write_events(generate(config), events_path)
    write_manifest(
        manifest_for_file(events_path, config.period, count),
        os.path.join(args.output_dir, "events.manifest.json"),
    )
    save_config(config, os.path.join(args.output_dir, "generator_config.json"))
    log.info("wrote %d events for %d sessions to %s", count, config.session_count, events_path)
    return 0


def cmd_enrich(args) -> int:
    registry = _registry_from_config(args.config)
    out = args.output_dir
    os.makedirs(out, exist_ok=True)
    sess_path = os.path.join(out, "va_sess1.csv")
    page_path = os.path.join(out, "va_page1.csv")

    from .dataio import PAGEVIEW_COLUMNS, pageview_row, session_header, session_row
    from .enrich import enrich_pageviews

    sessions = events = 0
    ts_min = ts_max = None
    with open(sess_path, "w", encoding="utf-8", newline="") as sf, \
         open(page_path, "w", encoding="utf-8", newline="") as pf:
        sess_writer = csv.writer(sf)
        sess_writer.writerow(session_header(registry))
        page_writer = csv.writer(pf)
        page_writer.writerow(PAGEVIEW_COLUMNS)
        for group, session in iter_sessions_from_export(args.input, registry):
            sess_writer.writerow(session_row(session))
            for record in enrich_pageviews(group, session):
                page_writer.writerow(pageview_row(record))
            sessions += 1
            events += session.page_count
            ts = session.log_date_time
            ts_min = ts if ts_min is None or ts < ts_min else ts_min
            ts_max = ts if ts_max is None or ts > ts_max else ts_max

    if ts_min is not None:
        write_manifest(manifest_for_file(sess_path, (ts_min, ts_max), sessions),
                       sess_path.replace(".csv", ".manifest.json"))
        write_manifest(manifest_for_file(page_path, (ts_min, ts_max), events),
                       page_path.replace(".csv", ".manifest.json"))
    log.info("enriched %d sessions (%d pageviews) from %s", sessions, events, args.input)
    return 0


def cmd_bounce(args) -> int:
    registry = _registry_from_config(args.config)
    stats = bounce_summary(sessions_from_any(args.input, registry))
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "bounce.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.as_report(), fh, indent=2)
        fh.write("\n")
    log.info("wrote %s", path)
    return 0


def cmd_chisq(args) -> int:
    registry = _registry_from_config(args.config)
    mode = "row_percentages" if args.percentage_mode else "counts"
    attributes = tuple(a.strip() for a in args.attributes.split(",") if a.strip())
    sessions = list(sessions_from_any(args.input, registry))
    report = {
        "significance_threshold": 0.05,
        "cell_mode": mode,
        "yates_policy": args.yates,
        "attributes": [
            chi_square(table, yates=args.yates).as_report(name, table)
            for name, table in (
                (name, contingency_table(sessions, name, mode)) for name in attributes
            )
        ],
    }
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "chi_square.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    log.info("wrote %s", path)
    return 0


def _is_enriched_sessions_file(path: str) -> bool:
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    return bool(header) and header[0] == "Log_ID"


def cmd_exits(args) -> int:
    registry = _registry_from_config(args.config)
    acc = ExitAccumulator(registry)
    if _is_enriched_sessions_file(args.input):
        from .dataio import read_enriched_sessions

        for session in read_enriched_sessions(args.input, registry):
            acc.add_exit(session.exit_srv_id, secure=session.exit_type != 0)
    else:
        for group, _session in iter_sessions_from_export(args.input, registry):
            acc.add(group)
    graph = acc.result(args.normalize)
    return _write_graph(graph, args, "exit_graph")


def cmd_transitions(args) -> int:
    registry = _registry_from_config(args.config)
    if _is_enriched_sessions_file(args.input):
        raise ClickmineError(
            "transitions need raw pageview order; pass a collector export, not an enriched session file"
        )
    groups = (group for group, _ in iter_sessions_from_export(args.input, registry))
    graph = build_transition_graph(groups, registry, args.relogin_pages, args.normalize)
    return _write_graph(graph, args, "transition_graph")


def _write_graph(graph, args, stem: str) -> int:
    os.makedirs(args.output_dir, exist_ok=True)
    extension = args.format
    path = os.path.join(args.output_dir, f"{stem}.{extension}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_graph(graph, _GRAPH_FORMATS[args.format]))
    log.info("wrote %s", path)
    return 0


def cmd_mine(args) -> int:
    registry = _registry_from_config(args.config)
    include = tuple(a.strip() for a in args.include_attributes.split(",") if a.strip())
    transactions = encode_transactions(sessions_from_any(args.input, registry), registry, include)
    frequent = apriori(transactions, args.min_support)
    rules = generate_rules(frequent, args.min_confidence)
    best = top_rules(rules, args.top, args.order)
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "rules.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rules_to_csv(best))
    log.info(
        "%d transactions, %d frequent itemsets, %d rules (top %d by %s) -> %s",
        len(transactions), len(frequent), len(rules), len(best), args.order, path,
    )
    return 0


def cmd_report(args) -> int:
    registry = _registry_from_config(args.config)
    config = PipelineConfig(
        input=args.input,
        output_dir=args.output_dir,
        registry=registry,
        analyses=ALL_ANALYSES,
        min_support=args.min_support,
        min_confidence=args.min_confidence,
        chi_mode="row_percentages" if args.percentage_mode else "counts",
        yates=args.yates,
        normalization=args.normalize,
        top_n=args.top,
        seed=args.seed,
        write_enriched=args.write_enriched,
        figures=not args.no_figures,
    )
    summary = run_report(config)
    log.info(
        "report complete: %d sessions, %d events -> %s",
        summary["input"]["sessions"], summary["input"]["events"],
        os.path.join(args.output_dir, "summary.json"),
    )
    return 0


def cmd_verify(_args) -> int:
    from .reference import run_verification

    checks = run_verification()
    failed = 0
    for check in checks:
        if check.passed:
            print(f"PASS {check.name}")
        else:
            failed += 1
            print(f"FAIL {check.name} ({check.detail})")
    print(f"{len(checks) - failed}/{len(checks)} reference checks passed")
    return 1 if failed else 0


_COMMANDS = {
    "synth": cmd_synth,
    "enrich": cmd_enrich,
    "bounce": cmd_bounce,
    "chisq": cmd_chisq,
    "exits": cmd_exits,
    "transitions": cmd_transitions,
    "mine": cmd_mine,
    "report": cmd_report,
    "verify": cmd_verify,
}


def run_command(argv: list[str]) -> int:
    """Parse and run one invocation; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ClickmineError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
