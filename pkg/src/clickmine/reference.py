"""Bundled reference datasets and the self-contained verification suite.

The package ships small reference fixtures: a worked sample session with
its expected enriched row, the published bounce counts and attribute
share tables with their chi-squared results, and a 30-rule reference
rule set with full metric columns. `run_verification` re-derives all of
them through the pipeline code and reports one pass/fail line per check,
entirely offline.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources

from .bounce import BounceStats, ContingencyTable, chi_square
from .dataio import read_events, session_header, session_row
from .enrich import aggregate_session, compute_user_login_counts, group_by_session
from .model import DEFAULT_REGISTRY, ServiceRegistry


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _data_text(name: str) -> str:
    return resources.files("clickmine.data").joinpath(name).read_text(encoding="utf-8")


def load_bounce_reference() -> dict:
    return json.loads(_data_text("bounce_reference.json"))


def load_attribute_tables() -> list[dict]:
    return json.loads(_data_text("attribute_share_tables.json"))["attributes"]


def load_reference_rules() -> list[dict]:
    """The reference rule rows, with conviction parsed to +inf where unbounded."""
    reader = csv.DictReader(_data_text("reference_rules.csv").splitlines())
    rows = []
    for raw in reader:
        rows.append({
            "antecedents": raw["antecedents"],
            "consequents": raw["consequents"],
            "antecedent_support": float(raw["antecedent_support"]),
            "consequent_support": float(raw["consequent_support"]),
            "support": float(raw["support"]),
            "confidence": float(raw["confidence"]),
            "lift": float(raw["lift"]),
            "leverage": float(raw["leverage"]),
            "conviction": math.inf if raw["conviction"] == "infinite" else float(raw["conviction"]),
            "zhang": float(raw["zhangs_metric"]),
        })
    return rows


def load_sample_expected() -> dict:
    return json.loads(_data_text("sample_session_expected.json"))


def sample_session_row(registry: ServiceRegistry = DEFAULT_REGISTRY) -> dict[str, str]:
    """Run the bundled sample export through enrichment; return the target row.

    The row comes back as serialized column -> string, so expectations
    can assert the exact 2-decimal output formatting.
    """
    expected = load_sample_expected()
    with resources.files("clickmine.data").joinpath("sample_session_events.csv").open(
        "r", encoding="utf-8"
    ) as fh:
        events = list(read_events(fh, registry))
    login_counts = compute_user_login_counts(events)
    for group in group_by_session(events):
        if group.session_id == expected["session_id"]:
            session = aggregate_session(group, registry, login_counts)
            header = session_header(registry)
            return dict(zip(header, (str(v) for v in session_row(session))))
    raise ValueError("sample session not present in the bundled export")


# ---------------------------------------------------------------------------
# verification checks

def check_sample_session() -> list[Check]:
    expected = load_sample_expected()["expected"]
    row = sample_session_row()
    checks = []
    for column, want in expected.items():
        got = row[column]
        checks.append(Check(
            name=f"sample-session {column} = {want}",
            passed=got == str(want),
            detail=f"got {got}",
        ))
    return checks


def check_bounce_shares() -> list[Check]:
    ref = load_bounce_reference()
    stats = BounceStats.from_counts(
        ref["single_page_sessions"], ref["multi_page_sessions"], ref["multi_page_pageviews"]
    )
    report = stats.as_report()
    return [
        Check(
            name=f"bounce {key} = {want}",
            passed=report[key] == want,
            detail=f"got {report[key]}",
        )
        for key, want in ref["expected"].items()
    ]


def check_attribute_chi_square() -> list[Check]:
    checks = []
    for entry in load_attribute_tables():
        table = ContingencyTable(
            attribute=entry["attribute"],
            row_labels=("single", "multi"),
            column_labels=tuple(entry["categories"]),
            cells=(tuple(entry["single"]), tuple(entry["multi"])),
            mode="row_percentages",
        )
        result = chi_square(table, yates="auto")
        want = entry["expected"]
        checks.append(Check(
            name=f"chi-square {entry['attribute']} statistic {want['statistic']} ±{want['statistic_tol']}",
            passed=abs(result.statistic - want["statistic"]) <= want["statistic_tol"],
            detail=f"got {result.statistic:.4f}",
        ))
        checks.append(Check(
            name=f"chi-square {entry['attribute']} dof = {want['dof']}",
            passed=result.dof == want["dof"],
            detail=f"got {result.dof}",
        ))
        checks.append(Check(
            name=f"chi-square {entry['attribute']} p-value {want['p_value']} ±{want['p_tol']}",
            passed=abs(result.p_value - want["p_value"]) <= want["p_tol"],
            detail=f"got {result.p_value:.4f}",
        ))
    return checks


def recompute_reference_metrics(row: dict) -> dict:
    """Feed the published support and confidence columns into the formulas."""
    a = row["antecedent_support"]
    b = row["consequent_support"]
    j = row["support"]
    confidence = row["confidence"]
    leverage = j - a * b
    denominator = max(j * (1.0 - a), a * (b - j))
    return {
        "lift": confidence / b,
        "leverage": leverage,
        "conviction": math.inf if confidence == 1.0 else (1.0 - b) / (1.0 - confidence),
        "zhang": leverage / denominator if denominator else 0.0,
    }


def check_rule_metrics() -> list[Check]:
    checks = []
    for row in load_reference_rules():
        rule = f"{row['antecedents']} -> {row['consequents']}"
        got = recompute_reference_metrics(row)
        checks.append(Check(
            name=f"rule {rule} lift {row['lift']} ±0.01",
            passed=abs(got["lift"] - row["lift"]) <= 0.01,
            detail=f"got {got['lift']:.4f}",
        ))
        checks.append(Check(
            name=f"rule {rule} leverage {row['leverage']} ±0.002",
            passed=abs(got["leverage"] - row["leverage"]) <= 0.002,
            detail=f"got {got['leverage']:.4f}",
        ))
        checks.append(Check(
            name=f"rule {rule} zhang {row['zhang']} ±0.01",
            passed=abs(got["zhang"] - row["zhang"]) <= 0.01,
            detail=f"got {got['zhang']:.4f}",
        ))
        if math.isinf(row["conviction"]):
            ok = math.isinf(got["conviction"]) and row["confidence"] == 1.0
            detail = f"got {got['conviction']}"
        elif row["confidence"] <= 0.995:
            ok = abs(got["conviction"] - row["conviction"]) / row["conviction"] <= 0.10
            detail = f"got {got['conviction']:.3f}"
        else:
            ok = True
            detail = "skipped: published confidence above 0.995 and not 1"
        checks.append(Check(
            name=f"rule {rule} conviction {row['conviction']}",
            passed=ok,
            detail=detail,
        ))
    return checks


def run_verification() -> list[Check]:
    """Every reference check, in a stable order."""
    checks: list[Check] = []
    checks.extend(check_sample_session())
    checks.extend(check_bounce_shares())
    checks.extend(check_attribute_chi_square())
    checks.extend(check_rule_metrics())
    return checks
