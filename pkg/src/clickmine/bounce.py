"""Single-page vs multi-page session statistics and chi-squared testing.

The chi-squared statistic is the usual sum of (observed - expected)^2 /
expected over a 2 x c contingency table of bounce class against one
client attribute, with expected frequencies from the row/column
marginals. Tables can hold raw counts or row percentages; the statistic
scales linearly in the cell mass (without Yates), which is what makes
percentage-mode results reproducible from published share tables.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

from .model import ClickmineError, EnrichedSession

log = logging.getLogger(__name__)


class UnknownAttributeError(ClickmineError):
    def __init__(self, name: str):
        super().__init__(f"unknown client attribute: {name!r}")


class DegenerateTableError(ClickmineError):
    """Fewer than two usable columns, or a zero marginal."""


# ---------------------------------------------------------------------------
# bounce segmentation

@dataclass(frozen=True)
class BounceStats:
    """Session/pageview split between single-page and multi-page sessions.

    Shares are percentages kept at full precision; round to 2 decimals
    for reporting.
    """

    total_sessions: int
    single_page_sessions: int
    multi_page_sessions: int
    single_page_pageviews: int
    multi_page_pageviews: int
    session_share_single: float
    session_share_multi: float
    pageview_share_single: float
    pageview_share_multi: float

    @classmethod
    def from_counts(
        cls,
        single_page_sessions: int,
        multi_page_sessions: int,
        multi_page_pageviews: int,
        single_page_pageviews: int | None = None,
    ) -> "BounceStats":
        if single_page_pageviews is None:
            # a single-page session is exactly one pageview
            single_page_pageviews = single_page_sessions
        total = single_page_sessions + multi_page_sessions
        total_pv = single_page_pageviews + multi_page_pageviews
        return cls(
            total_sessions=total,
            single_page_sessions=single_page_sessions,
            multi_page_sessions=multi_page_sessions,
            single_page_pageviews=single_page_pageviews,
            multi_page_pageviews=multi_page_pageviews,
            session_share_single=100.0 * single_page_sessions / total if total else 0.0,
            session_share_multi=100.0 * multi_page_sessions / total if total else 0.0,
            pageview_share_single=100.0 * single_page_pageviews / total_pv if total_pv else 0.0,
            pageview_share_multi=100.0 * multi_page_pageviews / total_pv if total_pv else 0.0,
        )

    def as_report(self) -> dict:
        return {
            "total_sessions": self.total_sessions,
            "single_page_sessions": self.single_page_sessions,
            "multi_page_sessions": self.multi_page_sessions,
            "single_page_pageviews": self.single_page_pageviews,
            "multi_page_pageviews": self.multi_page_pageviews,
            "session_share_single_pct": round(self.session_share_single, 2),
            "session_share_multi_pct": round(self.session_share_multi, 2),
            "pageview_share_single_pct": round(self.pageview_share_single, 2),
            "pageview_share_multi_pct": round(self.pageview_share_multi, 2),
        }


class BounceAccumulator:
    """Single-pass tally used to fan one session stream into many analyses."""

    def __init__(self):
        self.single_sessions = 0
        self.multi_sessions = 0
        self.multi_pageviews = 0

    def add(self, session: EnrichedSession) -> None:
        if session.page_count == 1:
            self.single_sessions += 1
        else:
            self.multi_sessions += 1
            self.multi_pageviews += session.page_count

    def result(self) -> BounceStats:
        return BounceStats.from_counts(self.single_sessions, self.multi_sessions, self.multi_pageviews)


def bounce_summary(sessions: Iterable[EnrichedSession]) -> BounceStats:
    """Segment a session stream by Page_Count == 1 and derive the shares."""
    acc = BounceAccumulator()
    for session in sessions:
        acc.add(session)
    return acc.result()


# ---------------------------------------------------------------------------
# contingency tables

#: client attribute name (schema spelling) -> EnrichedSession attribute
CATEGORICAL_ATTRIBUTES = {
    "Session_Login_Status": "session_login_status",
    "User_Type": "user_type",
    "Sex": "sex",
    "Age_Group": "age_group",
    "User_Language_TR": "user_language_tr",
    "User_Location": "user_location",
    "Browser_Type": "browser_type",
    "Referer_Type": "referer_type",
    "Landing_Srv_ID": "landing_srv_id",
    "Exit_Srv_ID": "exit_srv_id",
    "Exit_Type": "exit_type",
}


@dataclass(frozen=True)
class ContingencyTable:
    """2 x c cross-tabulation of bounce class against one client attribute."""

    attribute: str
    row_labels: tuple[str, str]  # ("single", "multi")
    column_labels: tuple
    cells: tuple[tuple[float, ...], tuple[float, ...]]
    mode: str  # "counts" | "row_percentages"

    def row_sums(self) -> tuple[float, float]:
        return (sum(self.cells[0]), sum(self.cells[1]))

    def to_row_percentages(self) -> "ContingencyTable":
        if self.mode == "row_percentages":
            return self
        sums = self.row_sums()
        if not all(sums):
            raise DegenerateTableError(f"{self.attribute}: a bounce class has no sessions")
        return ContingencyTable(
            attribute=self.attribute,
            row_labels=self.row_labels,
            column_labels=self.column_labels,
            cells=tuple(
                tuple(100.0 * v / s for v in row) for row, s in zip(self.cells, sums)
            ),
            mode="row_percentages",
        )

    def as_report(self) -> dict:
        return {
            "attribute": self.attribute,
            "mode": self.mode,
            "columns": list(self.column_labels),
            "single": list(self.cells[0]),
            "multi": list(self.cells[1]),
        }


class ContingencyAccumulator:
    def __init__(self, attribute: str):
        attr = CATEGORICAL_ATTRIBUTES.get(attribute)
        if attr is None:
            raise UnknownAttributeError(attribute)
        self.attribute = attribute
        self._attr = attr
        self._counts: dict = {}

    def add(self, session: EnrichedSession) -> None:
        category = getattr(session, self._attr)
        cell = self._counts.get(category)
        if cell is None:
            cell = self._counts[category] = [0, 0]
        cell[0 if session.page_count == 1 else 1] += 1

    def result(self, mode: str = "counts") -> ContingencyTable:
        labels = tuple(sorted(self._counts))
        table = ContingencyTable(
            attribute=self.attribute,
            row_labels=("single", "multi"),
            column_labels=labels,
            cells=(
                tuple(float(self._counts[c][0]) for c in labels),
                tuple(float(self._counts[c][1]) for c in labels),
            ),
            mode="counts",
        )
        return table.to_row_percentages() if mode == "row_percentages" else table


def contingency_table(
    sessions: Iterable[EnrichedSession],
    attribute: str,
    mode: str = "counts",
) -> ContingencyTable:
    """Cross-tabulate bounce class against a categorical client attribute."""
    if mode not in ("counts", "row_percentages"):
        raise ValueError(f"unknown table mode: {mode!r}")
    acc = ContingencyAccumulator(attribute)
    for session in sessions:
        acc.add(session)
    return acc.result(mode)


# ---------------------------------------------------------------------------
# chi-squared test

@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    yates_applied: bool
    per_cell_contributions: tuple[tuple[float, ...], tuple[float, ...]]
    columns_used: tuple
    columns_dropped: tuple

    def as_report(self, attribute: str, table: ContingencyTable) -> dict:
        return {
            "attribute": attribute,
            "statistic": round(self.statistic, 4),
            "dof": self.dof,
            "p_value": round(self.p_value, 4),
            "yates_applied": self.yates_applied,
            "significant_at_0.05": self.p_value < 0.05,
            "table": table.as_report(),
        }


def chi_square(table: ContingencyTable, yates: str = "auto") -> ChiSquareResult:
    """Chi-squared independence test on a 2 x c contingency table.

    All-zero columns are dropped (with a warning) before the degrees of
    freedom are computed as (r-1)(c-1). ``yates`` is "auto" (continuity
    correction exactly when dof == 1), "on" or "off"; the correction
    shrinks each |O - E| by 0.5, clamping at zero.
    """
    if yates not in ("auto", "on", "off"):
        raise ValueError(f"unknown yates policy: {yates!r}")
    keep = [j for j in range(len(table.column_labels)) if any(row[j] for row in table.cells)]
    dropped = tuple(c for j, c in enumerate(table.column_labels) if j not in keep)
    if dropped:
        log.warning("%s: dropping all-zero columns %s", table.attribute, dropped)
    if len(keep) < 2:
        raise DegenerateTableError(
            f"{table.attribute}: need at least 2 non-zero columns, have {len(keep)}"
        )
    cells = [[row[j] for j in keep] for row in table.cells]
    row_totals = [sum(row) for row in cells]
    col_totals = [sum(row[j] for row in cells) for j in range(len(keep))]
    grand = sum(row_totals)
    if not all(row_totals):
        raise DegenerateTableError(f"{table.attribute}: a row marginal is zero")

    dof = (len(cells) - 1) * (len(keep) - 1)
    apply_yates = yates == "on" or (yates == "auto" and dof == 1)

    contributions = []
    statistic = 0.0
    for i, row in enumerate(cells):
        contrib_row = []
        for j, observed in enumerate(row):
            expected = row_totals[i] * col_totals[j] / grand
            deviation = abs(observed - expected)
            if apply_yates:
                deviation = max(deviation - 0.5, 0.0)
            term = deviation * deviation / expected
            contrib_row.append(term)
            statistic += term
        contributions.append(tuple(contrib_row))

    return ChiSquareResult(
        statistic=statistic,
        dof=dof,
        p_value=chi_square_p_value(statistic, dof),
        yates_applied=apply_yates,
        per_cell_contributions=tuple(contributions),
        columns_used=tuple(table.column_labels[j] for j in keep),
        columns_dropped=dropped,
    )


# ---------------------------------------------------------------------------
# survival function via the regularized incomplete gamma function

def _lower_gamma_series(a: float, x: float) -> float:
    # series expansion of P(a, x); converges fast for x < a + 1
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(500):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    # modified Lentz continued fraction for Q(a, x); use for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a), the normalized upper tail."""
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return min(max(1.0 - _lower_gamma_series(a, x), 0.0), 1.0)
    return min(max(_upper_gamma_cf(a, x), 0.0), 1.0)


def chi_square_p_value(statistic: float, dof: int) -> float:
    """Upper-tail probability of a chi-squared value: Q(dof/2, statistic/2)."""
    if statistic < 0:
        raise ValueError("statistic must be non-negative")
    if dof < 1:
        raise ValueError("dof must be a positive integer")
    return regularized_upper_gamma(dof / 2.0, statistic / 2.0)
