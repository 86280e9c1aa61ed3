"""Apriori frequent-itemset mining and association-rule scoring.

Transactions are the per-session service sets, one-hot encoded against
the registry catalog; rows are stored as bit masks over the item catalog.
Supports are exact rationals (count over row count) so threshold checks
and closure properties never suffer float drift; they are converted to
floats only inside the final metric bundle.

Metric definitions, for antecedent A, consequent B, their supports
a = supp(A), b = supp(B) and joint j = supp(A u B):

    confidence = j / a
    lift       = confidence / b
    leverage   = j - a*b
    conviction = (1 - b) / (1 - confidence), +inf when confidence = 1
    zhang      = leverage / max(j*(1 - a), a*(b - j)), 0 when that is 0

Zhang's metric normalizes leverage by its maximum attainable magnitude,
landing in [-1, 1].
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence, Union

from .bounce import CATEGORICAL_ATTRIBUTES, UnknownAttributeError
from .model import ClickmineError, EnrichedSession, MetricBundle, ServiceRegistry

Support = Union[float, Fraction]


class ClosureError(ClickmineError):
    """A frequent-itemset list is missing a required subset."""


@dataclass(frozen=True)
class TransactionSet:
    """One-hot transactions: an item catalog plus one bit-mask row per session."""

    items: tuple[str, ...]
    row_masks: tuple[int, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("transaction catalog must not be empty")
        top = 1 << len(self.items)
        if any(mask >= top or mask < 0 for mask in self.row_masks):
            raise ValueError("row mask outside catalog range")

    def __len__(self) -> int:
        return len(self.row_masks)

    @classmethod
    def from_vectors(cls, items: Sequence[str], vectors: Iterable[Sequence[int]]) -> "TransactionSet":
        items = tuple(items)
        masks = []
        for vector in vectors:
            if len(vector) != len(items):
                raise ValueError("vector length must equal catalog size")
            masks.append(sum(1 << i for i, bit in enumerate(vector) if bit))
        return cls(items=items, row_masks=tuple(masks))

    @classmethod
    def from_itemsets(cls, items: Sequence[str], rows: Iterable[Iterable[str]]) -> "TransactionSet":
        items = tuple(items)
        index = {name: i for i, name in enumerate(items)}
        masks = tuple(sum(1 << index[name] for name in set(row)) for row in rows)
        return cls(items=items, row_masks=masks)

    def vectors(self) -> Iterable[tuple[int, ...]]:
        k = len(self.items)
        for mask in self.row_masks:
            yield tuple((mask >> i) & 1 for i in range(k))

    def labels_for(self, mask: int) -> tuple[str, ...]:
        return tuple(sorted(self.items[i] for i in range(len(self.items)) if mask >> i & 1))


@dataclass(frozen=True)
class FrequentItemset:
    items: tuple[str, ...]  # lexicographically sorted labels
    support: Fraction


@dataclass(frozen=True)
class AssociationRule:
    antecedent: tuple[str, ...]
    consequent: tuple[str, ...]
    metrics: MetricBundle


class TransactionAccumulator:
    """Streams enriched sessions into a TransactionSet.

    Items are the registry services (an item is present iff the session's
    s_ flag is set). Extra client attributes can be mined too: each
    observed value becomes an item labeled ``attribute:value``, appended
    to the catalog in first-seen order. Disabled by default so the rule
    set stays service-only.
    """

    def __init__(self, registry: ServiceRegistry, include_attributes: Sequence[str] = ()):
        for name in include_attributes:
            if name not in CATEGORICAL_ATTRIBUTES:
                raise UnknownAttributeError(name)
        self.registry = registry
        self.include_attributes = tuple(include_attributes)
        self._items: list[str] = list(registry.names())
        self._index: dict[str, int] = {name: i for i, name in enumerate(self._items)}
        self._masks: list[int] = []

    def add(self, session: EnrichedSession) -> None:
        mask = 0
        for i, flag in enumerate(session.service_visited):
            if flag:
                mask |= 1 << i
        for attribute in self.include_attributes:
            label = f"{attribute}:{getattr(session, CATEGORICAL_ATTRIBUTES[attribute])}"
            index = self._index.get(label)
            if index is None:
                index = self._index[label] = len(self._items)
                self._items.append(label)
            mask |= 1 << index
        self._masks.append(mask)

    def result(self) -> TransactionSet:
        return TransactionSet(items=tuple(self._items), row_masks=tuple(self._masks))


def encode_transactions(
    sessions: Iterable[EnrichedSession],
    registry: ServiceRegistry,
    include_attributes: Sequence[str] = (),
) -> TransactionSet:
    """One transaction per session; item set iff the service was visited."""
    acc = TransactionAccumulator(registry, include_attributes)
    for session in sessions:
        acc.add(session)
    return acc.result()


# ---------------------------------------------------------------------------
# Apriori

def apriori(transactions: TransactionSet, min_support: Support) -> list[FrequentItemset]:
    """All itemsets with support >= min_support, by level-wise search.

    Candidate generation is the classic join of (k-1)-itemsets sharing a
    prefix, pruned by downward closure; support counting runs over the
    distinct row masks (at most 2^catalog, tiny for a 10-service registry)
    weighted by multiplicity. Output is sorted by (size, items).
    """
    threshold = _as_fraction(min_support)
    if not 0 < threshold <= 1:
        raise ValueError("min_support must be in (0, 1]")
    n = len(transactions)
    if n == 0:
        return []
    mask_counts = Counter(transactions.row_masks)
    distinct = list(mask_counts.items())
    min_count = threshold * n  # Fraction: exact comparison against int counts

    def support_count(candidate_mask: int) -> int:
        return sum(count for mask, count in distinct if mask & candidate_mask == candidate_mask)

    frequent: dict[int, int] = {}  # itemset mask -> transaction count
    level = []
    for i in range(len(transactions.items)):
        mask = 1 << i
        count = support_count(mask)
        if count >= min_count:
            frequent[mask] = count
            level.append((i,))  # itemsets as sorted item-index tuples

    while level:
        level.sort()
        next_level = []
        for x in range(len(level)):
            base = level[x]
            for y in range(x + 1, len(level)):
                other = level[y]
                if base[:-1] != other[:-1]:
                    break  # sorted level: no further shared prefixes
                candidate = base + (other[-1],)
                if not _all_subsets_frequent(candidate, frequent):
                    continue
                mask = 0
                for i in candidate:
                    mask |= 1 << i
                count = support_count(mask)
                if count >= min_count:
                    frequent[mask] = count
                    next_level.append(candidate)
        level = next_level

    out = [
        FrequentItemset(items=transactions.labels_for(mask), support=Fraction(count, n))
        for mask, count in frequent.items()
    ]
    out.sort(key=lambda fs: (len(fs.items), fs.items))
    return out


def _all_subsets_frequent(candidate: tuple[int, ...], frequent: dict[int, int]) -> bool:
    full = 0
    for i in candidate:
        full |= 1 << i
    for i in candidate:
        if full ^ (1 << i) not in frequent:
            return False
    return True


def _as_fraction(value: Support) -> Fraction:
    # Fraction(float) is the exact binary value of the given threshold
    return value if isinstance(value, Fraction) else Fraction(value)


# ---------------------------------------------------------------------------
# rules

def rule_metrics(
    antecedent_support: Support,
    consequent_support: Support,
    joint_support: Support,
) -> MetricBundle:
    """Score a rule from its three supports.

    Accepts floats or exact Fractions; arithmetic happens in the input
    type and is converted to float only in the returned bundle, so
    Fraction inputs give exact confidence-1 / conviction-infinity
    detection.
    """
    a, b, j = antecedent_support, consequent_support, joint_support
    if not 0 < a <= 1:
        raise ValueError("antecedent support must be in (0, 1]")
    if not 0 < b <= 1:
        raise ValueError("consequent support must be in (0, 1]")
    if j < 0 or j > a or j > b:
        raise ValueError("joint support must be in [0, min(antecedent, consequent)]")
    confidence = j / a
    lift = confidence / b
    leverage = j - a * b
    if confidence == 1:
        conviction = math.inf
    else:
        conviction = (1 - b) / (1 - confidence)
    denominator = max(j * (1 - a), a * (b - j))
    zhang = leverage / denominator if denominator else 0.0
    return MetricBundle(
        antecedent_support=float(a),
        consequent_support=float(b),
        support=float(j),
        confidence=float(confidence),
        lift=float(lift),
        leverage=float(leverage),
        conviction=float(conviction),
        zhang=float(zhang),
    )


def generate_rules(
    frequent: list[FrequentItemset],
    min_confidence: Support,
) -> list[AssociationRule]:
    """All rules A -> B over the frequent itemsets with enough confidence.

    The input list must be downward closed (every apriori output is);
    a missing subset raises ClosureError. Rules are ordered by their
    source itemset then antecedent.
    """
    threshold = _as_fraction(min_confidence)
    if not 0 <= threshold <= 1:
        raise ValueError("min_confidence must be in [0, 1]")
    supports: dict[tuple[str, ...], Fraction] = {fs.items: fs.support for fs in frequent}
    rules = []
    for fs in frequent:
        if len(fs.items) < 2:
            continue
        joint = fs.support
        for size in range(1, len(fs.items)):
            for antecedent in combinations(fs.items, size):
                consequent = tuple(name for name in fs.items if name not in antecedent)
                a = supports.get(antecedent)
                b = supports.get(consequent)
                if a is None or b is None:
                    missing = antecedent if a is None else consequent
                    raise ClosureError(f"frequent itemsets not downward closed: missing {missing}")
                if joint / a >= threshold:
                    rules.append(
                        AssociationRule(
                            antecedent=antecedent,
                            consequent=consequent,
                            metrics=rule_metrics(a, b, joint),
                        )
                    )
    return rules


_ORDERINGS = ("support", "confidence", "lift", "zhang")


def top_rules(rules: list[AssociationRule], n: int, ordering: str = "lift") -> list[AssociationRule]:
    """Best n rules: stable descending sort, ties broken by antecedent."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if ordering not in _ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}; pick one of {_ORDERINGS}")
    ranked = sorted(rules, key=lambda r: (-getattr(r.metrics, ordering), r.antecedent))
    return ranked[:n]


# ---------------------------------------------------------------------------
# report output

RULE_COLUMNS = (
    "antecedents",
    "consequents",
    "antecedent_support",
    "consequent_support",
    "support",
    "confidence",
    "lift",
    "leverage",
    "conviction",
    "zhangs_metric",
)


def _fmt_metric(value: float) -> str:
    if math.isinf(value):
        return "infinite"
    return repr(round(value, 6))


def rules_to_csv(rules: list[AssociationRule]) -> str:
    """Rule report rows; conviction prints the literal "infinite" when unbounded."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RULE_COLUMNS)
    for rule in rules:
        m = rule.metrics
        writer.writerow((
            ", ".join(rule.antecedent),
            ", ".join(rule.consequent),
            _fmt_metric(m.antecedent_support),
            _fmt_metric(m.consequent_support),
            _fmt_metric(m.support),
            _fmt_metric(m.confidence),
            _fmt_metric(m.lift),
            _fmt_metric(m.leverage),
            _fmt_metric(m.conviction),
            _fmt_metric(m.zhang),
        ))
    return buf.getvalue()
