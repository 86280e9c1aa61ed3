"""Session grouping and enrichment.

Sessionization is purely a group-by on the collector-assigned session id;
there are no timeout heuristics and no repair of dirty input. Enrichment
runs in two passes over the raw events: a light counting pass for
per-user login totals, then the aggregation pass proper.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .model import (
    DEFAULT_AGE_THRESHOLDS,
    ClickmineError,
    EnrichedPageview,
    EnrichedSession,
    ExitMethod,
    PageviewEvent,
    ServiceRegistry,
    age_group,
)


class EnrichmentError(ClickmineError):
    """A session-level inconsistency that cannot be aggregated."""


@dataclass(frozen=True)
class SessionGroup:
    """All pageviews of one session, ordered by (timestamp, log_id)."""

    session_id: int
    events: tuple[PageviewEvent, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError("session group must not be empty")
        sid = self.session_id
        prev_ts = None
        for e in self.events:
            if e.session_id != sid:
                raise ValueError(f"event {e.log_id} does not belong to session {sid}")
            if prev_ts is not None and e.timestamp < prev_ts:
                raise ValueError(f"events of session {sid} are not time-ordered")
            prev_ts = e.timestamp


def _sorted_group(session_id: int, events: list[PageviewEvent]) -> SessionGroup:
    events.sort(key=lambda e: (e.timestamp, e.log_id))
    return SessionGroup(session_id=session_id, events=tuple(events))


def group_by_session(
    events: Iterable[PageviewEvent],
    sorted_input: bool = False,
) -> Iterator[SessionGroup]:
    """Group an event stream into sessions, ascending by session id.

    With the default ``sorted_input=False`` the whole stream is buffered,
    so arbitrarily interleaved input is tolerated. Pass ``sorted_input=True``
    for conforming collector exports (one contiguous run per session,
    ascending ids): groups are then emitted as each run ends and memory
    stays bounded by the largest single session. A run-order violation in
    that mode raises ValueError instead of silently mis-grouping.
    """
    if sorted_input:
        yield from _group_sorted(events)
        return
    buckets: dict[int, list[PageviewEvent]] = {}
    for e in events:
        bucket = buckets.get(e.session_id)
        if bucket is None:
            buckets[e.session_id] = [e]
        else:
            bucket.append(e)
    for sid in sorted(buckets):
        yield _sorted_group(sid, buckets[sid])


def _group_sorted(events: Iterable[PageviewEvent]) -> Iterator[SessionGroup]:
    current_id = None
    current: list[PageviewEvent] = []
    for e in events:
        sid = e.session_id
        if sid == current_id:
            current.append(e)
            continue
        if current_id is not None:
            if sid < current_id:
                raise ValueError(
                    f"session {sid} appears after session {current_id}; "
                    "input is not grouped ascending (use sorted_input=False)"
                )
            yield _sorted_group(current_id, current)
        current_id = sid
        current = [e]
    if current_id is not None:
        yield _sorted_group(current_id, current)


def determine_exit(group: SessionGroup) -> tuple[int, ExitMethod]:
    """Exit service and method of a session: read off its last pageview."""
    last = group.events[-1]
    return last.service_id, ExitMethod(int(last.logout_kind))


def compute_user_login_counts(events: Iterable[PageviewEvent]) -> dict[int, int]:
    """Count logged-in sessions per user over the whole dataset period.

    A session is credited to a user once, no matter how many authenticated
    pageviews it contains.
    """
    counts: dict[int, int] = {}
    credited: set[int] = set()
    for e in events:
        if e.login_state == 1 and e.session_id not in credited:
            credited.add(e.session_id)
            counts[e.user_id] = counts.get(e.user_id, 0) + 1
    return counts


@dataclass
class ExportPrescan:
    """Result of the light counting pass over a collector export."""

    login_counts: dict[int, int]
    grouped_ascending: bool  # one contiguous run per session, ascending ids
    event_count: int


def prescan_export(path) -> ExportPrescan:
    """Light first pass over a collector export.

    Collects per-user login counts (one credit per logged-in session) and
    checks whether the file keeps each session in one contiguous run with
    ascending ids, which lets the enrichment pass stream group-by-group.
    Only three columns are parsed; full validation happens in the
    enrichment pass over the same file.
    """
    counts: dict[int, int] = {}
    credited: set[int] = set()
    grouped = True
    current_sid = 0
    events = 0
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ExportPrescan(counts, True, 0)
        i_sess = header.index("session_id")
        i_user = header.index("user_id")
        i_login = header.index("login_state")
        for row in reader:
            events += 1
            sid = int(row[i_sess])
            if sid != current_sid:
                if sid < current_sid:
                    grouped = False
                current_sid = sid
            if row[i_login] == "1":
                if sid not in credited:
                    credited.add(sid)
                    uid = int(row[i_user])
                    counts[uid] = counts.get(uid, 0) + 1
    return ExportPrescan(counts, grouped, events)


def aggregate_session(
    group: SessionGroup,
    registry: ServiceRegistry,
    user_login_counts: Mapping[int, int],
    age_thresholds: tuple[int, int, int] = DEFAULT_AGE_THRESHOLDS,
) -> EnrichedSession:
    """Aggregate one session group into an enriched session row.

    Client attributes are taken from the first pageview (the collector
    stamps them per session). Averages are kept at full precision; they
    are rounded only when the row is serialized.
    """
    events = group.events
    first = events[0]
    n = len(registry)
    index_of = registry.index_of

    pages = [0] * n
    visited: list[int] = []
    visitor_pv = 0
    total_duration = 0
    total_load = 0.0
    user_id = 0
    for e in events:
        idx = index_of(e.service_id)
        if pages[idx] == 0:
            visited.append(e.service_id)
        pages[idx] += 1
        total_duration += e.page_duration
        total_load += e.page_load
        if e.login_state == 0:
            visitor_pv += 1
        elif user_id == 0:
            user_id = e.user_id

    page_count = len(events)
    user_pv = page_count - visitor_pv
    login_status = 1 if user_pv else 0
    exit_service, exit_method = determine_exit(group)
    if login_status == 0 and exit_method is not ExitMethod.DIRECT:
        raise EnrichmentError(
            f"session {group.session_id}: visitor session cannot end with a logout event"
        )
    service_count = len(visited)

    return EnrichedSession(
        log_id=first.log_id,
        session_id=group.session_id,
        log_date_time=first.timestamp - first.timestamp % 60,
        user_id=user_id,
        session_login_status=login_status,
        logins_during_period=user_login_counts.get(user_id, 0) if login_status else 0,
        user_type=first.user_type,
        sex=first.sex,
        age=first.age,
        age_group=age_group(first.age, age_thresholds),
        user_language_tr=first.language_tr,
        user_location=first.location,
        browser_type=first.browser_type,
        referer_type=first.referer_type,
        landing_srv_id=first.service_id,
        exit_srv_id=exit_service,
        exit_type=int(exit_method),
        total_session_duration=total_duration,
        avg_page_duration=total_duration / page_count,
        total_page_load=total_load,
        avg_page_load=total_load / page_count,
        page_count=page_count,
        visitor_pageview=visitor_pv,
        user_pageview=user_pv,
        service_count=service_count,
        page_per_service=page_count / service_count,
        visited_service_ids=tuple(visited),
        service_visited=tuple(1 if p else 0 for p in pages),
        service_pages=tuple(pages),
        service_share=tuple(p / page_count for p in pages),
    )


def enrich_pageviews(group: SessionGroup, session: EnrichedSession) -> list[EnrichedPageview]:
    """One enriched pageview per event, inheriting session demographics."""
    return [
        EnrichedPageview(
            log_id=e.log_id,
            session_id=e.session_id,
            timestamp=e.timestamp,
            service_id=e.service_id,
            page_id=e.page_id,
            page_duration=e.page_duration,
            page_load=e.page_load,
            login_state=int(e.login_state),
            user_type=session.user_type,
            sex=session.sex,
            age_group=session.age_group,
            browser_type=session.browser_type,
            user_location=session.user_location,
        )
        for e in group.events
    ]


def enrich_groups(
    groups: Iterable[SessionGroup],
    registry: ServiceRegistry,
    user_login_counts: Mapping[int, int],
    age_thresholds: tuple[int, int, int] = DEFAULT_AGE_THRESHOLDS,
) -> Iterator[tuple[SessionGroup, EnrichedSession]]:
    """Run the aggregation pass, pairing each group with its session row."""
    for group in groups:
        yield group, aggregate_session(group, registry, user_login_counts, age_thresholds)
