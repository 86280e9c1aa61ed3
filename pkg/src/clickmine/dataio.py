"""File formats: collector event exports in, enriched datasets out.

All files are UTF-8 CSV with a mandatory header, comma delimiter and dot
decimal separator. Timestamps are day.month.year: raw events carry full
second resolution (``22.11.2022 13:00:05``), enriched session rows are
minute-resolution (``22.11.2022 13:00``), matching the published schema.

Readers and writers are streaming: memory use is bounded by a constant
number of records regardless of file size.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator, Union

from .model import (
    ClickmineError,
    EnrichedPageview,
    EnrichedSession,
    LoginState,
    LogoutKind,
    PageviewEvent,
    ServiceRegistry,
    validate_event,
)

log = logging.getLogger(__name__)

PathOrFile = Union[str, os.PathLike, IO[str]]


class ParseError(ClickmineError):
    """A malformed row, reported with its line number and column."""

    def __init__(self, line_no: int, column: str, reason: str):
        self.line_no = line_no
        self.column = column
        super().__init__(f"line {line_no}, column {column!r}: {reason}")


# ---------------------------------------------------------------------------
# timestamps

_TS_SECONDS = "%d.%m.%Y %H:%M:%S"
_TS_MINUTES = "%d.%m.%Y %H:%M"


def format_timestamp(epoch: int, seconds: bool = True) -> str:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return dt.strftime(_TS_SECONDS if seconds else _TS_MINUTES)


def parse_timestamp(text: str) -> int:
    """Parse either timestamp flavor back to epoch seconds (UTC)."""
    fmt = _TS_SECONDS if text.count(":") == 2 else _TS_MINUTES
    dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _fmt_2dp(value: float) -> str:
    # repr(round(x, 2)) prints 48.67 / 0.19 / 7.5 without trailing zeros
    return repr(round(value, 2))


# ---------------------------------------------------------------------------
# raw collector export (events.csv)

EVENT_COLUMNS = (
    "log_id",
    "session_id",
    "log_date_time",
    "user_id",
    "service_id",
    "page_id",
    "page_duration",
    "page_load",
    "login_state",
    "is_logout_event",
    "logout_kind",
    "browser_type",
    "referer_type",
    "language_tr",
    "location",
    "user_type",
    "sex",
    "age",
)

_LOGIN_FROM_STR = {"0": LoginState.VISITOR, "1": LoginState.AUTHENTICATED}
_LOGOUT_FROM_STR = {"0": LogoutKind.NONE, "1": LogoutKind.SECURE_BUTTON, "2": LogoutKind.WARNING_WINDOW}
_BOOL_FROM_STR = {"0": False, "1": True}


def _open_for(source: PathOrFile, mode: str):
    """Return (file, should_close)."""
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode, encoding="utf-8", newline=""), True


def read_events(source: PathOrFile, registry: ServiceRegistry) -> Iterator[PageviewEvent]:
    """Yield validated pageview events from a collector export, in file order.

    Raises ParseError on a malformed row (with line number and column) and
    EventValidationError on contract violations; the total count is logged
    when the stream ends. Dirty rows are rejected, never repaired.
    """
    fh, close = _open_for(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(1, "header", "empty file, header row required")
        try:
            idx = [header.index(c) for c in EVENT_COLUMNS]
        except ValueError as exc:
            raise ParseError(1, "header", f"missing column: {exc}") from None
        (i_log, i_sess, i_ts, i_user, i_srv, i_page, i_dur, i_load, i_login,
         i_logout_flag, i_logout_kind, i_browser, i_referer, i_lang, i_loc,
         i_utype, i_sex, i_age) = idx
        count = 0
        for row in reader:
            line_no = reader.line_num
            try:
                event = PageviewEvent(
                    log_id=int(row[i_log]),
                    session_id=int(row[i_sess]),
                    timestamp=parse_timestamp(row[i_ts]),
                    user_id=int(row[i_user]),
                    service_id=int(row[i_srv]),
                    page_id=int(row[i_page]),
                    page_duration=int(row[i_dur]),
                    page_load=float(row[i_load]),
                    login_state=_LOGIN_FROM_STR[row[i_login]],
                    is_logout_event=_BOOL_FROM_STR[row[i_logout_flag]],
                    logout_kind=_LOGOUT_FROM_STR[row[i_logout_kind]],
                    browser_type=int(row[i_browser]),
                    referer_type=int(row[i_referer]),
                    language_tr=int(row[i_lang]),
                    location=int(row[i_loc]),
                    user_type=int(row[i_utype]),
                    sex=int(row[i_sex]),
                    age=int(row[i_age]),
                )
            except (ValueError, KeyError, IndexError) as exc:
                column = _offending_column(row, idx)
                raise ParseError(line_no, column, str(exc)) from None
            yield validate_event(event, registry)
            count += 1
        log.info("read %d events", count)
    finally:
        if close:
            fh.close()


def _offending_column(row: list[str], idx: list[int]) -> str:
    for name, i in zip(EVENT_COLUMNS, idx):
        if i >= len(row):
            return name
        value = row[i]
        if name == "log_date_time":
            try:
                parse_timestamp(value)
            except ValueError:
                return name
        elif name == "page_load":
            try:
                float(value)
            except ValueError:
                return name
        elif name in ("login_state", "is_logout_event", "logout_kind"):
            if value not in ("0", "1", "2"):
                return name
        else:
            try:
                int(value)
            except ValueError:
                return name
    return "row"


def write_events(events: Iterable[PageviewEvent], sink: PathOrFile) -> int:
    """Write a collector export; returns the record count."""
    fh, close = _open_for(sink, "w")
    try:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        count = 0
        for e in events:
            writer.writerow((
                e.log_id, e.session_id, format_timestamp(e.timestamp),
                e.user_id, e.service_id, e.page_id, e.page_duration,
                repr(e.page_load), int(e.login_state), int(e.is_logout_event),
                int(e.logout_kind), e.browser_type, e.referer_type,
                e.language_tr, e.location, e.user_type, e.sex, e.age,
            ))
            count += 1
        return count
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# enriched session dataset (va_sess*.csv)

SESSION_COLUMNS = (
    "Log_ID",
    "Session_ID",
    "Log_Date_Time",
    "User_ID",
    "Session_Login_Status",
    "Logins_During_Period",
    "User_Type",
    "Sex",
    "Age",
    "Age_Group",
    "User_Language_TR",
    "User_Location",
    "Browser_Type",
    "Referer_Type",
    "Landing_Srv_ID",
    "Exit_Srv_ID",
    "Exit_Type",
    "Total_Session_Duration",
    "Avg_Page_Duration",
    "Total_Page_Load",
    "Avg_Page_Load",
    "Page_Count",
    "Visitor_PageView",
    "User_PageView",
    "Service_Count",
    "Page_per_Service",
    "Visited_Service_IDs",
)

#: session attribute backing each scalar column, in column order
_SESSION_ATTRS = (
    "log_id",
    "session_id",
    "log_date_time",
    "user_id",
    "session_login_status",
    "logins_during_period",
    "user_type",
    "sex",
    "age",
    "age_group",
    "user_language_tr",
    "user_location",
    "browser_type",
    "referer_type",
    "landing_srv_id",
    "exit_srv_id",
    "exit_type",
    "total_session_duration",
    "avg_page_duration",
    "total_page_load",
    "avg_page_load",
    "page_count",
    "visitor_pageview",
    "user_pageview",
    "service_count",
    "page_per_service",
    "visited_service_ids",
)


def session_header(registry: ServiceRegistry) -> tuple[str, ...]:
    """Scalar columns in schema order, then s_*, p_*, r_* in registry order."""
    names = registry.names()
    return SESSION_COLUMNS + tuple(
        f"{prefix}_{name}" for prefix in ("s", "p", "r") for name in names
    )


def session_row(s: EnrichedSession) -> list:
    """Serialize one enriched session into its CSV row.

    Derived decimals (Avg_Page_Duration, Total_Page_Load, Avg_Page_Load,
    Page_per_Service) are rounded to 2 decimals here and only here;
    r_* shares are written at full precision so they re-parse exactly.
    """
    row = [
        s.log_id, s.session_id,
        format_timestamp(s.log_date_time, seconds=False),
        s.user_id, s.session_login_status, s.logins_during_period,
        s.user_type, s.sex, s.age, s.age_group, s.user_language_tr,
        s.user_location, s.browser_type, s.referer_type,
        s.landing_srv_id, s.exit_srv_id, s.exit_type,
        s.total_session_duration, _fmt_2dp(s.avg_page_duration),
        _fmt_2dp(s.total_page_load), _fmt_2dp(s.avg_page_load),
        s.page_count, s.visitor_pageview, s.user_pageview,
        s.service_count, _fmt_2dp(s.page_per_service),
        ",".join(str(i) for i in s.visited_service_ids),
    ]
    row.extend(s.service_visited)
    row.extend(s.service_pages)
    row.extend(repr(r) for r in s.service_share)
    return row


def write_enriched_sessions(
    records: Iterable[EnrichedSession],
    registry: ServiceRegistry,
    sink: PathOrFile,
) -> int:
    """Write the enriched session dataset; returns the record count."""
    fh, close = _open_for(sink, "w")
    try:
        writer = csv.writer(fh)
        writer.writerow(session_header(registry))
        count = 0
        for s in records:
            writer.writerow(session_row(s))
            count += 1
        return count
    finally:
        if close:
            fh.close()


def read_enriched_sessions(source: PathOrFile, registry: ServiceRegistry) -> Iterator[EnrichedSession]:
    """Stream an enriched session dataset back into EnrichedSession values.

    Derived decimal fields come back at their serialized 2-decimal
    precision; use a tolerance around 0.011 when re-checking the
    average/total invariants on re-read rows.
    """
    expected = session_header(registry)
    n = len(registry)
    fh, close = _open_for(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(1, "header", "empty file, header row required")
        if tuple(header) != expected:
            raise ParseError(1, "header", "header does not match the enriched session schema")
        base = len(SESSION_COLUMNS)
        for row in reader:
            line_no = reader.line_num
            try:
                visited = tuple(int(t) for t in row[26].split(",")) if row[26] else ()
                yield EnrichedSession(
                    log_id=int(row[0]),
                    session_id=int(row[1]),
                    log_date_time=parse_timestamp(row[2]),
                    user_id=int(row[3]),
                    session_login_status=int(row[4]),
                    logins_during_period=int(row[5]),
                    user_type=int(row[6]),
                    sex=int(row[7]),
                    age=int(row[8]),
                    age_group=int(row[9]),
                    user_language_tr=int(row[10]),
                    user_location=int(row[11]),
                    browser_type=int(row[12]),
                    referer_type=int(row[13]),
                    landing_srv_id=int(row[14]),
                    exit_srv_id=int(row[15]),
                    exit_type=int(row[16]),
                    total_session_duration=int(row[17]),
                    avg_page_duration=float(row[18]),
                    total_page_load=float(row[19]),
                    avg_page_load=float(row[20]),
                    page_count=int(row[21]),
                    visitor_pageview=int(row[22]),
                    user_pageview=int(row[23]),
                    service_count=int(row[24]),
                    page_per_service=float(row[25]),
                    visited_service_ids=visited,
                    service_visited=tuple(int(t) for t in row[base:base + n]),
                    service_pages=tuple(int(t) for t in row[base + n:base + 2 * n]),
                    service_share=tuple(float(t) for t in row[base + 2 * n:base + 3 * n]),
                )
            except (ValueError, IndexError) as exc:
                raise ParseError(line_no, "row", str(exc)) from None
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# enriched pageview dataset (va_page*.csv)

PAGEVIEW_COLUMNS = (
    "Log_ID",
    "Session_ID",
    "Log_Date_Time",
    "Service_ID",
    "Page_ID",
    "Page_Duration",
    "Page_Load",
    "Login_State",
    "User_Type",
    "Sex",
    "Age_Group",
    "Browser_Type",
    "User_Location",
)


def pageview_row(p: EnrichedPageview) -> tuple:
    return (
        p.log_id, p.session_id, format_timestamp(p.timestamp),
        p.service_id, p.page_id, p.page_duration, repr(p.page_load),
        p.login_state, p.user_type, p.sex, p.age_group,
        p.browser_type, p.user_location,
    )


def write_enriched_pageviews(records: Iterable[EnrichedPageview], sink: PathOrFile) -> int:
    """Write the enriched pageview dataset; returns the record count."""
    fh, close = _open_for(sink, "w")
    try:
        writer = csv.writer(fh)
        writer.writerow(PAGEVIEW_COLUMNS)
        count = 0
        for p in records:
            writer.writerow(pageview_row(p))
            count += 1
        return count
    finally:
        if close:
            fh.close()


def read_enriched_pageviews(source: PathOrFile) -> Iterator[EnrichedPageview]:
    fh, close = _open_for(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PAGEVIEW_COLUMNS:
            raise ParseError(1, "header", "header does not match the enriched pageview schema")
        for row in reader:
            try:
                yield EnrichedPageview(
                    log_id=int(row[0]),
                    session_id=int(row[1]),
                    timestamp=parse_timestamp(row[2]),
                    service_id=int(row[3]),
                    page_id=int(row[4]),
                    page_duration=int(row[5]),
                    page_load=float(row[6]),
                    login_state=int(row[7]),
                    user_type=int(row[8]),
                    sex=int(row[9]),
                    age_group=int(row[10]),
                    browser_type=int(row[11]),
                    user_location=int(row[12]),
                )
            except (ValueError, IndexError) as exc:
                raise ParseError(reader.line_num, "row", str(exc)) from None
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# time-frame slicing and dataset manifests

@dataclass
class DatasetManifest:
    """JSON sidecar describing one emitted dataset file."""

    file_name: str
    time_frame: str  # week | month | custom
    time_range: tuple[int, int]  # (start, end) epoch seconds, inclusive
    record_count: int
    file_size_bytes: int

    def to_dict(self) -> dict:
        return {
            "file_name": self.file_name,
            "time_frame": self.time_frame,
            "time_range": {
                "start": format_timestamp(self.time_range[0]),
                "end": format_timestamp(self.time_range[1]),
            },
            "record_count": self.record_count,
            "file_size_bytes": self.file_size_bytes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        return cls(
            file_name=data["file_name"],
            time_frame=data["time_frame"],
            time_range=(
                parse_timestamp(data["time_range"]["start"]),
                parse_timestamp(data["time_range"]["end"]),
            ),
            record_count=data["record_count"],
            file_size_bytes=data["file_size_bytes"],
        )


def classify_time_frame(start: int, end: int) -> str:
    days = (end - start) / 86400.0
    if 5.5 <= days <= 7.5:
        return "week"
    if 26.5 <= days <= 31.5:
        return "month"
    return "custom"


def write_manifest(manifest: DatasetManifest, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")


def manifest_for_file(path: Union[str, os.PathLike], time_range: tuple[int, int], record_count: int) -> DatasetManifest:
    return DatasetManifest(
        file_name=os.path.basename(path),
        time_frame=classify_time_frame(*time_range),
        time_range=time_range,
        record_count=record_count,
        file_size_bytes=os.path.getsize(path),
    )


def _record_timestamp(record) -> int:
    if isinstance(record, EnrichedSession):
        return record.log_date_time
    return record.timestamp


def slice_by_time(records: Iterable, time_range: tuple[int, int]):
    """Filter a record stream to [start, end] by record timestamp.

    Returns (stream, manifest). The manifest's record_count fills in as
    the stream is consumed; read it only after exhausting the stream.
    Works on raw events, enriched sessions and enriched pageviews.
    """
    start, end = time_range
    if start > end:
        raise ValueError("inverted time range: start > end")
    manifest = DatasetManifest(
        file_name="",
        time_frame=classify_time_frame(start, end),
        time_range=(start, end),
        record_count=0,
        file_size_bytes=0,
    )

    def _filtered():
        for record in records:
            if start <= _record_timestamp(record) <= end:
                manifest.record_count += 1
                yield record

    return _filtered(), manifest
