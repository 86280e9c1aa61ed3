"""Domain types shared by the whole pipeline.

Everything here is an immutable value object: safe to share between
parallel workers and to use as dict keys where hashable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Union


class ClickmineError(Exception):
    """Base class for all errors raised by this package."""


class UnknownServiceError(ClickmineError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"unknown service: {token!r}")


class EventValidationError(ClickmineError):
    """A pageview event violates the raw-event contract."""

    def __init__(self, field_name: str, reason: str):
        self.field = field_name
        self.reason = reason
        super().__init__(f"{field_name}: {reason}")


class LoginState(IntEnum):
    VISITOR = 0
    AUTHENTICATED = 1


class LogoutKind(IntEnum):
    NONE = 0
    SECURE_BUTTON = 1
    WARNING_WINDOW = 2


class ExitMethod(IntEnum):
    """How a session ended.

    Reports group SECURE_BUTTON and WARNING_WINDOW together as regular
    session termination; DIRECT is an exit without logging out (window
    closed, navigation away, timeout).
    """

    DIRECT = 0
    SECURE_BUTTON = 1
    WARNING_WINDOW = 2

    @property
    def is_secure(self) -> bool:
        return self is not ExitMethod.DIRECT


# Default age-group boundaries: group 1 <= 22, 2 = 23-30, 3 = 31-45, 4 >= 46.
DEFAULT_AGE_THRESHOLDS = (22, 30, 45)


def age_group(age: int, thresholds: tuple[int, int, int] = DEFAULT_AGE_THRESHOLDS) -> int:
    """Map an age in years onto the 1-4 categorical age group."""
    if age < 0:
        raise ValueError("age must be >= 0")
    for group, upper in enumerate(thresholds, start=1):
        if age <= upper:
            return group
    return len(thresholds) + 1


@dataclass(frozen=True)
class ServiceRegistry:
    """Ordered catalog of portal services: (service_id, short_name) pairs.

    Ids are unique positive integers; names are unique, lowercase and
    non-empty. Registry order fixes column order of the per-service
    vectors in the enriched session schema.
    """

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("registry must not be empty")
        ids = [sid for sid, _ in self.entries]
        names = [name for _, name in self.entries]
        if any(sid <= 0 for sid in ids):
            raise ValueError("service ids must be positive")
        if len(set(ids)) != len(ids):
            raise ValueError("service ids must be unique")
        if len(set(names)) != len(names):
            raise ValueError("service names must be unique")
        for name in names:
            if not name or name != name.lower():
                raise ValueError(f"service names must be lowercase and non-empty: {name!r}")
        object.__setattr__(self, "_by_id", {sid: name for sid, name in self.entries})
        object.__setattr__(self, "_by_name", {name: sid for sid, name in self.entries})
        object.__setattr__(self, "_vector_index", {sid: i for i, (sid, _) in enumerate(self.entries)})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[int, str]]:
        return iter(self.entries)

    def __contains__(self, service_id: int) -> bool:
        return service_id in self._by_id

    def ids(self) -> tuple[int, ...]:
        return tuple(sid for sid, _ in self.entries)

    def names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.entries)

    def name_of(self, service_id: int) -> str:
        try:
            return self._by_id[service_id]
        except KeyError:
            raise UnknownServiceError(service_id) from None

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownServiceError(name) from None

    def index_of(self, service_id: int) -> int:
        """Position of a service in registry order (s_/p_/r_ vector slot)."""
        try:
            return self._vector_index[service_id]
        except KeyError:
            raise UnknownServiceError(service_id) from None


#: The ten portal services, in canonical registry order.
DEFAULT_REGISTRY = ServiceRegistry(
    entries=(
        (1, "gate"),
        (2, "mail"),
        (3, "obis"),
        (4, "pbis"),
        (5, "abis"),
        (6, "cawis"),
        (7, "form"),
        (8, "menu"),
        (9, "pbook"),
        (10, "quest"),
    )
)


def resolve_service(name_or_id: Union[str, int], registry: ServiceRegistry) -> int:
    """Resolve a service token (lowercase short name or numeric id) to its id.

    Name lookup is case-sensitive: short names are stored lowercase and
    an uppercase token is an unknown service, not an alias.
    """
    if isinstance(name_or_id, str):
        return registry.id_of(name_or_id)
    if name_or_id in registry:
        return name_or_id
    raise UnknownServiceError(name_or_id)


@dataclass(frozen=True, slots=True)
class PageviewEvent:
    """One raw pageview record as exported by the collector.

    Client attributes (browser, referer, language, location, user type,
    sex, age) are denormalized onto every event of a session.
    """

    log_id: int
    session_id: int
    timestamp: int  # epoch seconds, 1 s resolution
    user_id: int  # 0 = anonymous visitor
    service_id: int
    page_id: int
    page_duration: int  # seconds >= 0
    page_load: float  # page generation time, seconds >= 0
    login_state: LoginState
    is_logout_event: bool
    logout_kind: LogoutKind
    browser_type: int  # 1 standard, 2 search engine, 3 text-based
    referer_type: int  # 1..6
    language_tr: int  # 0/1
    location: int  # 0 in-country, 1 internal, 2 abroad
    user_type: int
    sex: int  # 0 undefined, 1 male, 2 female
    age: int


def validate_event(event: PageviewEvent, registry: ServiceRegistry | None = None) -> PageviewEvent:
    """Accept an event iff it satisfies the raw-event contract; else raise.

    Raises EventValidationError carrying the offending field name and a
    reason. When a registry is given, service membership is checked too.
    Checks are unrolled: this runs once per raw event.
    """
    if event.log_id <= 0:
        raise EventValidationError("log_id", "must be a positive integer")
    if event.session_id <= 0:
        raise EventValidationError("session_id", "must be a positive integer")
    if event.page_id <= 0:
        raise EventValidationError("page_id", "must be a positive integer")
    if event.user_id < 0:
        raise EventValidationError("user_id", "must be non-negative")
    if event.login_state == 1 and event.user_id == 0:
        raise EventValidationError("user_id", "authenticated pageview cannot be anonymous")
    if event.page_duration < 0:
        raise EventValidationError("page_duration", "must be >= 0")
    if event.page_load < 0:
        raise EventValidationError("page_load", "must be >= 0")
    if not 0 <= event.login_state <= 1:
        raise EventValidationError("login_state", "out of range")
    if not 0 <= event.logout_kind <= 2:
        raise EventValidationError("logout_kind", "out of range")
    if (event.logout_kind != 0) != event.is_logout_event:
        raise EventValidationError("is_logout_event", "logout flag inconsistent with logout_kind")
    if not 1 <= event.browser_type <= 3:
        raise EventValidationError("browser_type", "browser_type out of range")
    if not 1 <= event.referer_type <= 6:
        raise EventValidationError("referer_type", "referer_type out of range")
    if not 0 <= event.language_tr <= 1:
        raise EventValidationError("language_tr", "language_tr out of range")
    if not 0 <= event.location <= 2:
        raise EventValidationError("location", "location out of range")
    if not 0 <= event.sex <= 2:
        raise EventValidationError("sex", "sex out of range")
    if event.user_type < 1:
        raise EventValidationError("user_type", "user_type out of range")
    if event.age < 0:
        raise EventValidationError("age", "age out of range")
    if registry is not None and event.service_id not in registry:
        raise EventValidationError("service_id", f"unknown service id {event.service_id}")
    return event


@dataclass(frozen=True, slots=True)
class EnrichedSession:
    """One enriched session row.

    Scalar fields mirror the published session schema one-to-one; the
    three per-service vectors are aligned with registry order. Derived
    averages are stored at full precision and rounded only when written
    to disk.
    """

    log_id: int  # log id of the first pageview
    session_id: int
    log_date_time: int  # session start, epoch seconds truncated to the minute
    user_id: int
    session_login_status: int  # 0/1
    logins_during_period: int
    user_type: int
    sex: int
    age: int
    age_group: int
    user_language_tr: int
    user_location: int
    browser_type: int
    referer_type: int
    landing_srv_id: int
    exit_srv_id: int
    exit_type: int  # ExitMethod code
    total_session_duration: int
    avg_page_duration: float
    total_page_load: float
    avg_page_load: float
    page_count: int
    visitor_pageview: int
    user_pageview: int
    service_count: int
    page_per_service: float
    visited_service_ids: tuple[int, ...]  # first-visit order
    service_visited: tuple[int, ...]  # s_* flags, registry order
    service_pages: tuple[int, ...]  # p_* counts, registry order
    service_share: tuple[float, ...]  # r_* fractions, registry order

    def check_invariants(self, registry: ServiceRegistry, tolerance: float = 1e-9) -> list[str]:
        """Return the list of violated session invariants (empty = valid).

        `tolerance` bounds the derived-average checks; pass a looser one
        (e.g. 0.011) for rows re-read from 2-decimal serialized output.
        """
        bad: list[str] = []
        n = len(registry)
        if not (len(self.service_visited) == len(self.service_pages) == len(self.service_share) == n):
            return [f"service vectors must have {n} entries"]
        if self.page_count <= 0:
            bad.append("page_count must be positive")
            return bad
        if self.page_count != self.visitor_pageview + self.user_pageview:
            bad.append("page_count != visitor_pageview + user_pageview")
        visited = set(self.visited_service_ids)
        if len(visited) != len(self.visited_service_ids):
            bad.append("visited_service_ids contains duplicates")
        if self.service_count != len(visited):
            bad.append("service_count != |visited_service_ids|")
        if self.service_count != sum(self.service_visited):
            bad.append("service_count != sum of s_* flags")
        for (sid, _name), flag, pages in zip(registry, self.service_visited, self.service_pages):
            if flag not in (0, 1):
                bad.append(f"s_ flag for service {sid} not in {{0,1}}")
            if (flag == 1) != (pages > 0):
                bad.append(f"s_/p_ mismatch for service {sid}")
            if (sid in visited) != (flag == 1):
                bad.append(f"visited list and s_ flag disagree for service {sid}")
        if sum(self.service_pages) != self.page_count:
            bad.append("sum of p_* counts != page_count")
        for pages, share in zip(self.service_pages, self.service_share):
            if abs(share - pages / self.page_count) > tolerance:
                bad.append("r_* share != p_* / page_count")
                break
        if abs(sum(self.service_share) - 1.0) >= 1e-9:
            bad.append("r_* shares do not sum to 1")
        if self.service_count and abs(self.page_per_service - self.page_count / self.service_count) > tolerance:
            bad.append("page_per_service != page_count / service_count")
        if abs(self.avg_page_duration - self.total_session_duration / self.page_count) > tolerance:
            bad.append("avg_page_duration != total_session_duration / page_count")
        if abs(self.avg_page_load - self.total_page_load / self.page_count) > tolerance:
            bad.append("avg_page_load != total_page_load / page_count")
        if self.landing_srv_id not in visited:
            bad.append("landing_srv_id not among visited services")
        if self.exit_srv_id not in visited:
            bad.append("exit_srv_id not among visited services")
        if self.session_login_status == 0 and (self.user_pageview != 0 or self.exit_type != 0):
            bad.append("visitor session must have no user pageviews and a direct exit")
        return bad


@dataclass(frozen=True, slots=True)
class EnrichedPageview:
    """One pageview record enriched with its session's demographics."""

    log_id: int
    session_id: int
    timestamp: int  # epoch seconds, full 1 s resolution
    service_id: int
    page_id: int
    page_duration: int
    page_load: float
    login_state: int
    user_type: int
    sex: int
    age_group: int
    browser_type: int
    user_location: int


@dataclass(frozen=True)
class MetricBundle:
    """The six-metric score bundle attached to an association rule."""

    antecedent_support: float
    consequent_support: float
    support: float
    confidence: float
    lift: float
    leverage: float
    conviction: float  # may be +inf for exact implications
    zhang: float

    def as_row(self) -> tuple[float, ...]:
        return (
            self.antecedent_support,
            self.consequent_support,
            self.support,
            self.confidence,
            self.lift,
            self.leverage,
            self.conviction,
            self.zhang,
        )
