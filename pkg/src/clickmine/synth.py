"""Seeded synthetic clickstream generation with closed-form ground truth.

The generator substitutes for a private production dataset: it emits raw
collector-export events whose aggregate behavior (bounce rate, landing
shares, exit methods, service transitions) is controlled by the config
and therefore known in advance. `describe_ground_truth` returns those
expectations in closed form so pipeline output can be checked against
them.

Session model: a session bounces (one pageview) with a configured
probability, otherwise its length is 2 + Geometric(p). Search-engine and
text-based browser sessions are always single-page (crawlers do not keep
cookies); the human single-page probability is adjusted so the overall
bounce rate still equals the configured value. Sessions start uniformly
inside the period; page dwell times are exponential.
"""

from __future__ import annotations

import json
import math
import random
from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterator, Mapping

import numpy as np

from .model import (
    ClickmineError,
    DEFAULT_REGISTRY,
    LoginState,
    LogoutKind,
    PageviewEvent,
    ServiceRegistry,
)

_MEAN_PAGE_SECONDS = 45.0  # near the published average page duration
_MEAN_PAGE_LOAD = 0.19
_VISITOR_PREFIX_P = 0.5  # geometric mean 1 visitor page before login
_MAX_SESSION_PAGES = 500
_CRAWLER_BROWSERS = (2, 3)


class ConfigError(ClickmineError):
    """The generator config violates its invariants."""


def _utc(year, month, day, hour=0, minute=0, second=0) -> int:
    return int(datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc).timestamp())


DEFAULT_PERIOD = (_utc(2022, 11, 1), _utc(2022, 11, 30, 23, 59, 59))


@dataclass(frozen=True)
class GeneratorConfig:
    """Ground-truth behavior knobs for one synthetic dataset.

    Vectors are aligned with registry order. `attribute_distributions`
    maps a client attribute name to (value, probability) pairs; every
    probability vector must sum to 1 within 1e-9.
    """

    session_count: int
    landing_distribution: tuple[float, ...]
    transition_matrix: tuple[tuple[float, ...], ...]
    session_length_geometric_p: float
    single_page_probability: float
    secure_exit_probability: tuple[float, ...]
    login_probability: float
    attribute_distributions: Mapping[str, tuple[tuple[int, float], ...]]
    seed: int
    period: tuple[int, int] = DEFAULT_PERIOD
    registry: ServiceRegistry = DEFAULT_REGISTRY
    warning_window_share: float = 0.1  # fraction of secure exits via warning window
    user_pool_size: int | None = None
    partition_size: int = 10_000

    def crawler_share(self) -> float:
        browser = dict(self.attribute_distributions["browser_type"])
        return sum(browser.get(b, 0.0) for b in _CRAWLER_BROWSERS)

    def validate(self) -> None:
        n = len(self.registry)
        if self.session_count < 0:
            raise ConfigError("session_count must be >= 0")
        if len(self.landing_distribution) != n:
            raise ConfigError("landing_distribution must cover every registry service")
        _check_prob_vector("landing_distribution", self.landing_distribution)
        if len(self.transition_matrix) != n:
            raise ConfigError("transition_matrix must have one row per service")
        for i, row in enumerate(self.transition_matrix):
            if len(row) != n:
                raise ConfigError(f"transition_matrix row {i} has wrong length")
            _check_prob_vector(f"transition_matrix row {i}", row)
        if not 0.0 < self.session_length_geometric_p <= 1.0:
            raise ConfigError("session_length_geometric_p must be in (0, 1]")
        if not 0.0 <= self.single_page_probability <= 1.0:
            raise ConfigError("single_page_probability must be in [0, 1]")
        if len(self.secure_exit_probability) != n:
            raise ConfigError("secure_exit_probability must cover every registry service")
        for p in self.secure_exit_probability:
            if not 0.0 <= p <= 1.0:
                raise ConfigError("secure exit probabilities must be in [0, 1]")
        if not 0.0 <= self.login_probability <= 1.0:
            raise ConfigError("login_probability must be in [0, 1]")
        if not 0.0 <= self.warning_window_share <= 1.0:
            raise ConfigError("warning_window_share must be in [0, 1]")
        for name in ("browser_type", "referer_type", "language_tr", "location", "user_type", "sex", "age"):
            if name not in self.attribute_distributions:
                raise ConfigError(f"attribute_distributions missing {name!r}")
            _check_prob_vector(name, [p for _, p in self.attribute_distributions[name]])
        if self.period[0] > self.period[1]:
            raise ConfigError("period start must not be after period end")
        if self.crawler_share() > self.single_page_probability + 1e-9:
            raise ConfigError(
                "crawler browser share exceeds single_page_probability; "
                "crawler sessions are always single-page"
            )

    def human_single_page_probability(self) -> float:
        """Single-page probability among non-crawler sessions.

        Chosen so crawlers (always single-page) plus humans reproduce the
        configured overall bounce rate exactly.
        """
        c = self.crawler_share()
        if c >= 1.0:
            return 0.0
        return (self.single_page_probability - c) / (1.0 - c)

    def users(self) -> int:
        if self.user_pool_size is not None:
            return max(1, self.user_pool_size)
        return max(1, self.session_count // 8)


def _check_prob_vector(name: str, probs) -> None:
    for p in probs:
        if p < 0:
            raise ConfigError(f"{name}: probabilities must be non-negative")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ConfigError(f"{name}: probabilities must sum to 1 (got {sum(probs)!r})")


# ---------------------------------------------------------------------------
# defaults

def _default_transition_matrix(n: int, gate: int = 0) -> tuple[tuple[float, ...], ...]:
    # gate is a hub; every service keeps intra-service navigation mass
    rows = []
    for i in range(n):
        if i == gate:
            weights = [0.10 if j == gate else 0.90 / (n - 1) for j in range(n)]
        else:
            weights = [0.20 / (n - 2) if j not in (i, gate) else 0.0 for j in range(n)]
            weights[i] = 0.52
            weights[gate] = 0.28
        total = sum(weights)
        rows.append(tuple(w / total for w in weights))
    return tuple(rows)


def default_config(session_count: int = 10_000, seed: int = 1) -> GeneratorConfig:
    """A config whose ground truth is close to the published statistics.

    Bounce 12.84% and an 85% gate landing share hold exactly; exit-method
    and transition structure are a plausible approximation.
    """
    landing = (0.85, 0.035, 0.035, 0.02, 0.02, 0.01, 0.01, 0.01, 0.0025, 0.0075)
    secure = (0.42, 0.78, 0.78, 0.62, 0.55, 0.5, 0.5, 0.45, 0.5, 0.5)
    return GeneratorConfig(
        session_count=session_count,
        landing_distribution=landing,
        transition_matrix=_default_transition_matrix(len(DEFAULT_REGISTRY)),
        session_length_geometric_p=0.156,
        single_page_probability=0.1284,
        secure_exit_probability=secure,
        login_probability=0.85,
        attribute_distributions={
            "browser_type": ((1, 0.925), (2, 0.02), (3, 0.055)),
            "referer_type": ((1, 0.07), (2, 0.16), (3, 0.15), (4, 0.22), (5, 0.01), (6, 0.39)),
            "language_tr": ((0, 0.025), (1, 0.975)),
            "location": ((0, 0.20), (1, 0.79), (2, 0.01)),
            "user_type": ((1, 0.08), (2, 0.07), (3, 0.62), (4, 0.08), (5, 0.05), (6, 0.10)),
            "sex": ((0, 0.10), (1, 0.46), (2, 0.44)),
            "age": (
                (18, 0.16), (20, 0.22), (22, 0.18), (25, 0.12), (28, 0.08),
                (33, 0.08), (40, 0.07), (47, 0.05), (55, 0.03), (62, 0.01),
            ),
        },
        seed=seed,
    )


# ---------------------------------------------------------------------------
# config files

def config_to_dict(config: GeneratorConfig) -> dict:
    names = config.registry.names()
    return {
        "sessions": config.session_count,
        "seed": config.seed,
        "registry": [[sid, name] for sid, name in config.registry],
        "landing": {name: p for name, p in zip(names, config.landing_distribution)},
        "transitions": {
            src: {dst: p for dst, p in zip(names, row)}
            for src, row in zip(names, config.transition_matrix)
        },
        "session_length_geometric_p": config.session_length_geometric_p,
        "single_page_probability": config.single_page_probability,
        "secure_exit": {name: p for name, p in zip(names, config.secure_exit_probability)},
        "login_probability": config.login_probability,
        "warning_window_share": config.warning_window_share,
        "user_pool_size": config.user_pool_size,
        "attributes": {
            attr: {str(value): p for value, p in pairs}
            for attr, pairs in config.attribute_distributions.items()
        },
        "period": {"start": config.period[0], "end": config.period[1]},
    }


def config_from_dict(data: dict) -> GeneratorConfig:
    base = default_config(session_count=data.get("sessions", 10_000), seed=data.get("seed", 1))
    registry = base.registry
    if "registry" in data:
        registry = ServiceRegistry(entries=tuple((int(s), n) for s, n in data["registry"]))
    names = registry.names()

    def vector(mapping, fallback):
        if mapping is None:
            return fallback
        return tuple(float(mapping[name]) for name in names)

    config = GeneratorConfig(
        session_count=int(data.get("sessions", base.session_count)),
        landing_distribution=vector(data.get("landing"), base.landing_distribution),
        transition_matrix=tuple(
            vector(data["transitions"][src], None) for src in names
        ) if "transitions" in data else base.transition_matrix,
        session_length_geometric_p=float(data.get("session_length_geometric_p", base.session_length_geometric_p)),
        single_page_probability=float(data.get("single_page_probability", base.single_page_probability)),
        secure_exit_probability=vector(data.get("secure_exit"), base.secure_exit_probability),
        login_probability=float(data.get("login_probability", base.login_probability)),
        attribute_distributions={
            attr: tuple((int(v), float(p)) for v, p in sorted(pairs.items(), key=lambda kv: int(kv[0])))
            for attr, pairs in data["attributes"].items()
        } if "attributes" in data else base.attribute_distributions,
        seed=int(data.get("seed", base.seed)),
        period=(int(data["period"]["start"]), int(data["period"]["end"])) if "period" in data else base.period,
        registry=registry,
        warning_window_share=float(data.get("warning_window_share", base.warning_window_share)),
        user_pool_size=data.get("user_pool_size"),
    )
    config.validate()
    return config


def load_config(path) -> GeneratorConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(config: GeneratorConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generation

def _cumulative(probs) -> list[float]:
    total = 0.0
    out = []
    for p in probs:
        total += p
        out.append(total)
    out[-1] = 1.0 + 1e-12  # guard against float shortfall at the top end
    return out


def generate(config: GeneratorConfig) -> Iterator[PageviewEvent]:
    """Yield the configured number of synthetic sessions as raw events.

    Deterministic for a fixed seed. Session ids are dense 1..session_count
    and emitted in ascending contiguous runs; events within a session are
    time-ordered inside the configured period. Generation is partitioned
    by session-id range, each partition seeded from (seed, partition), so
    a parallel run merged in id order equals this serial output.
    """
    config.validate()
    n_sessions = config.session_count
    if n_sessions == 0:
        return

    registry_ids = config.registry.ids()
    landing_cum = _cumulative(config.landing_distribution)
    transition_cum = [_cumulative(row) for row in config.transition_matrix]
    secure_p = config.secure_exit_probability
    attr_draws = {
        name: ([v for v, _ in pairs], _cumulative([p for _, p in pairs]))
        for name, pairs in config.attribute_distributions.items()
    }
    q_human = config.human_single_page_probability()
    log_q = math.log(1.0 - config.session_length_geometric_p) if config.session_length_geometric_p < 1.0 else None
    log_prefix = math.log(1.0 - _VISITOR_PREFIX_P)
    period_start, period_end = config.period
    span = period_end - period_start
    users = config.users()
    login_p = config.login_probability
    warning_share = config.warning_window_share
    visitor, authenticated = LoginState.VISITOR, LoginState.AUTHENTICATED
    no_logout, secure_btn, warning_win = LogoutKind.NONE, LogoutKind.SECURE_BUTTON, LogoutKind.WARNING_WINDOW

    browser_draw = attr_draws["browser_type"]
    referer_draw = attr_draws["referer_type"]
    language_draw = attr_draws["language_tr"]
    location_draw = attr_draws["location"]
    user_type_draw = attr_draws["user_type"]
    sex_draw = attr_draws["sex"]
    age_draw = attr_draws["age"]

    partitions = range((n_sessions + config.partition_size - 1) // config.partition_size)
    for partition in partitions:
        rng = random.Random(f"{config.seed}:{partition}")
        rand = rng.random
        expovariate = rng.expovariate
        randrange = rng.randrange
        first = partition * config.partition_size + 1
        last = min(first + config.partition_size - 1, n_sessions)
        for session_id in range(first, last + 1):
            browser = _draw(browser_draw, rand())
            is_crawler = browser in _CRAWLER_BROWSERS

            if is_crawler:
                length = 1
                logged_in = False
            else:
                if rand() < q_human:
                    length = 1
                else:
                    u = 1.0 - rand()
                    g = int(math.log(u) / log_q) if log_q is not None else 0
                    length = min(2 + g, _MAX_SESSION_PAGES)
                logged_in = rand() < login_p
            uid = randrange(1, users + 1) if logged_in else 0
            if logged_in and length > 1:
                u = 1.0 - rand()
                prefix = min(length - 1, int(math.log(u) / log_prefix))
            else:
                prefix = 0 if logged_in else length

            referer = _draw(referer_draw, rand())
            language = _draw(language_draw, rand())
            location = _draw(location_draw, rand())
            user_type = _draw(user_type_draw, rand())
            sex = _draw(sex_draw, rand())
            age = _draw(age_draw, rand())

            service_idx = bisect_right(landing_cum, rand())
            timestamp = period_start + (randrange(span + 1) if span else 0)

            # walk the service chain first so the exit service is known
            services = [service_idx]
            for _ in range(length - 1):
                service_idx = bisect_right(transition_cum[service_idx], rand())
                services.append(service_idx)

            if logged_in and rand() < secure_p[services[-1]]:
                exit_kind = warning_win if rand() < warning_share else secure_btn
            else:
                exit_kind = no_logout

            for i, idx in enumerate(services):
                is_last = i == length - 1
                authd = logged_in and i >= prefix
                duration = int(expovariate(1.0 / _MEAN_PAGE_SECONDS))
                sid = registry_ids[idx]
                yield PageviewEvent(
                    log_id=session_id * 10_000 + i + 1,
                    session_id=session_id,
                    timestamp=timestamp,
                    user_id=uid if authd else 0,
                    service_id=sid,
                    page_id=sid * 1000 + randrange(1, 40),
                    page_duration=duration,
                    page_load=round(expovariate(1.0 / _MEAN_PAGE_LOAD), 3),
                    login_state=authenticated if authd else visitor,
                    is_logout_event=is_last and exit_kind is not no_logout,
                    logout_kind=exit_kind if is_last else no_logout,
                    browser_type=browser,
                    referer_type=referer,
                    language_tr=language,
                    location=location,
                    user_type=user_type,
                    sex=sex,
                    age=age,
                )
                timestamp = min(timestamp + duration, period_end)


def _draw(values_cum, u: float):
    values, cum = values_cum
    return values[bisect_right(cum, u)]


# ---------------------------------------------------------------------------
# closed-form expectations

@dataclass(frozen=True)
class GroundTruth:
    """Expected statistics implied by a generator config."""

    bounce_rate: float
    landing_shares: dict[str, float]
    exit_shares: dict[str, float]
    secure_exit_rates: dict[str, float]
    global_secure_rate: float
    single_service_probability: float
    expected_session_length: float

    def as_dict(self) -> dict:
        return {
            "bounce_rate": self.bounce_rate,
            "landing_shares": self.landing_shares,
            "exit_shares": self.exit_shares,
            "secure_exit_rates": self.secure_exit_rates,
            "global_secure_rate": self.global_secure_rate,
            "single_service_probability": self.single_service_probability,
            "expected_session_length": self.expected_session_length,
        }


def describe_ground_truth(config: GeneratorConfig) -> GroundTruth:
    """Closed-form expectations for the main pipeline statistics.

    Multi-page sessions have length 2 + Geometric(p), so the exit-service
    distribution is pi_exit = q*pi0 + (1-q) * p*pi0*T*(I - (1-p)T)^-1 and
    the secure-exit rate at service s is the login share of sessions
    exiting there times the configured per-service probability (crawler
    bounces never log in and dilute it).
    """
    config.validate()
    names = config.registry.names()
    q = config.single_page_probability
    p = config.session_length_geometric_p
    c = config.crawler_share()
    login = config.login_probability

    pi0 = np.asarray(config.landing_distribution, dtype=float)
    T = np.asarray(config.transition_matrix, dtype=float)
    n = len(names)
    # E[pi0 T^(g+1)] over g ~ Geometric(p): p * pi0 T (I - (1-p)T)^-1
    M = np.eye(n) - (1.0 - p) * T
    pi_multi = p * np.linalg.solve(M.T, T.T @ pi0)
    pi_exit = q * pi0 + (1.0 - q) * pi_multi

    secure_rates = {}
    global_secure = 0.0
    for i, name in enumerate(names):
        human_exit_mass = pi_exit[i] - c * pi0[i]
        secure_mass = login * config.secure_exit_probability[i] * human_exit_mass
        secure_rates[name] = secure_mass / pi_exit[i] if pi_exit[i] > 0 else 0.0
        global_secure += secure_mass

    stay = np.diag(T)
    single_service = q + (1.0 - q) * float(
        np.sum(pi0 * p * stay / (1.0 - (1.0 - p) * stay))
    )
    mean_length = q + (1.0 - q) * (2.0 + (1.0 - p) / p)

    return GroundTruth(
        bounce_rate=q,
        landing_shares={name: float(pi0[i]) for i, name in enumerate(names)},
        exit_shares={name: float(pi_exit[i]) for i, name in enumerate(names)},
        secure_exit_rates=secure_rates,
        global_secure_rate=global_secure,
        single_service_probability=single_service,
        expected_session_length=mean_length,
    )
