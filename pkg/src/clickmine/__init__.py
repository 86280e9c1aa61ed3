"""clickmine: clickstream sessionization, enrichment and usage mining.

Library surface for the main pipeline stages; the `clickmine` command
line wraps them for batch use.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DEFAULT_REGISTRY,
    EnrichedPageview,
    EnrichedSession,
    ExitMethod,
    LoginState,
    LogoutKind,
    MetricBundle,
    PageviewEvent,
    ServiceRegistry,
    resolve_service,
    validate_event,
)
