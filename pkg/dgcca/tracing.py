"""Optional op tracing through Weights & Biases Weave.

Top-level pipeline calls (decomposition, selection, studies) become weave
spans once init_tracing has succeeded. Before that, and whenever weave is
not installed, they run as plain calls.
"""

import functools
import logging
from typing import Any, Callable, TypeVar

try:
    import weave

    WEAVE_AVAILABLE = True
except ImportError:
    WEAVE_AVAILABLE = False

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

_active = False


def tracing_active() -> bool:
    return _active


def trace_op(name: str | None = None) -> Callable[[F], F]:
    """Trace a pipeline function as a span while tracing is active.

    Args:
        name: Span name; defaults to the function name.
    """

    def decorator(func: F) -> F:
        if not WEAVE_AVAILABLE:
            return func
        traced = weave.op(name=name or func.__name__)(func)

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            if _active:
                return traced(*args, **kwargs)
            return func(*args, **kwargs)

        return wrapper  # type: ignore[return-value]

    return decorator


def init_tracing(project_name: str = "dgcca") -> bool:
    """Start sending spans to a weave project.

    Returns:
        True when tracing is on, False when weave is missing or refused.
    """
    global _active
    if not WEAVE_AVAILABLE:
        logger.warning("weave is not installed; tracing disabled (pip install dgcca[tracing])")
        return False
    try:
        weave.init(project_name)
    except Exception as e:
        logger.warning("could not initialize weave tracing: %s", e)
        return False
    _active = True
    logger.info("tracing pipeline ops to weave project %s", project_name)
    return True
