"""Line-oriented key=value logging to stderr."""

import logging
import sys
from typing import Any

LOG_FORMAT = "level=%(levelname)s logger=%(name)s %(message)s"


def setup_logging(verbosity: int = 0) -> None:
    """Configure the ``gdlnn`` logger hierarchy.

    Args:
        verbosity: 0 for INFO, positive for DEBUG, negative for WARNING
    """
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    else:
        level = logging.INFO

    root = logging.getLogger("gdlnn")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def _render(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    if not text or any(ch.isspace() for ch in text) or "=" in text:
        return '"' + text.replace('"', '\\"') + '"'
    return text


def kv(event: str, **fields: Any) -> str:
    """Render a log record body as ``event=<event> key=value ...``."""
    parts = [f"event={event}"]
    parts.extend(f"{key}={_render(value)}" for key, value in fields.items())
    return " ".join(parts)
