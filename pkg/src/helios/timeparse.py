"""Shared parsing of ISO-8601 instants and compact durations (10m, 1h)."""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

_DURATION_RE = re.compile(r"^(\d+)\s*(m|min|h)$")


class TimeParseError(ValueError):
    pass


def parse_duration(text: str) -> timedelta:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise TimeParseError(f"bad duration {text!r} (use e.g. 10m or 1h)")
    value, unit = int(m.group(1)), m.group(2)
    if value <= 0:
        raise TimeParseError(f"duration must be positive: {text!r}")
    return timedelta(minutes=value) if unit in ("m", "min") else timedelta(hours=value)


def parse_instant(text: str) -> datetime:
    try:
        t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise TimeParseError(f"bad ISO-8601 instant {text!r}") from None
    return t.replace(tzinfo=timezone.utc) if t.tzinfo is None else t.astimezone(timezone.utc)
