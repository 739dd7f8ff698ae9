"""Clocks and UTC timestamp formatting.

All persisted timestamps are timezone-aware UTC datetimes rendered as
ISO-8601 with a ``Z`` suffix and whole-second precision. Services take a
:class:`Clock` so the simulation harness can drive everything on virtual
time with no wall-clock sleeps.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from .errors import ProtocolError, VALIDATION_ERROR

UTC = timezone.utc


def to_iso(dt: datetime) -> str:
    """Render an aware datetime as ``YYYY-MM-DDTHH:MM:SSZ``."""
    if dt.tzinfo is None:
        raise ValueError("naive datetime")
    return dt.astimezone(UTC).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


def from_iso(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; accepts a Z suffix or explicit offset."""
    if not isinstance(text, str) or not text:
        raise ProtocolError(VALIDATION_ERROR, f"not a timestamp: {text!r}")
    try:
        raw = text.replace("Z", "+00:00") if text.endswith("Z") else text
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ProtocolError(VALIDATION_ERROR, f"bad timestamp {text!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return dt.astimezone(UTC)


class Clock:
    """Source of the current UTC time."""

    def now(self) -> datetime:  # pragma: no cover - interface
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> datetime:
        return datetime.now(UTC).replace(microsecond=0)


class VirtualClock(Clock):
    """Manually advanced clock for deterministic runs. Never moves backwards."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("virtual clock start must be timezone-aware")
        self._now = start.astimezone(UTC)

    def now(self) -> datetime:
        return self._now

    def advance_to(self, at: datetime) -> None:
        """Move forward to ``at``; earlier timestamps leave the clock alone."""
        at = at.astimezone(UTC)
        if at > self._now:
            self._now = at

    def advance_by(self, amount: float | timedelta) -> None:
        if not isinstance(amount, timedelta):
            amount = timedelta(seconds=amount)
        if amount < timedelta(0):
            raise ValueError("clock cannot move backwards")
        self._now = self._now + amount
