"""Shared error type and the stable machine-readable error codes.

Every failure that crosses a module boundary is a :class:`ProtocolError`
carrying one of the codes below. The HTTP layer maps codes to statuses;
in-process callers match on ``exc.code``.
"""

from __future__ import annotations

from typing import Any

# Parsing / validation
PARSE_ERROR = "PARSE_ERROR"
VALIDATION_ERROR = "VALIDATION_ERROR"
INVALID_GEOMETRY = "INVALID_GEOMETRY"
SCENARIO_INVALID = "SCENARIO_INVALID"

# Registry
SOURCE_UNAVAILABLE = "SOURCE_UNAVAILABLE"
DUPLICATE_DOMAIN = "DUPLICATE_DOMAIN"
READ_ONLY_REGISTRY = "READ_ONLY_REGISTRY"

# Auth
UNAUTHENTICATED = "UNAUTHENTICATED"
UNAUTHORIZED = "UNAUTHORIZED"
FORBIDDEN_ACTOR = "FORBIDDEN_ACTOR"

# Lifecycle
NOT_FOUND = "NOT_FOUND"
ILLEGAL_TRANSITION = "ILLEGAL_TRANSITION"
ILLEGAL_STATE = "ILLEGAL_STATE"
ISSUE_WINDOW_CLOSED = "ISSUE_WINDOW_CLOSED"

# Negotiation
UNKNOWN_INSTANCE = "UNKNOWN_INSTANCE"
NO_MATCHING_INSTANCE = "NO_MATCHING_INSTANCE"
THREAD_CLOSED = "THREAD_CLOSED"
EXPIRED = "EXPIRED"
OUT_OF_TURN = "OUT_OF_TURN"
ROUND_LIMIT = "ROUND_LIMIT"
NOT_ACCEPTED = "NOT_ACCEPTED"
ALREADY_FINALIZED = "ALREADY_FINALIZED"

# Assignment
NO_CANDIDATE = "NO_CANDIDATE"

# Disclosure
EMPTY_RANGE = "EMPTY_RANGE"

# Store
VERSION_CONFLICT = "VERSION_CONFLICT"
CORRUPT_RECORD = "CORRUPT_RECORD"


#: Error code -> HTTP status used by the gateway's error envelope.
HTTP_STATUS: dict[str, int] = {
    PARSE_ERROR: 400,
    VALIDATION_ERROR: 400,
    INVALID_GEOMETRY: 400,
    SCENARIO_INVALID: 400,
    EMPTY_RANGE: 400,
    UNAUTHENTICATED: 401,
    UNAUTHORIZED: 403,
    FORBIDDEN_ACTOR: 403,
    READ_ONLY_REGISTRY: 403,
    NOT_FOUND: 404,
    UNKNOWN_INSTANCE: 404,
    NO_MATCHING_INSTANCE: 404,
    ILLEGAL_TRANSITION: 409,
    ILLEGAL_STATE: 409,
    ISSUE_WINDOW_CLOSED: 409,
    THREAD_CLOSED: 409,
    EXPIRED: 409,
    OUT_OF_TURN: 409,
    NOT_ACCEPTED: 409,
    ALREADY_FINALIZED: 409,
    DUPLICATE_DOMAIN: 409,
    VERSION_CONFLICT: 409,
    NO_CANDIDATE: 409,
    ROUND_LIMIT: 422,
    SOURCE_UNAVAILABLE: 503,
    CORRUPT_RECORD: 500,
}


class ProtocolError(Exception):
    """A failure with a stable code, a human message, and optional details."""

    def __init__(self, code: str, message: str, details: dict[str, Any] | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = details or {}

    def http_status(self) -> int:
        return HTTP_STATUS.get(self.code, 500)

    def envelope(self) -> dict[str, Any]:
        """The machine-readable error body served on every failing request."""
        return {"error": {"code": self.code, "message": self.message, "details": self.details}}


def validation_error(message: str, **details: Any) -> ProtocolError:
    return ProtocolError(VALIDATION_ERROR, message, details or None)


def not_found(what: str, ident: str) -> ProtocolError:
    return ProtocolError(NOT_FOUND, f"{what} {ident!r} not found", {"id": ident})
