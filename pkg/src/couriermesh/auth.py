"""Bearer-token authentication.

Tokens are opaque 256-bit values handed out when a principal is created
(courier enrollment, admin bootstrap, requester registration). Lookup walks
every issued token with a constant-time comparison so a timing probe cannot
bisect the token space.
"""

from __future__ import annotations

import hmac
import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import UNAUTHENTICATED, ProtocolError
from .ids import new_token
from .store import Store

KINDS = ("COURIER", "ADMIN", "REQUESTER", "AUDITOR")


@dataclass(frozen=True)
class Principal:
    kind: str
    id: str
    token: str
    scopes: tuple[str, ...] = field(default_factory=tuple)


class AuthService:
    def __init__(self, store: Store, rng: Optional[random.Random] = None):
        self._store = store
        self._rng = rng

    def issue(self, kind: str, principal_id: str, scopes: tuple[str, ...] = ()) -> Principal:
        if kind not in KINDS:
            raise ValueError(f"unknown principal kind {kind!r}")
        token = new_token(self._rng)
        p = Principal(kind, principal_id, token, tuple(scopes))
        self._store.put(
            f"token/{token}",
            {"kind": p.kind, "id": p.id, "scopes": list(p.scopes)},
            None,
        )
        return p

    def revoke(self, token: str) -> None:
        rec = self._store.get(f"token/{token}")
        if rec is not None:
            self._store.delete(f"token/{token}", rec.version)

    def authenticate(self, token: Optional[str]) -> Principal:
        if not token:
            raise ProtocolError(UNAUTHENTICATED, "missing bearer token")
        found = None
        # scan every issued credential; compare_digest keeps each check constant-time
        for key, rec in self._store.scan("token/"):
            issued = key[len("token/"):]
            if hmac.compare_digest(issued, token):
                found = rec.value
        if found is None:
            raise ProtocolError(UNAUTHENTICATED, "unknown or revoked token")
        return Principal(found["kind"], found["id"], token, tuple(found.get("scopes", ())))
