"""Identifier and credential generation.

All entity ids are UUIDv4 strings. Callers may pass a seeded
``random.Random`` to make id streams reproducible inside the simulation
harness; production paths leave it ``None`` and use the OS entropy pool.
"""

from __future__ import annotations

import random
import secrets
import uuid


def new_uuid(rng: random.Random | None = None) -> str:
    if rng is None:
        return str(uuid.uuid4())
    return str(uuid.UUID(int=rng.getrandbits(128), version=4))


def new_token(rng: random.Random | None = None) -> str:
    """Opaque 256-bit bearer credential, hex encoded."""
    if rng is None:
        return secrets.token_hex(32)
    return bytes(rng.getrandbits(8) for _ in range(32)).hex()
