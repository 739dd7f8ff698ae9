"""Geotagged courier notes with emoji reactions.

Notes are independent rows keyed by id; deletion is a soft flag so history
survives audits. Reactions toggle: the same courier reacting twice with the
same emoji removes their reaction. Reaction sets serialize as sorted lists
to keep stored and wire forms deterministic.
"""

from __future__ import annotations

import random
from typing import Any, Optional

from . import geo
from .clock import Clock, to_iso
from .errors import FORBIDDEN_ACTOR, NOT_FOUND, VALIDATION_ERROR, ProtocolError
from .ids import new_uuid
from .store import Store

MAX_TEXT_LEN = 500

# Codepoint ranges that may start an emoji grapheme.
_EMOJI_BASE_RANGES = (
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x1FA70, 0x1FAFF),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0x2B00, 0x2BFF),
    (0x1F1E6, 0x1F1FF),  # regional indicators (flags come in pairs)
)
_ZWJ = 0x200D
_VS16 = 0xFE0F
_SKIN = (0x1F3FB, 0x1F3FF)


def _is_base(cp: int) -> bool:
    return any(lo <= cp <= hi for lo, hi in _EMOJI_BASE_RANGES)


def is_single_emoji(s: str) -> bool:
    """Accept one emoji grapheme: base [+VS16] [+skin tone], ZWJ-joined
    sequences of such parts, or a two-codepoint flag."""
    if not s or len(s) > 16:
        return False
    cps = [ord(c) for c in s]
    if all(0x1F1E6 <= cp <= 0x1F1FF for cp in cps):
        return len(cps) == 2
    parts: list[list[int]] = [[]]
    for cp in cps:
        if cp == _ZWJ:
            if not parts[-1]:
                return False
            parts.append([])
        else:
            parts[-1].append(cp)
    for part in parts:
        if not part or not _is_base(part[0]):
            return False
        for cp in part[1:]:
            if cp != _VS16 and not (_SKIN[0] <= cp <= _SKIN[1]):
                return False
    return True


def _validate_text(text: Any) -> str:
    if not isinstance(text, str) or not (1 <= len(text) <= MAX_TEXT_LEN):
        raise ProtocolError(VALIDATION_ERROR, f"note text must be 1-{MAX_TEXT_LEN} chars")
    return text


class NotesService:
    """CRUD + reactions over a store; all timestamps come from the clock."""

    def __init__(self, store: Store, clock: Clock, rng: Optional[random.Random] = None):
        self._store = store
        self._clock = clock
        self._rng = rng

    def _key(self, note_id: str) -> str:
        return f"note/{note_id}"

    def _load(self, note_id: str) -> tuple[dict[str, Any], int]:
        rec = self._store.get(self._key(note_id))
        if rec is None or rec.value.get("deleted"):
            raise ProtocolError(NOT_FOUND, f"no note {note_id!r}")
        return rec.value, rec.version

    def create(self, courier_id: str, position: tuple[float, float], text: str) -> dict[str, Any]:
        geo.validate_lon_lat(position[0], position[1])
        _validate_text(text)
        now = self._clock.now()
        note = {
            "locationNoteId": new_uuid(self._rng),
            "authorCourierId": courier_id,
            "position": {"lon": position[0], "lat": position[1]},
            "text": text,
            "createdAt": to_iso(now),
            "updatedAt": to_iso(now),
            "reactions": {},
            "deleted": False,
        }
        self._store.put(self._key(note["locationNoteId"]), note, None)
        return note

    def get(self, note_id: str) -> dict[str, Any]:
        note, _ = self._load(note_id)
        return note

    def update(self, courier_id: str, note_id: str, new_text: str) -> dict[str, Any]:
        note, version = self._load(note_id)
        if note["authorCourierId"] != courier_id:
            raise ProtocolError(FORBIDDEN_ACTOR, "only the author may edit a note")
        _validate_text(new_text)
        note["text"] = new_text
        note["updatedAt"] = to_iso(self._clock.now())
        self._store.put(self._key(note_id), note, version)
        return note

    def delete(self, courier_id: str, note_id: str) -> None:
        note, version = self._load(note_id)
        if note["authorCourierId"] != courier_id:
            raise ProtocolError(FORBIDDEN_ACTOR, "only the author may delete a note")
        note["deleted"] = True
        note["updatedAt"] = to_iso(self._clock.now())
        self._store.put(self._key(note_id), note, version)

    def react(self, courier_id: str, note_id: str, emoji: str) -> dict[str, Any]:
        if not is_single_emoji(emoji):
            raise ProtocolError(VALIDATION_ERROR, "reaction must be a single emoji")
        note, version = self._load(note_id)
        reactors = set(note["reactions"].get(emoji, []))
        if courier_id in reactors:
            reactors.discard(courier_id)
        else:
            reactors.add(courier_id)
        if reactors:
            note["reactions"][emoji] = sorted(reactors)
        else:
            note["reactions"].pop(emoji, None)
        self._store.put(self._key(note_id), note, version)
        return note

    def list_mine(self, courier_id: str) -> list[dict[str, Any]]:
        notes = [
            rec.value
            for _, rec in self._store.scan("note/")
            if not rec.value["deleted"] and rec.value["authorCourierId"] == courier_id
        ]
        notes.sort(key=lambda n: (n["createdAt"], n["locationNoteId"]))
        notes.reverse()
        return notes

    def list_near(self, position: tuple[float, float], radius_m: float) -> list[dict[str, Any]]:
        geo.validate_lon_lat(position[0], position[1])
        if radius_m < 0:
            raise ProtocolError(VALIDATION_ERROR, "radius must be non-negative")
        hits = []
        for _, rec in self._store.scan("note/"):
            note = rec.value
            if note["deleted"]:
                continue
            d = geo.haversine_m(position, (note["position"]["lon"], note["position"]["lat"]))
            if d <= radius_m:
                hits.append((d, note["locationNoteId"], note))
        hits.sort(key=lambda t: (t[0], t[1]))
        return [note for _, _, note in hits]
