"""Versioned key-value persistence with optimistic concurrency.

Every record carries a monotonically increasing integer version. Writes are
compare-and-set: the caller passes the version it read, and the store rejects
the write with VERSION_CONFLICT if someone got there first. ``scan`` returns a
point-in-time snapshot taken under the store lock, so iteration never observes
a half-applied write.

Two backends share the contract:

* MemoryStore: dict behind a lock, values deep-copied via JSON round-trip.
* FileStore: MemoryStore semantics plus an append-only log for durability.
  See docs/storage.md for the on-disk format.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from typing import Any, Callable, Iterator, Optional

from .errors import CORRUPT_RECORD, NOT_FOUND, VERSION_CONFLICT, ProtocolError

JsonValue = Any

_HEADER = struct.Struct("<II")  # payload length, crc32 of payload


class Versioned:
    __slots__ = ("value", "version")

    def __init__(self, value: JsonValue, version: int):
        self.value = value
        self.version = version

    def __repr__(self) -> str:  # pragma: no cover
        return f"Versioned(version={self.version}, value={self.value!r})"


def _copy(value: JsonValue) -> JsonValue:
    # JSON round-trip both deep-copies and rejects non-serializable values early.
    return json.loads(json.dumps(value))


class Store:
    """In-memory reference implementation; subclasses hook persistence."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._data: dict[str, Versioned] = {}

    # -- subclass hooks -----------------------------------------------------

    def _persist(self, key: str, value: JsonValue, version: int) -> None:
        """Called under the lock after every accepted write."""

    # -- contract -----------------------------------------------------------

    def get(self, key: str) -> Optional[Versioned]:
        with self._lock:
            rec = self._data.get(key)
            if rec is None or rec.value is None:
                return None
            return Versioned(_copy(rec.value), rec.version)

    def require(self, key: str) -> Versioned:
        rec = self.get(key)
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no record for key {key!r}")
        return rec

    def put(self, key: str, value: JsonValue, expected_version: Optional[int]) -> int:
        """CAS write. ``expected_version=None`` asserts the key is absent.

        Returns the new version. Raises VERSION_CONFLICT when the stored
        version differs from what the caller read.
        """
        value = _copy(value)
        with self._lock:
            rec = self._data.get(key)
            current = rec.version if rec is not None and rec.value is not None else None
            if current != expected_version:
                raise ProtocolError(
                    VERSION_CONFLICT,
                    f"version conflict on {key!r}: expected {expected_version}, found {current}",
                    {"key": key, "expected": expected_version, "found": current},
                )
            new_version = (rec.version if rec is not None else 0) + 1
            self._data[key] = Versioned(value, new_version)
            self._persist(key, value, new_version)
            return new_version

    def delete(self, key: str, expected_version: int) -> None:
        """CAS tombstone; the key reads as absent afterwards."""
        with self._lock:
            rec = self._data.get(key)
            current = rec.version if rec is not None and rec.value is not None else None
            if current != expected_version:
                raise ProtocolError(
                    VERSION_CONFLICT,
                    f"version conflict on {key!r}: expected {expected_version}, found {current}",
                    {"key": key, "expected": expected_version, "found": current},
                )
            new_version = rec.version + 1  # type: ignore[union-attr]
            self._data[key] = Versioned(None, new_version)
            self._persist(key, None, new_version)

    def update(self, key: str, fn: Callable[[JsonValue], JsonValue], retries: int = 64) -> JsonValue:
        """Read-modify-write loop for callers that just want the final state."""
        for _ in range(retries):
            rec = self.require(key)
            new_value = fn(rec.value)
            try:
                self.put(key, new_value, rec.version)
                return new_value
            except ProtocolError as e:
                if e.code != VERSION_CONFLICT:
                    raise
        raise ProtocolError(VERSION_CONFLICT, f"update contention on {key!r} exceeded retries")

    def scan(self, prefix: str = "") -> Iterator[tuple[str, Versioned]]:
        """Snapshot iteration in key order; concurrent writes never bleed in."""
        with self._lock:
            snapshot = [
                (k, Versioned(_copy(r.value), r.version))
                for k, r in sorted(self._data.items())
                if r.value is not None and k.startswith(prefix)
            ]
        return iter(snapshot)

    def close(self) -> None:
        pass


class MemoryStore(Store):
    pass


class FileStore(Store):
    """Append-only log-backed store.

    Record framing: [u32 payload length][u32 crc32][payload], little-endian,
    payload = UTF-8 JSON {"k", "v", "ver"}. On open the log is replayed;
    a torn or corrupt tail (crash mid-append) is truncated at the last good
    record. Corruption before the tail raises CORRUPT_RECORD rather than
    silently dropping acknowledged writes.
    """

    def __init__(self, path: str):
        super().__init__()
        self.path = path
        os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
        self._replay()
        self._fh = open(self.path, "ab")

    def _replay(self) -> None:
        if not os.path.exists(self.path):
            return
        good_end = 0
        with open(self.path, "rb") as fh:
            data = fh.read()
        offset = 0
        total = len(data)
        while offset < total:
            if offset + _HEADER.size > total:
                break  # torn header at tail
            length, crc = _HEADER.unpack_from(data, offset)
            start = offset + _HEADER.size
            end = start + length
            if end > total:
                break  # torn payload at tail
            payload = data[start:end]
            if zlib.crc32(payload) != crc:
                if end >= total:
                    break  # corrupt final record: treat as torn
                raise ProtocolError(
                    CORRUPT_RECORD, f"crc mismatch at offset {offset} in {self.path}"
                )
            rec = json.loads(payload.decode("utf-8"))
            self._data[rec["k"]] = Versioned(rec["v"], rec["ver"])
            offset = end
            good_end = end
        if good_end < total:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    def _persist(self, key: str, value: JsonValue, version: int) -> None:
        payload = json.dumps(
            {"k": key, "v": value, "ver": version}, separators=(",", ":"), sort_keys=True
        ).encode("utf-8")
        self._fh.write(_HEADER.pack(len(payload), zlib.crc32(payload)) + payload)
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def compact(self) -> None:
        """Rewrite the log keeping only each key's latest state."""
        with self._lock:
            tmp = self.path + ".compact"
            with open(tmp, "wb") as fh:
                for key in sorted(self._data):
                    rec = self._data[key]
                    if rec.value is None:
                        continue
                    payload = json.dumps(
                        {"k": key, "v": rec.value, "ver": rec.version},
                        separators=(",", ":"),
                        sort_keys=True,
                    ).encode("utf-8")
                    fh.write(_HEADER.pack(len(payload), zlib.crc32(payload)) + payload)
                fh.flush()
                os.fsync(fh.fileno())
            self._fh.close()
            os.replace(tmp, self.path)
            self._fh = open(self.path, "ab")

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()
