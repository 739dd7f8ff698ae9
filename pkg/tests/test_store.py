from __future__ import annotations

import os
import struct
import threading

import pytest

from couriermesh.errors import CORRUPT_RECORD, NOT_FOUND, VERSION_CONFLICT, ProtocolError
from couriermesh.store import FileStore, MemoryStore


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path):
    if request.param == "memory":
        s = MemoryStore()
    else:
        s = FileStore(str(tmp_path / "data.log"))
    yield s
    s.close()


def test_get_missing_returns_none(store):
    assert store.get("nope") is None
    with pytest.raises(ProtocolError) as ei:
        store.require("nope")
    assert ei.value.code == NOT_FOUND


def test_put_and_get(store):
    v1 = store.put("a", {"x": 1}, None)
    assert v1 == 1
    rec = store.get("a")
    assert rec.value == {"x": 1} and rec.version == 1


def test_cas_rejects_stale_version(store):
    store.put("a", {"x": 1}, None)
    store.put("a", {"x": 2}, 1)
    with pytest.raises(ProtocolError) as ei:
        store.put("a", {"x": 3}, 1)
    assert ei.value.code == VERSION_CONFLICT
    assert store.get("a").value == {"x": 2}


def test_cas_create_rejects_existing(store):
    store.put("a", 1, None)
    with pytest.raises(ProtocolError) as ei:
        store.put("a", 2, None)
    assert ei.value.code == VERSION_CONFLICT


def test_returned_values_are_isolated_copies(store):
    store.put("a", {"nested": [1, 2]}, None)
    rec = store.get("a")
    rec.value["nested"].append(3)
    assert store.get("a").value == {"nested": [1, 2]}


def test_delete_tombstones(store):
    store.put("a", 1, None)
    store.delete("a", 1)
    assert store.get("a") is None
    # re-create continues the version sequence
    v = store.put("a", 2, None)
    assert v == 3


def test_scan_prefix_and_order(store):
    store.put("del/2", "b", None)
    store.put("del/1", "a", None)
    store.put("courier/1", "c", None)
    keys = [k for k, _ in store.scan("del/")]
    assert keys == ["del/1", "del/2"]


def test_scan_is_snapshot(store):
    for i in range(5):
        store.put(f"k{i}", i, None)
    it = store.scan()
    store.put("k9", 9, None)
    assert [k for k, _ in it] == [f"k{i}" for i in range(5)]


def test_update_retries_to_final_state(store):
    store.put("ctr", 0, None)
    out = store.update("ctr", lambda v: v + 1)
    assert out == 1 and store.get("ctr").value == 1


def test_file_store_reload(tmp_path):
    path = str(tmp_path / "data.log")
    s = FileStore(path)
    s.put("a", {"x": 1}, None)
    s.put("a", {"x": 2}, 1)
    s.put("b", "hello", None)
    s.delete("b", 1)
    s.close()

    s2 = FileStore(path)
    assert s2.get("a").value == {"x": 2}
    assert s2.get("a").version == 2
    assert s2.get("b") is None
    s2.close()


def test_file_store_truncates_torn_tail(tmp_path):
    path = str(tmp_path / "data.log")
    s = FileStore(path)
    s.put("a", 1, None)
    s.put("b", 2, None)
    s.close()
    # simulate a crash mid-append: chop bytes off the final record
    size = os.path.getsize(path)
    with open(path, "r+b") as fh:
        fh.truncate(size - 3)
    s2 = FileStore(path)
    assert s2.get("a").value == 1
    assert s2.get("b") is None
    # the tail is clean again: new writes survive a reload
    s2.put("c", 3, None)
    s2.close()
    s3 = FileStore(path)
    assert s3.get("c").value == 3
    s3.close()


def test_file_store_rejects_interior_corruption(tmp_path):
    path = str(tmp_path / "data.log")
    s = FileStore(path)
    s.put("a", 1, None)
    s.put("b", 2, None)
    s.close()
    with open(path, "r+b") as fh:
        data = fh.read()
        length = struct.unpack_from("<I", data, 0)[0]
        # flip a byte inside the first record's payload
        fh.seek(8 + length - 1)
        fh.write(b"\xff")
    with pytest.raises(ProtocolError) as ei:
        FileStore(path)
    assert ei.value.code == CORRUPT_RECORD


def test_file_store_compact(tmp_path):
    path = str(tmp_path / "data.log")
    s = FileStore(path)
    for i in range(50):
        expected = None if i == 0 else i
        s.put("a", {"i": i}, expected)
    s.put("gone", 1, None)
    s.delete("gone", 1)
    before = os.path.getsize(path)
    s.compact()
    after = os.path.getsize(path)
    assert after < before
    assert s.get("a").value == {"i": 49}
    assert s.get("a").version == 50
    s.close()
    s2 = FileStore(path)
    assert s2.get("a").value == {"i": 49}
    assert s2.get("gone") is None
    s2.close()


def test_concurrent_cas_single_winner(store):
    store.put("slot", {"owner": None}, None)
    rec = store.get("slot")
    wins: list[str] = []
    errs: list[str] = []
    barrier = threading.Barrier(8)

    def claim(name: str):
        barrier.wait()
        try:
            store.put("slot", {"owner": name}, rec.version)
            wins.append(name)
        except ProtocolError as e:
            errs.append(e.code)

    threads = [threading.Thread(target=claim, args=(f"t{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(wins) == 1
    assert errs == [VERSION_CONFLICT] * 7
    assert store.get("slot").value == {"owner": wins[0]}
