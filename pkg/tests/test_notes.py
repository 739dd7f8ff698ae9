from __future__ import annotations

from datetime import timedelta

import pytest

from couriermesh.clock import VirtualClock
from couriermesh.errors import FORBIDDEN_ACTOR, NOT_FOUND, VALIDATION_ERROR, ProtocolError
from couriermesh.notes import NotesService, is_single_emoji
from couriermesh.store import MemoryStore

from .helpers import T0
from .oracles import haversine_asin_m


@pytest.fixture
def svc():
    return NotesService(MemoryStore(), VirtualClock(T0))


def test_create_and_get(svc):
    note = svc.create("c1", (-74.66, 40.35), "loading dock behind building")
    assert note["reactions"] == {}
    assert svc.get(note["locationNoteId"])["text"] == "loading dock behind building"


@pytest.mark.parametrize(
    "pos,text",
    [((-74.66, 91.0), "ok"), ((-181.0, 40.0), "ok"), ((-74.66, 40.35), ""), ((-74.66, 40.35), "x" * 501)],
)
def test_create_validation(svc, pos, text):
    with pytest.raises(ProtocolError) as ei:
        svc.create("c1", pos, text)
    assert ei.value.code in (VALIDATION_ERROR, "INVALID_GEOMETRY")


def test_text_boundary_500_ok(svc):
    note = svc.create("c1", (-74.66, 40.35), "x" * 500)
    assert len(note["text"]) == 500


def test_update_preserves_reactions_and_bumps_updated(svc):
    note = svc.create("c1", (-74.66, 40.35), "old")
    svc.react("c2", note["locationNoteId"], "👍")
    svc._clock.advance_by(timedelta(minutes=5))
    out = svc.update("c1", note["locationNoteId"], "new")
    assert out["text"] == "new"
    assert out["reactions"] == {"👍": ["c2"]}
    assert out["updatedAt"] > out["createdAt"]


def test_update_requires_author(svc):
    note = svc.create("c1", (-74.66, 40.35), "mine")
    with pytest.raises(ProtocolError) as ei:
        svc.update("c2", note["locationNoteId"], "stolen")
    assert ei.value.code == FORBIDDEN_ACTOR


def test_delete_soft_and_hidden(svc):
    note = svc.create("c1", (-74.66, 40.35), "gone soon")
    with pytest.raises(ProtocolError):
        svc.delete("c2", note["locationNoteId"])
    svc.delete("c1", note["locationNoteId"])
    with pytest.raises(ProtocolError) as ei:
        svc.get(note["locationNoteId"])
    assert ei.value.code == NOT_FOUND
    assert svc.list_mine("c1") == []
    assert svc.list_near((-74.66, 40.35), 10_000) == []
    with pytest.raises(ProtocolError):
        svc.react("c2", note["locationNoteId"], "👍")


def test_react_accumulates_by_courier(svc):
    note = svc.create("c1", (-74.66, 40.35), "tip")
    svc.react("c2", note["locationNoteId"], "👍")
    out = svc.react("c3", note["locationNoteId"], "👍")
    assert out["reactions"] == {"👍": ["c2", "c3"]}


def test_react_toggle_involution(svc):
    note = svc.create("c1", (-74.66, 40.35), "tip")
    svc.react("c2", note["locationNoteId"], "👍")
    out = svc.react("c2", note["locationNoteId"], "👍")
    assert out["reactions"] == {}
    for _ in range(4):
        out = svc.react("c2", note["locationNoteId"], "🅿️" if False else "👍")
    assert out["reactions"] == {}


def test_react_rejects_plain_text(svc):
    note = svc.create("c1", (-74.66, 40.35), "tip")
    with pytest.raises(ProtocolError) as ei:
        svc.react("c2", note["locationNoteId"], "thanks")
    assert ei.value.code == VALIDATION_ERROR


@pytest.mark.parametrize("ok", ["👍", "👍🏽", "❤️", "🚲", "🇺🇸", "👩‍🚀", "⭐"])
def test_emoji_accepted(ok):
    assert is_single_emoji(ok)


@pytest.mark.parametrize("bad", ["", "thanks", "a", "👍👍", "👍 ", "1", "🇺🇸🇺🇸", "x" * 20])
def test_emoji_rejected(bad):
    assert not is_single_emoji(bad)


def test_list_mine_newest_first(svc):
    a = svc.create("c1", (-74.66, 40.35), "first")
    svc._clock.advance_by(timedelta(minutes=1))
    b = svc.create("c1", (-74.66, 40.35), "second")
    svc.create("c2", (-74.66, 40.35), "other courier")
    mine = svc.list_mine("c1")
    assert [n["locationNoteId"] for n in mine] == [b["locationNoteId"], a["locationNoteId"]]


def test_list_near_radius_and_order(svc):
    center = (-74.6600, 40.3480)
    near = svc.create("c1", (-74.6600, 40.3489), "≈100m north")
    far = svc.create("c1", (-74.6600, 40.3498), "≈200m north")
    d_near = haversine_asin_m(center, (-74.6600, 40.3489))
    d_far = haversine_asin_m(center, (-74.6600, 40.3498))
    assert d_near < 150 < d_far  # fixture sanity against the distance oracle
    hits = svc.list_near(center, 150)
    assert [n["locationNoteId"] for n in hits] == [near["locationNoteId"]]
    both = svc.list_near(center, 300)
    assert [n["locationNoteId"] for n in both] == [near["locationNoteId"], far["locationNoteId"]]


def test_list_near_radius_zero_inclusive(svc):
    note = svc.create("c1", (-74.66, 40.35), "right here")
    assert [n["locationNoteId"] for n in svc.list_near((-74.66, 40.35), 0)] == [
        note["locationNoteId"]
    ]


def test_list_near_sorted_by_true_distance(svc):
    import random

    rng = random.Random(3)
    center = (-74.6600, 40.3480)
    for i in range(30):
        svc.create("c1", (center[0] + rng.uniform(-0.01, 0.01), center[1] + rng.uniform(-0.01, 0.01)), f"n{i}")
    hits = svc.list_near(center, 5000)
    dists = [haversine_asin_m(center, (n["position"]["lon"], n["position"]["lat"])) for n in hits]
    assert dists == sorted(dists)
    assert len(hits) == 30
