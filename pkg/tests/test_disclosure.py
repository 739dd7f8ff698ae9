"""Export anonymization, CSV shape, and metric arithmetic."""

import csv
import io
import random
import re
from dataclasses import replace
from datetime import timedelta
from decimal import Decimal

import pytest

from couriermesh.clock import to_iso
from couriermesh.disclosure import (
    _tallies,
    cell_of,
    export_csv,
    hash_id,
    make_salt,
    metrics,
    truncate_coord,
)
from couriermesh.errors import EMPTY_RANGE, ProtocolError
from couriermesh.lifecycle import ADMIN, TransitionEvent, courier, transition

from .helpers import T0, make_delivery
from .oracles import trunc2_str

EXPECTED_HEADER = (
    "deliveryIdHash,courierIdHash,status,createdAt,deliveredAt,pickupCell,"
    "dropoffCell,distance,distanceUnit,payout,currency,durationMinutes"
)

HOUR = timedelta(hours=1)
RANGE = (T0 - HOUR, T0 + timedelta(hours=8))

_E = TransitionEvent
_HAPPY = [
    _E.ACCEPT,
    _E.ARRIVED_AT_PICKUP,
    _E.MARK_PICKED_UP,
    _E.MARK_ON_THE_WAY,
    _E.ARRIVED_AT_DROPOFF,
    _E.MARK_DELIVERED,
]


def created_at(d, when):
    return replace(d, createdAt=to_iso(when), updatedAt=to_iso(when))


def delivered_delivery(did, cid, created, delivered, payout=1260):
    d = created_at(make_delivery(did, payout_minor=payout), created)
    d = transition(d, _E.DISPATCH, ADMIN, created, target_courier_id=cid)
    span = (delivered - created) / len(_HAPPY)
    for i, ev in enumerate(_HAPPY, start=1):
        d = transition(d, ev, courier(cid), created + span * i)
    return d


def rejected_delivery(did, cid, when):
    d = created_at(make_delivery(did), when)
    d = transition(d, _E.DISPATCH, ADMIN, when, target_courier_id=cid)
    return transition(d, _E.REJECT, courier(cid), when + timedelta(minutes=1))


def dispatched_delivery(did, cid, when):
    d = created_at(make_delivery(did), when)
    return transition(d, _E.DISPATCH, ADMIN, when, target_courier_id=cid)


def parse(doc):
    return list(csv.reader(io.StringIO(doc)))


# -- cells and hashes ---------------------------------------------------------


def test_coordinate_truncation_matches_string_oracle():
    rng = random.Random(11)
    for _ in range(500):
        v = rng.uniform(-180, 180)
        assert truncate_coord(v) == trunc2_str(v), v
    assert truncate_coord(-74.6675) == "-74.66"  # toward zero, not floor
    assert cell_of(-74.6675, 40.3435) == "-74.66,40.34"


def test_hash_is_salted_and_stable():
    assert hash_id("d-1", "aa") == hash_id("d-1", "aa")
    assert hash_id("d-1", "aa") != hash_id("d-1", "bb")
    assert hash_id("d-1", "aa") != hash_id("d-2", "aa")
    assert re.fullmatch(r"[0-9a-f]{64}", hash_id("d-1", "aa"))


def test_make_salt_is_seedable():
    assert make_salt(random.Random(3)) == make_salt(random.Random(3))
    assert make_salt(random.Random(3)) != make_salt(random.Random(4))


# -- export shape -------------------------------------------------------------


def test_empty_instance_exports_header_only():
    doc = export_csv([], *RANGE, salt="ab")
    assert doc == EXPECTED_HEADER + "\n"


def test_out_of_range_rows_are_dropped():
    ds = [
        delivered_delivery("d-1", "c-1", T0, T0 + HOUR),
        delivered_delivery("d-2", "c-1", T0 + HOUR, T0 + 2 * HOUR),
        delivered_delivery("d-3", "c-1", T0 + 9 * HOUR, T0 + 10 * HOUR),
    ]
    rows = parse(export_csv(ds, *RANGE, salt="ab"))
    assert len(rows) == 1 + 2  # header + the two in-range creations


def test_range_is_half_open_on_created_at():
    ds = [created_at(make_delivery("d-1"), T0), created_at(make_delivery("d-2"), T0 + HOUR)]
    rows = parse(export_csv(ds, T0, T0 + HOUR, salt="ab"))
    assert len(rows) == 2  # d-2 sits exactly on the exclusive end


def test_rows_sorted_by_created_then_hash():
    ds = [
        created_at(make_delivery("d-b"), T0),
        created_at(make_delivery("d-a"), T0),
        created_at(make_delivery("d-c"), T0 - timedelta(minutes=5)),
    ]
    rows = parse(export_csv(ds, *RANGE, salt="ab"))[1:]
    assert rows[0][3] < rows[1][3] or rows[0][3] == rows[1][3]
    assert [r[3] for r in rows] == sorted(r[3] for r in rows)
    same_created = [r[0] for r in rows if r[3] == to_iso(T0)]
    assert same_created == sorted(same_created)


def test_delivered_row_fields():
    d = delivered_delivery("d-1", "c-1", T0, T0 + timedelta(minutes=30))
    rows = parse(export_csv([d], *RANGE, salt="ab"))
    header, row = rows[0], rows[1]
    assert header == EXPECTED_HEADER.split(",")
    got = dict(zip(header, row))
    assert got["status"] == "DELIVERED"
    assert got["createdAt"] == to_iso(T0)
    assert got["deliveredAt"] == to_iso(T0 + timedelta(minutes=30))
    assert got["durationMinutes"] == "30.00"
    assert got["payout"] == "12.60"
    assert got["currency"] == "USD"
    assert got["pickupCell"] == "-74.66,40.34"
    assert got["dropoffCell"] == "-74.65,40.34"
    assert got["deliveryIdHash"] == hash_id("d-1", "ab")
    assert got["courierIdHash"] == hash_id("c-1", "ab")


def test_undelivered_row_leaves_delivered_fields_empty():
    d = dispatched_delivery("d-1", "c-1", T0)
    got = dict(zip(*parse(export_csv([d], *RANGE, salt="ab"))[:2]))
    assert got["status"] == "DISPATCHED"
    assert got["deliveredAt"] == ""
    assert got["durationMinutes"] == ""


def test_payout_column_resums_to_ledger_total():
    rng = random.Random(5)
    ds = []
    expected = 0
    for i in range(40):
        created = T0 + timedelta(minutes=rng.randint(0, 300))
        payout = rng.randint(100, 5000)
        ds.append(
            delivered_delivery(f"d-{i}", f"c-{i % 5}", created, created + timedelta(minutes=20), payout)
        )
        expected += payout
    rows = parse(export_csv(ds, *RANGE, salt="ab"))[1:]
    total = sum(Decimal(r[9]) for r in rows)
    assert total == Decimal(expected) / 100


def test_round_trip_is_byte_identical():
    ds = [
        delivered_delivery("d-1", "c-1", T0, T0 + HOUR),
        rejected_delivery("d-2", "c-2", T0 + timedelta(minutes=3)),
    ]
    doc = export_csv(ds, *RANGE, salt="ab")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in parse(doc):
        w.writerow(row)
    assert buf.getvalue() == doc


def test_pinned_salt_makes_exports_reproducible():
    ds = [delivered_delivery("d-1", "c-1", T0, T0 + HOUR)]
    assert export_csv(ds, *RANGE, salt="feed") == export_csv(ds, *RANGE, salt="feed")
    a = export_csv(ds, *RANGE, rng=random.Random(1))
    b = export_csv(ds, *RANGE, rng=random.Random(2))
    assert a != b  # fresh salt per export: rows cannot be joined across files


def test_empty_range_is_rejected():
    for bad in (RANGE[0], RANGE[0] - HOUR):
        with pytest.raises(ProtocolError) as err:
            export_csv([], RANGE[0], bad)
        assert err.value.code == EMPTY_RANGE
        with pytest.raises(ProtocolError):
            metrics([], RANGE[0], bad)


# -- anonymization scan -------------------------------------------------------

UUID_RE = re.compile(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}", re.I)
PHONE_RES = [re.compile(r"\+?\d{7,}"), re.compile(r"\d{3}[-.\s]\d{3}[-.\s]\d{4}")]
CELL_RE = re.compile(r"^-?\d+\.\d{2},-?\d+\.\d{2}$")


def test_export_leaks_no_identifiers():
    rng = random.Random(9)
    raw_ids = []
    ds = []
    for i in range(25):
        did = f"{rng.getrandbits(32):08x}-beef-4abc-8def-{rng.getrandbits(48):012x}"
        cid = f"{rng.getrandbits(32):08x}-cafe-4abc-8def-{rng.getrandbits(48):012x}"
        raw_ids += [did, cid]
        created = T0 + timedelta(minutes=rng.randint(0, 200))
        ds.append(delivered_delivery(did, cid, created, created + timedelta(minutes=25)))
    doc = export_csv(ds, *RANGE, rng=rng)
    rows = parse(doc)
    header, data = rows[0], rows[1:]
    for raw in raw_ids:
        assert raw not in doc
    for row in data:
        got = dict(zip(header, row))
        assert CELL_RE.match(got["pickupCell"])
        assert CELL_RE.match(got["dropoffCell"])
        for col, value in got.items():
            assert not UUID_RE.search(value), (col, value)
            if col in ("deliveryIdHash", "courierIdHash"):
                # hashes are exactly 64 hex chars; digit runs inside are fine
                assert re.fullmatch(r"[0-9a-f]{64}", value)
                continue
            for pat in PHONE_RES:
                assert not pat.search(value), (col, value)


# -- metrics ------------------------------------------------------------------


def test_no_activity_yields_absent_metrics():
    m = metrics([], *RANGE)
    assert m == {
        "deliveriesCompleted": 0,
        "avgHourlyEarnings": None,
        "avgPayoutPerDelivery": None,
        "avgDurationMinutes": None,
        "rejectionRate": None,
    }


def test_two_deliveries_over_two_active_hours():
    # courier works one delivery entirely inside each of two separate hours
    ds = [
        delivered_delivery("d-1", "c-1", T0, T0 + timedelta(minutes=40), payout=1260),
        delivered_delivery("d-2", "c-1", T0 + 2 * HOUR, T0 + 2 * HOUR + timedelta(minutes=40), payout=1260),
    ]
    m = metrics(ds, *RANGE)
    assert m["deliveriesCompleted"] == 2
    assert m["avgHourlyEarnings"] == "12.60"
    assert m["avgPayoutPerDelivery"] == "12.60"
    assert m["avgDurationMinutes"] == 40.0


def test_rejection_rate_counts_dispatch_events():
    ds = [
        rejected_delivery("d-1", "c-1", T0),
        dispatched_delivery("d-2", "c-2", T0),
        dispatched_delivery("d-3", "c-3", T0),
        dispatched_delivery("d-4", "c-4", T0),
    ]
    assert metrics(ds, *RANGE)["rejectionRate"] == 0.25


def test_active_hours_deduplicate_within_hour():
    # six courier transitions all inside one hour: one active hour
    d = delivered_delivery("d-1", "c-1", T0, T0 + timedelta(minutes=50), payout=1000)
    t = _tallies([d], *RANGE)
    assert len(t["activePairs"]) == 1
    assert metrics([d], *RANGE)["avgHourlyEarnings"] == "10.00"


def test_tallies_are_additive_over_hour_aligned_ranges():
    rng = random.Random(21)
    ds = []
    for i in range(30):
        start = T0 + timedelta(minutes=rng.randint(0, 220))
        kind = rng.random()
        if kind < 0.5:
            ds.append(
                delivered_delivery(f"d-{i}", f"c-{rng.randint(0, 4)}", start,
                                   start + timedelta(minutes=rng.randint(10, 70)),
                                   payout=rng.randint(500, 3000))
            )
        elif kind < 0.8:
            ds.append(rejected_delivery(f"d-{i}", f"c-{rng.randint(0, 4)}", start))
        else:
            ds.append(dispatched_delivery(f"d-{i}", f"c-{rng.randint(0, 4)}", start))

    mid = T0 + 3 * HOUR
    end = T0 + 6 * HOUR
    a = _tallies(ds, T0, mid)
    b = _tallies(ds, mid, end)
    u = _tallies(ds, T0, end)
    assert u["delivered"] == a["delivered"] + b["delivered"]
    assert u["payoutMinorSum"] == a["payoutMinorSum"] + b["payoutMinorSum"]
    assert u["rejected"] == a["rejected"] + b["rejected"]
    assert u["dispatched"] == a["dispatched"] + b["dispatched"]
    assert u["durationMinutesSum"] == a["durationMinutesSum"] + b["durationMinutesSum"]
    assert a["activePairs"].isdisjoint(b["activePairs"])
    assert u["activePairs"] == a["activePairs"] | b["activePairs"]

    mu = metrics(ds, T0, end)
    assert mu["deliveriesCompleted"] == a["delivered"] + b["delivered"]
    if u["dispatched"]:
        assert mu["rejectionRate"] == round(
            (a["rejected"] + b["rejected"]) / (a["dispatched"] + b["dispatched"]), 6
        )
