"""Anonymized CSV export and aggregate metrics over an instance's deliveries.

Identifiers leave the instance only as salted hashes, coordinates only as
cells truncated to two decimal places (roughly 1.1 km). The salt is random
per export by default, so rows can be joined within one file but not across
files; auditors who need longitudinal linkage can pin a salt explicitly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import secrets
from datetime import datetime
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from typing import Any, Iterable, Optional

from .clock import from_iso, to_iso
from .errors import EMPTY_RANGE, ProtocolError
from .lifecycle import Delivery
from .money import CURRENCY_EXPONENT, format_minor

CSV_HEADER = (
    "deliveryIdHash,courierIdHash,status,createdAt,deliveredAt,pickupCell,"
    "dropoffCell,distance,distanceUnit,payout,currency,durationMinutes"
)
COLUMNS = CSV_HEADER.split(",")

_CELL_STEP = Decimal("0.01")
_TWO_DP = Decimal("0.01")


def make_salt(rng=None) -> str:
    if rng is None:
        return secrets.token_hex(16)
    return "".join(rng.choice("0123456789abcdef") for _ in range(32))


def hash_id(raw: str, salt: str) -> str:
    return hashlib.sha256(f"{salt}:{raw}".encode("utf-8")).hexdigest()


def truncate_coord(value: float) -> str:
    """Two decimal places, truncated toward zero (digits dropped, not rounded)."""
    return str(Decimal(str(value)).quantize(_CELL_STEP, rounding=ROUND_DOWN))


def cell_of(lon: float, lat: float) -> str:
    return f"{truncate_coord(lon)},{truncate_coord(lat)}"


def _check_range(from_utc: datetime, to_utc: datetime) -> None:
    if from_utc >= to_utc:
        raise ProtocolError(EMPTY_RANGE, "range start must precede range end")


def _delivered_at(d: Delivery) -> Optional[datetime]:
    for entry in reversed(d.history):
        if entry["event"] == "MARK_DELIVERED":
            return from_iso(entry["at"])
    return None


def disclosure_rows(
    deliveries: Iterable[Delivery],
    from_utc: datetime,
    to_utc: datetime,
    salt: str,
) -> list[dict[str, str]]:
    """One anonymized row per delivery created inside [from, to)."""
    _check_range(from_utc, to_utc)
    rows = []
    for d in deliveries:
        created = from_iso(d.createdAt)
        if not (from_utc <= created < to_utc):
            continue
        delivered = _delivered_at(d)
        duration = ""
        if delivered is not None:
            minutes = Decimal((delivered - created).total_seconds()) / 60
            duration = str(minutes.quantize(_TWO_DP, rounding=ROUND_HALF_UP))
        rows.append(
            {
                "deliveryIdHash": hash_id(d.deliveryId, salt),
                "courierIdHash": hash_id(d.courierId, salt) if d.courierId else "",
                "status": d.status.value,
                "createdAt": d.createdAt,
                "deliveredAt": to_iso(delivered) if delivered is not None else "",
                "pickupCell": cell_of(d.pickupLocation.lon, d.pickupLocation.lat),
                "dropoffCell": cell_of(d.dropoffLocation.lon, d.dropoffLocation.lat),
                "distance": "" if d.distance is None else str(d.distance),
                "distanceUnit": d.distanceUnit or "",
                "payout": format_minor(d.payoutMinor, d.currency),
                "currency": d.currency,
                "durationMinutes": duration,
            }
        )
    rows.sort(key=lambda r: (r["createdAt"], r["deliveryIdHash"]))
    return rows


def export_csv(
    deliveries: Iterable[Delivery],
    from_utc: datetime,
    to_utc: datetime,
    salt: Optional[str] = None,
    rng=None,
) -> str:
    rows = disclosure_rows(deliveries, from_utc, to_utc, salt or make_salt(rng))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([r[c] for c in COLUMNS])
    return buf.getvalue()


def _tallies(
    deliveries: Iterable[Delivery], from_utc: datetime, to_utc: datetime
) -> dict[str, Any]:
    """Raw sums behind the metric ratios; additive over disjoint ranges."""
    payout_sum = 0
    delivered = 0
    duration_min_sum = Decimal(0)
    rejected = 0
    dispatched = 0
    active_pairs: set[tuple[str, str]] = set()
    currency = None
    for d in deliveries:
        created = from_iso(d.createdAt)
        for entry in d.history:
            at = from_iso(entry["at"])
            if not (from_utc <= at < to_utc):
                continue
            if entry["event"] == "DISPATCH":
                dispatched += 1
            elif entry["event"] == "REJECT":
                rejected += 1
            if entry["event"] == "MARK_DELIVERED":
                payout_sum += d.payoutMinor
                delivered += 1
                duration_min_sum += Decimal((at - created).total_seconds()) / 60
                currency = currency or d.currency
            actor = entry.get("actor", "")
            if actor.startswith("COURIER:"):
                hour = at.replace(minute=0, second=0, microsecond=0)
                active_pairs.add((actor, hour.isoformat()))
    return {
        "payoutMinorSum": payout_sum,
        "delivered": delivered,
        "durationMinutesSum": duration_min_sum,
        "rejected": rejected,
        "dispatched": dispatched,
        "activePairs": active_pairs,
        "currency": currency,
    }


def metrics(
    deliveries: Iterable[Delivery], from_utc: datetime, to_utc: datetime
) -> dict[str, Any]:
    """Aggregates for the admin dashboard; absent (None) instead of NaN."""
    _check_range(from_utc, to_utc)
    t = _tallies(deliveries, from_utc, to_utc)
    currency = t["currency"] or "USD"
    active_hours = len(t["activePairs"])

    def money_ratio(minor: int, denom: int) -> Optional[str]:
        if denom == 0:
            return None
        exponent = CURRENCY_EXPONENT.get(currency, 2)
        scaled = Decimal(minor).scaleb(-exponent) / Decimal(denom)
        q = Decimal(1).scaleb(-exponent) if exponent else Decimal(1)
        return str(scaled.quantize(q, rounding=ROUND_HALF_UP))

    return {
        "deliveriesCompleted": t["delivered"],
        "avgHourlyEarnings": money_ratio(t["payoutMinorSum"], active_hours),
        "avgPayoutPerDelivery": money_ratio(t["payoutMinorSum"], t["delivered"]),
        "avgDurationMinutes": (
            None
            if t["delivered"] == 0
            else float(
                (t["durationMinutesSum"] / t["delivered"]).quantize(
                    _TWO_DP, rounding=ROUND_HALF_UP
                )
            )
        ),
        "rejectionRate": (
            None if t["dispatched"] == 0 else round(t["rejected"] / t["dispatched"], 6)
        ),
    }
