"""Shared builders for test fixtures."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Any, Optional

from couriermesh.clock import to_iso
from couriermesh.lifecycle import (
    ADMIN,
    Delivery,
    DeliveryStatus,
    Place,
    TransitionEvent,
    TripPhase,
    courier,
    transition,
)

T0 = datetime(2025, 6, 1, 12, 0, 0, tzinfo=timezone.utc)

PICKUP = Place(-74.6600, 40.3480, "1 Depot Way")
DROPOFF = Place(-74.6565, 40.3435, "9 Elm St")


def make_delivery(
    delivery_id: str = "d-1",
    courier_id: Optional[str] = None,
    payout_minor: int = 1260,
    weight: Optional[float] = None,
    tags: tuple[str, ...] = (),
    pickup: Place = PICKUP,
    dropoff: Place = DROPOFF,
) -> Delivery:
    return Delivery(
        deliveryId=delivery_id,
        instanceDomain="hub.example",
        pickupLocation=pickup,
        dropoffLocation=dropoff,
        payoutMinor=payout_minor,
        currency="USD",
        createdAt=to_iso(T0),
        updatedAt=to_iso(T0),
        courierId=courier_id,
        itemWeightLbs=weight,
        merchantTags=tags,
        chainId="chain-" + delivery_id,
    )


# Event sequences that drive a CREATED delivery into each reachable state.
PATH_TO_STATE: dict[tuple[DeliveryStatus, TripPhase], list[TransitionEvent]] = {
    (DeliveryStatus.CREATED, TripPhase.NONE): [],
    (DeliveryStatus.DISPATCHED, TripPhase.NONE): [TransitionEvent.DISPATCH],
    (DeliveryStatus.ACCEPTED, TripPhase.NONE): [TransitionEvent.DISPATCH, TransitionEvent.ACCEPT],
    (DeliveryStatus.ACCEPTED, TripPhase.ARRIVED_AT_PICKUP): [
        TransitionEvent.DISPATCH,
        TransitionEvent.ACCEPT,
        TransitionEvent.ARRIVED_AT_PICKUP,
    ],
    (DeliveryStatus.PICKED_UP, TripPhase.NONE): [
        TransitionEvent.DISPATCH,
        TransitionEvent.ACCEPT,
        TransitionEvent.ARRIVED_AT_PICKUP,
        TransitionEvent.MARK_PICKED_UP,
    ],
    (DeliveryStatus.PICKED_UP, TripPhase.ON_THE_WAY): [
        TransitionEvent.DISPATCH,
        TransitionEvent.ACCEPT,
        TransitionEvent.ARRIVED_AT_PICKUP,
        TransitionEvent.MARK_PICKED_UP,
        TransitionEvent.MARK_ON_THE_WAY,
    ],
    (DeliveryStatus.PICKED_UP, TripPhase.ARRIVED_AT_DROPOFF): [
        TransitionEvent.DISPATCH,
        TransitionEvent.ACCEPT,
        TransitionEvent.ARRIVED_AT_PICKUP,
        TransitionEvent.MARK_PICKED_UP,
        TransitionEvent.MARK_ON_THE_WAY,
        TransitionEvent.ARRIVED_AT_DROPOFF,
    ],
    (DeliveryStatus.REJECTED, TripPhase.NONE): [TransitionEvent.DISPATCH, TransitionEvent.REJECT],
    (DeliveryStatus.CANCELED, TripPhase.NONE): [TransitionEvent.DISPATCH, TransitionEvent.CANCEL],
    (DeliveryStatus.DELIVERED, TripPhase.NONE): [
        TransitionEvent.DISPATCH,
        TransitionEvent.ACCEPT,
        TransitionEvent.ARRIVED_AT_PICKUP,
        TransitionEvent.MARK_PICKED_UP,
        TransitionEvent.MARK_ON_THE_WAY,
        TransitionEvent.ARRIVED_AT_DROPOFF,
        TransitionEvent.MARK_DELIVERED,
    ],
}


def make_quote_raw(base: datetime = T0, **overrides: Any) -> dict[str, Any]:
    """A valid wire-format quote anchored at `base`; override fields as needed."""
    raw = {
        "quote": "12.00",
        "quoteRangeFrom": "10.00",
        "quoteRangeTo": "18.00",
        "feePercentage": "10",
        "currency": "USD",
        "duration": 25,
        "distance": 1.2,
        "distanceUnit": "MILES",
        "pickupPhoneNumber": "+1-609-555-0100",
        "pickupName": "Corner Cafe",
        "dropoffPhoneNumber": "+1-609-555-0101",
        "dropoffName": "Dana R.",
        "expiresAt": to_iso(base + timedelta(hours=1)),
        "pickupReadyAt": to_iso(base + timedelta(minutes=10)),
        "pickupDeadlineAt": to_iso(base + timedelta(minutes=40)),
        "dropoffReadyAt": to_iso(base + timedelta(minutes=20)),
        "dropoffEta": to_iso(base + timedelta(minutes=50)),
        "dropoffDeadlineAt": to_iso(base + timedelta(minutes=70)),
        "orderTotalValue": "31.50",
        "pickupLocation": {"lon": PICKUP.lon, "lat": PICKUP.lat, "address": PICKUP.address},
        "dropoffLocation": {"lon": DROPOFF.lon, "lat": DROPOFF.lat, "address": DROPOFF.address},
    }
    raw.update(overrides)
    return raw


def drive_to(state: tuple[DeliveryStatus, TripPhase], courier_id: str = "c-1") -> Delivery:
    """Build a delivery sitting in the requested (status, phase)."""
    d = make_delivery()
    for ev in PATH_TO_STATE[state]:
        actor = ADMIN if ev in (TransitionEvent.DISPATCH, TransitionEvent.CANCEL) else courier(courier_id)
        d = transition(d, ev, actor, T0, target_courier_id=courier_id if ev == TransitionEvent.DISPATCH else None)
    return d
