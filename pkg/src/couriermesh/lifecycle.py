"""Delivery aggregate and its two-level state machine.

A delivery has an order status (CREATED through DELIVERED) and, while a
courier is working it, a trip phase (arrived at pickup, on the way, arrived
at dropoff). The legal edges live in one table, ``EDGES``; everything else
in the package routes through :func:`transition`, so the table is the single
source of truth and histories replay deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Optional

from .clock import from_iso, to_iso
from .errors import (
    FORBIDDEN_ACTOR,
    ILLEGAL_TRANSITION,
    ISSUE_WINDOW_CLOSED,
    VALIDATION_ERROR,
    ProtocolError,
)


class DeliveryStatus(str, Enum):
    CREATED = "CREATED"
    DISPATCHED = "DISPATCHED"
    ACCEPTED = "ACCEPTED"
    REJECTED = "REJECTED"
    CANCELED = "CANCELED"
    PICKED_UP = "PICKED_UP"
    DELIVERED = "DELIVERED"


class TripPhase(str, Enum):
    NONE = "NONE"
    ARRIVED_AT_PICKUP = "ARRIVED_AT_PICKUP"
    ON_THE_WAY = "ON_THE_WAY"
    ARRIVED_AT_DROPOFF = "ARRIVED_AT_DROPOFF"


class TransitionEvent(str, Enum):
    DISPATCH = "DISPATCH"
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"
    CANCEL = "CANCEL"
    ARRIVED_AT_PICKUP = "ARRIVED_AT_PICKUP"
    MARK_PICKED_UP = "MARK_PICKED_UP"
    MARK_ON_THE_WAY = "MARK_ON_THE_WAY"
    ARRIVED_AT_DROPOFF = "ARRIVED_AT_DROPOFF"
    MARK_DELIVERED = "MARK_DELIVERED"
    REPORT_ISSUE = "REPORT_ISSUE"


class CourierAvailability(str, Enum):
    ONLINE = "ONLINE"
    OFFLINE = "OFFLINE"
    LAST_CALL = "LAST_CALL"


TERMINAL_STATUSES = frozenset(
    {DeliveryStatus.DELIVERED, DeliveryStatus.CANCELED, DeliveryStatus.REJECTED}
)

_S, _P, _E = DeliveryStatus, TripPhase, TransitionEvent

# The normative edge table: (status, phase, event) -> (status', phase').
# REPORT_ISSUE edges are identity on state; they only record the issue.
EDGES: dict[tuple[DeliveryStatus, TripPhase, TransitionEvent], tuple[DeliveryStatus, TripPhase]] = {
    (_S.CREATED, _P.NONE, _E.DISPATCH): (_S.DISPATCHED, _P.NONE),
    (_S.DISPATCHED, _P.NONE, _E.ACCEPT): (_S.ACCEPTED, _P.NONE),
    (_S.DISPATCHED, _P.NONE, _E.REJECT): (_S.REJECTED, _P.NONE),
    (_S.ACCEPTED, _P.NONE, _E.ARRIVED_AT_PICKUP): (_S.ACCEPTED, _P.ARRIVED_AT_PICKUP),
    (_S.ACCEPTED, _P.ARRIVED_AT_PICKUP, _E.MARK_PICKED_UP): (_S.PICKED_UP, _P.NONE),
    (_S.PICKED_UP, _P.NONE, _E.MARK_ON_THE_WAY): (_S.PICKED_UP, _P.ON_THE_WAY),
    (_S.PICKED_UP, _P.ON_THE_WAY, _E.ARRIVED_AT_DROPOFF): (_S.PICKED_UP, _P.ARRIVED_AT_DROPOFF),
    (_S.PICKED_UP, _P.ARRIVED_AT_DROPOFF, _E.MARK_DELIVERED): (_S.DELIVERED, _P.NONE),
    # cancel: legal from every live assigned state, always lands on (CANCELED, NONE)
    (_S.DISPATCHED, _P.NONE, _E.CANCEL): (_S.CANCELED, _P.NONE),
    (_S.ACCEPTED, _P.NONE, _E.CANCEL): (_S.CANCELED, _P.NONE),
    (_S.ACCEPTED, _P.ARRIVED_AT_PICKUP, _E.CANCEL): (_S.CANCELED, _P.NONE),
    (_S.PICKED_UP, _P.NONE, _E.CANCEL): (_S.CANCELED, _P.NONE),
    (_S.PICKED_UP, _P.ON_THE_WAY, _E.CANCEL): (_S.CANCELED, _P.NONE),
    (_S.PICKED_UP, _P.ARRIVED_AT_DROPOFF, _E.CANCEL): (_S.CANCELED, _P.NONE),
    # issue reports: any non-terminal state, state-preserving
    (_S.CREATED, _P.NONE, _E.REPORT_ISSUE): (_S.CREATED, _P.NONE),
    (_S.DISPATCHED, _P.NONE, _E.REPORT_ISSUE): (_S.DISPATCHED, _P.NONE),
    (_S.ACCEPTED, _P.NONE, _E.REPORT_ISSUE): (_S.ACCEPTED, _P.NONE),
    (_S.ACCEPTED, _P.ARRIVED_AT_PICKUP, _E.REPORT_ISSUE): (_S.ACCEPTED, _P.ARRIVED_AT_PICKUP),
    (_S.PICKED_UP, _P.NONE, _E.REPORT_ISSUE): (_S.PICKED_UP, _P.NONE),
    (_S.PICKED_UP, _P.ON_THE_WAY, _E.REPORT_ISSUE): (_S.PICKED_UP, _P.ON_THE_WAY),
    (_S.PICKED_UP, _P.ARRIVED_AT_DROPOFF, _E.REPORT_ISSUE): (_S.PICKED_UP, _P.ARRIVED_AT_DROPOFF),
}

# Events a courier may only perform on a delivery assigned to them.
_COURIER_SELF_EVENTS = frozenset(
    {
        _E.ACCEPT,
        _E.REJECT,
        _E.ARRIVED_AT_PICKUP,
        _E.MARK_PICKED_UP,
        _E.MARK_ON_THE_WAY,
        _E.ARRIVED_AT_DROPOFF,
        _E.MARK_DELIVERED,
    }
)


@dataclass(frozen=True)
class Actor:
    kind: str  # COURIER | ADMIN | SYSTEM
    id: Optional[str] = None

    def label(self) -> str:
        return f"{self.kind}:{self.id}" if self.id else self.kind


ADMIN = Actor("ADMIN")
SYSTEM = Actor("SYSTEM")


def courier(courier_id: str) -> Actor:
    return Actor("COURIER", courier_id)


@dataclass(frozen=True)
class Place:
    lon: float
    lat: float
    address: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"lon": self.lon, "lat": self.lat, "address": self.address}

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Place":
        return Place(float(d["lon"]), float(d["lat"]), d.get("address", ""))


@dataclass(frozen=True)
class Delivery:
    deliveryId: str
    instanceDomain: str
    pickupLocation: Place
    dropoffLocation: Place
    payoutMinor: int
    currency: str
    createdAt: str
    updatedAt: str
    status: DeliveryStatus = DeliveryStatus.CREATED
    tripPhase: TripPhase = TripPhase.NONE
    courierId: Optional[str] = None
    itemWeightLbs: Optional[float] = None
    merchantTags: tuple[str, ...] = ()
    issue: Optional[dict[str, str]] = None
    history: tuple[dict[str, Any], ...] = ()
    # estimated trip length, carried over from the finalized quote
    distance: Optional[float] = None
    distanceUnit: Optional[str] = None
    # linkage back to negotiation and re-dispatch bookkeeping
    threadId: Optional[str] = None
    chainId: Optional[str] = None
    attempt: int = 1

    def __post_init__(self):
        if self.payoutMinor < 0:
            raise ProtocolError(VALIDATION_ERROR, "payout must be non-negative")
        if self.itemWeightLbs is not None and self.itemWeightLbs < 0:
            raise ProtocolError(VALIDATION_ERROR, "itemWeightLbs must be non-negative")
        if self.status in (_S.ACCEPTED, _S.PICKED_UP, _S.DELIVERED) and not self.courierId:
            raise ProtocolError(VALIDATION_ERROR, f"{self.status.value} delivery needs a courier")
        if self.tripPhase != _P.NONE and self.status not in (_S.ACCEPTED, _S.PICKED_UP):
            raise ProtocolError(
                VALIDATION_ERROR, f"phase {self.tripPhase.value} illegal in {self.status.value}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "deliveryId": self.deliveryId,
            "instanceDomain": self.instanceDomain,
            "courierId": self.courierId,
            "status": self.status.value,
            "tripPhase": self.tripPhase.value,
            "pickupLocation": self.pickupLocation.to_dict(),
            "dropoffLocation": self.dropoffLocation.to_dict(),
            "itemWeightLbs": self.itemWeightLbs,
            "merchantTags": list(self.merchantTags),
            "payoutMinor": self.payoutMinor,
            "currency": self.currency,
            "createdAt": self.createdAt,
            "updatedAt": self.updatedAt,
            "issue": self.issue,
            "history": [dict(h) for h in self.history],
            "distance": self.distance,
            "distanceUnit": self.distanceUnit,
            "threadId": self.threadId,
            "chainId": self.chainId,
            "attempt": self.attempt,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Delivery":
        return Delivery(
            deliveryId=d["deliveryId"],
            instanceDomain=d["instanceDomain"],
            courierId=d.get("courierId"),
            status=DeliveryStatus(d["status"]),
            tripPhase=TripPhase(d.get("tripPhase", "NONE")),
            pickupLocation=Place.from_dict(d["pickupLocation"]),
            dropoffLocation=Place.from_dict(d["dropoffLocation"]),
            itemWeightLbs=d.get("itemWeightLbs"),
            merchantTags=tuple(d.get("merchantTags", ())),
            payoutMinor=int(d["payoutMinor"]),
            currency=d["currency"],
            createdAt=d["createdAt"],
            updatedAt=d["updatedAt"],
            issue=d.get("issue"),
            history=tuple(d.get("history", ())),
            distance=d.get("distance"),
            distanceUnit=d.get("distanceUnit"),
            threadId=d.get("threadId"),
            chainId=d.get("chainId"),
            attempt=int(d.get("attempt", 1)),
        )


def _check_actor(d: Delivery, ev: TransitionEvent, actor: Actor) -> None:
    if actor.kind == "COURIER":
        if ev in _COURIER_SELF_EVENTS:
            if actor.id != d.courierId:
                raise ProtocolError(
                    FORBIDDEN_ACTOR, f"courier {actor.id} is not assigned to {d.deliveryId}"
                )
        elif ev == _E.CANCEL:
            # couriers normally reject; cancel is only theirs once committed
            if d.status != _S.ACCEPTED or actor.id != d.courierId:
                raise ProtocolError(
                    FORBIDDEN_ACTOR, f"courier may cancel only an accepted delivery of their own"
                )
        elif ev == _E.REPORT_ISSUE:
            if actor.id != d.courierId:
                raise ProtocolError(
                    FORBIDDEN_ACTOR, f"courier {actor.id} is not assigned to {d.deliveryId}"
                )
        elif ev == _E.DISPATCH:
            pass  # self-claim: the courier becomes the assignee below
        else:  # pragma: no cover
            raise ProtocolError(FORBIDDEN_ACTOR, f"courier cannot perform {ev.value}")
    elif actor.kind not in ("ADMIN", "SYSTEM"):
        raise ProtocolError(FORBIDDEN_ACTOR, f"unknown actor kind {actor.kind!r}")


def transition(
    d: Delivery,
    ev: TransitionEvent,
    actor: Actor,
    at: datetime,
    *,
    target_courier_id: Optional[str] = None,
    issue: Optional[dict[str, str]] = None,
) -> Delivery:
    """Apply one event, returning the updated delivery.

    DISPATCH requires a target courier (or a COURIER actor claiming the task).
    REPORT_ISSUE records ``issue`` and leaves (status, phase) untouched.
    """
    edge = EDGES.get((d.status, d.tripPhase, ev))
    if edge is None:
        raise ProtocolError(
            ILLEGAL_TRANSITION,
            f"{ev.value} is illegal in ({d.status.value}, {d.tripPhase.value})",
            {"status": d.status.value, "tripPhase": d.tripPhase.value, "event": ev.value},
        )
    _check_actor(d, ev, actor)

    new_status, new_phase = edge
    changes: dict[str, Any] = {"status": new_status, "tripPhase": new_phase}

    if ev == _E.DISPATCH:
        assignee = target_courier_id or (actor.id if actor.kind == "COURIER" else None)
        if not assignee:
            raise ProtocolError(VALIDATION_ERROR, "dispatch requires a target courier")
        changes["courierId"] = assignee
    if ev == _E.REPORT_ISSUE:
        if not issue or not issue.get("code"):
            raise ProtocolError(VALIDATION_ERROR, "issue report requires a code")
        changes["issue"] = {"code": issue["code"], "note": issue.get("note", "")}

    entry = {
        "at": to_iso(at),
        "actor": actor.label(),
        "event": ev.value,
        "from": [d.status.value, d.tripPhase.value],
        "to": [new_status.value, new_phase.value],
    }
    if ev == _E.DISPATCH:
        entry["courierId"] = changes["courierId"]
    changes["history"] = d.history + (entry,)
    changes["updatedAt"] = to_iso(at)

    out = replace(d, **changes)
    _assert_replay(out)
    return out


def report_issue_grace(d: Delivery, actor: Actor, at: datetime, issue: dict[str, str]) -> Delivery:
    """Issue report path that also admits DELIVERED rows inside a 24 h window.

    Terminal rows are otherwise immutable, so the grace entry bypasses the
    edge table; replay treats REPORT_ISSUE as identity either way.
    """
    if d.status in TERMINAL_STATUSES:
        if d.status != _S.DELIVERED:
            raise ProtocolError(
                ISSUE_WINDOW_CLOSED, f"issues cannot be reported on {d.status.value} deliveries"
            )
        if at - from_iso(d.updatedAt) > timedelta(hours=24):
            raise ProtocolError(ISSUE_WINDOW_CLOSED, "issue window after delivery has closed")
        if actor.kind == "COURIER" and actor.id != d.courierId:
            raise ProtocolError(FORBIDDEN_ACTOR, f"courier {actor.id} is not assigned")
        if not issue or not issue.get("code"):
            raise ProtocolError(VALIDATION_ERROR, "issue report requires a code")
        entry = {
            "at": to_iso(at),
            "actor": actor.label(),
            "event": _E.REPORT_ISSUE.value,
            "from": [d.status.value, d.tripPhase.value],
            "to": [d.status.value, d.tripPhase.value],
        }
        out = replace(
            d,
            issue={"code": issue["code"], "note": issue.get("note", "")},
            history=d.history + (entry,),
            updatedAt=to_iso(at),
        )
        _assert_replay(out)
        return out
    return transition(d, _E.REPORT_ISSUE, actor, at, issue=issue)


def replay(history: tuple[dict[str, Any], ...] | list[dict[str, Any]]) -> tuple[DeliveryStatus, TripPhase]:
    """Fold a history back to (status, phase) from the initial state."""
    status, phase = _S.CREATED, _P.NONE
    for entry in history:
        ev = TransitionEvent(entry["event"])
        if ev == _E.REPORT_ISSUE:
            continue
        edge = EDGES.get((status, phase, ev))
        if edge is None:
            raise ProtocolError(
                ILLEGAL_TRANSITION,
                f"history replays {ev.value} from illegal state ({status.value}, {phase.value})",
            )
        status, phase = edge
    return status, phase


def _assert_replay(d: Delivery) -> None:
    status, phase = replay(d.history)
    if (status, phase) != (d.status, d.tripPhase):
        raise ProtocolError(
            ILLEGAL_TRANSITION,
            f"history of {d.deliveryId} replays to ({status.value}, {phase.value}), "
            f"record says ({d.status.value}, {d.tripPhase.value})",
        )


def is_legal(status: DeliveryStatus, phase: TripPhase, ev: TransitionEvent) -> bool:
    return (status, phase, ev) in EDGES


# The (status, phase) pairs reachable from (CREATED, NONE) via EDGES.
REACHABLE_STATES: frozenset[tuple[DeliveryStatus, TripPhase]] = frozenset(
    {(_S.CREATED, _P.NONE)} | set(EDGES.values())
)


def reachable(status: DeliveryStatus, phase: TripPhase) -> bool:
    """Whether the (status, phase) pair can exist on a stored delivery."""
    return (status, phase) in REACHABLE_STATES


def bucket_of(d: Delivery) -> str:
    """NEW / IN_PROGRESS / DONE partition used by the courier list endpoints."""
    if d.status == _S.DISPATCHED:
        return "NEW"
    if d.status in (_S.ACCEPTED, _S.PICKED_UP):
        return "IN_PROGRESS"
    if d.status in TERMINAL_STATUSES:
        return "DONE"
    return "PENDING"  # CREATED: not yet visible to couriers
