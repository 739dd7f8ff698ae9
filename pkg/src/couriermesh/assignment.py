"""Matches newly created deliveries to couriers.

Three selection policies over one shared eligibility filter: nearest by
great-circle distance to the pickup, most senior by enrollment time, or a
pinned courier. Ties always break by courierId ascending so a dispatch is
reproducible from the same fleet snapshot. A rejected task is cloned into a
fresh attempt with every prior rejector excluded; the chain cancels once
attempts run out or nobody eligible remains.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Any, FrozenSet, Iterable, Optional

from .clock import to_iso
from .config import InstanceConfig
from .errors import ILLEGAL_STATE, NO_CANDIDATE, VALIDATION_ERROR, ProtocolError
from .geo import haversine_m
from .ids import new_uuid
from .lifecycle import (
    SYSTEM,
    CourierAvailability,
    Delivery,
    DeliveryStatus,
    TransitionEvent,
    transition,
)
from .preferences import CourierPreferences, matches

POLICY_KINDS = ("NEAREST", "MOST_SENIOR", "SPECIFIED")


@dataclass(frozen=True)
class CourierState:
    """Fleet snapshot row consumed by the dispatcher."""

    courierId: str
    availability: CourierAvailability
    enrolledAt: datetime
    lon: Optional[float] = None
    lat: Optional[float] = None
    positionAt: Optional[datetime] = None
    activeDeliveryCount: int = 0
    prefs: Optional[CourierPreferences] = None


@dataclass(frozen=True)
class AssignmentPolicy:
    kind: str = "NEAREST"
    courierId: Optional[str] = None
    respectPreferences: bool = True

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ProtocolError(
                VALIDATION_ERROR, f"policy must be one of {', '.join(POLICY_KINDS)}"
            )
        if self.kind == "SPECIFIED" and not self.courierId:
            raise ProtocolError(VALIDATION_ERROR, "SPECIFIED policy requires a courierId")

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.kind,
            "courierId": self.courierId,
            "respectPreferences": self.respectPreferences,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "AssignmentPolicy":
        if not isinstance(d, dict):
            raise ProtocolError(VALIDATION_ERROR, "policy must be a JSON object")
        return AssignmentPolicy(
            kind=d.get("policy", "NEAREST"),
            courierId=d.get("courierId"),
            respectPreferences=bool(d.get("respectPreferences", True)),
        )


def eligible_couriers(
    d: Delivery,
    fleet: Iterable[CourierState],
    at: datetime,
    cfg: InstanceConfig,
    respect_preferences: bool = True,
    exclude: FrozenSet[str] = frozenset(),
) -> list[CourierState]:
    """ONLINE couriers with a fresh position and capacity, order preserved.

    LAST_CALL couriers keep their in-flight work but take nothing new.
    """
    out: list[CourierState] = []
    for c in fleet:
        if c.courierId in exclude:
            continue
        if c.availability is not CourierAvailability.ONLINE:
            continue
        if c.lon is None or c.lat is None or c.positionAt is None:
            continue
        if (at - c.positionAt).total_seconds() > cfg.positionStalenessSeconds:
            continue
        if c.activeDeliveryCount >= cfg.maxActiveDeliveries:
            continue
        if respect_preferences and c.prefs is not None:
            if not matches(c.prefs, d, at, cfg)["eligible"]:
                continue
        out.append(c)
    return out


def _pick(
    d: Delivery, candidates: list[CourierState], policy: AssignmentPolicy
) -> Optional[CourierState]:
    if not candidates:
        return None
    if policy.kind == "SPECIFIED":
        for c in candidates:
            if c.courierId == policy.courierId:
                return c
        return None
    if policy.kind == "NEAREST":
        pickup = (d.pickupLocation.lon, d.pickupLocation.lat)
        return min(
            candidates,
            key=lambda c: (haversine_m((c.lon, c.lat), pickup), c.courierId),
        )
    return min(candidates, key=lambda c: (c.enrolledAt, c.courierId))


def assign(
    d: Delivery,
    fleet: Iterable[CourierState],
    policy: AssignmentPolicy,
    at: datetime,
    cfg: InstanceConfig,
    exclude: FrozenSet[str] = frozenset(),
) -> Delivery:
    """Dispatch `d` to the policy's choice; the decision lands in history."""
    if d.status is not DeliveryStatus.CREATED:
        raise ProtocolError(ILLEGAL_STATE, f"cannot dispatch a {d.status.value} delivery")
    candidates = eligible_couriers(d, fleet, at, cfg, policy.respectPreferences, exclude)
    chosen = _pick(d, candidates, policy)
    if chosen is None:
        raise ProtocolError(
            NO_CANDIDATE,
            "no eligible courier for this dispatch",
            {"policy": policy.kind, "candidates": len(candidates)},
        )
    dispatched = transition(
        d, TransitionEvent.DISPATCH, SYSTEM, at, target_courier_id=chosen.courierId
    )
    decided = {**dispatched.history[-1], "policy": policy.kind, "candidates": len(candidates)}
    return replace(dispatched, history=dispatched.history[:-1] + (decided,))


@dataclass(frozen=True)
class ChainClosure:
    """Terminal disposition of a re-dispatch chain, recorded by SYSTEM.

    Cancellation only has edges out of assigned states, so a spent chain is
    closed at the chain level instead of forging an unreplayable delivery row.
    """

    chainId: str
    reason: str  # ATTEMPTS_EXHAUSTED | NO_ELIGIBLE_COURIER
    at: str
    attempts: int
    actor: str = "SYSTEM"

    def to_dict(self) -> dict[str, Any]:
        return {
            "chainId": self.chainId,
            "state": "CANCELED",
            "reason": self.reason,
            "at": self.at,
            "attempts": self.attempts,
            "actor": self.actor,
        }


def on_reject(
    d: Delivery,
    fleet: Iterable[CourierState],
    policy: AssignmentPolicy,
    at: datetime,
    cfg: InstanceConfig,
    rng: Optional[random.Random] = None,
    prior_rejectors: FrozenSet[str] = frozenset(),
) -> Delivery | ChainClosure:
    """Clone a rejected task into its next attempt, or close the chain.

    The rejected row stays REJECTED for audit; the clone carries the same
    chainId/threadId with attempt+1. Once attempts are spent or nobody
    eligible remains, the whole chain cancels instead.
    """
    if d.status is not DeliveryStatus.REJECTED:
        raise ProtocolError(ILLEGAL_STATE, "re-dispatch applies only to rejected deliveries")
    rejectors = set(prior_rejectors)
    if d.courierId:
        rejectors.add(d.courierId)
    if d.attempt >= cfg.maxAttempts:
        return ChainClosure(
            chainId=d.chainId or d.deliveryId,
            reason="ATTEMPTS_EXHAUSTED",
            at=to_iso(at),
            attempts=d.attempt,
        )
    clone = Delivery(
        deliveryId=new_uuid(rng),
        instanceDomain=d.instanceDomain,
        pickupLocation=d.pickupLocation,
        dropoffLocation=d.dropoffLocation,
        payoutMinor=d.payoutMinor,
        currency=d.currency,
        createdAt=to_iso(at),
        updatedAt=to_iso(at),
        itemWeightLbs=d.itemWeightLbs,
        merchantTags=d.merchantTags,
        distance=d.distance,
        distanceUnit=d.distanceUnit,
        threadId=d.threadId,
        chainId=d.chainId,
        attempt=d.attempt + 1,
    )
    try:
        return assign(clone, fleet, policy, at, cfg, exclude=frozenset(rejectors))
    except ProtocolError as e:
        if e.code == NO_CANDIDATE:
            return ChainClosure(
                chainId=d.chainId or d.deliveryId,
                reason="NO_ELIGIBLE_COURIER",
                at=to_iso(at),
                attempts=d.attempt,
            )
        raise


def chain_rejectors(chain: Iterable[Delivery]) -> frozenset[str]:
    """Every courier that rejected any attempt in the chain."""
    out = set()
    for row in chain:
        if row.status is DeliveryStatus.REJECTED and row.courierId:
            out.add(row.courierId)
    return frozenset(out)
