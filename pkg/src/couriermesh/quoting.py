"""Quote negotiation between requesters and instances.

A requester opens a thread with an OFFER; the parties then alternate
COUNTER/ACCEPT/REJECT rounds until someone closes the thread or it expires.
Broadcast sends one quote to several instances as sibling threads sharing a
group id; the first ACCEPT claims the group through a compare-and-set on a
dedicated group record, and every sibling is rejected with a SYSTEM round,
so at most one thread per group can ever finalize into a delivery.

All money moves in integer minor units; wire payloads use decimal strings.
"""

from __future__ import annotations

import random
from datetime import datetime
from typing import Any, Callable, Optional

from . import geo
from .clock import Clock, from_iso, to_iso
from .config import InstanceConfig
from .errors import (
    ALREADY_FINALIZED,
    EXPIRED,
    NO_MATCHING_INSTANCE,
    NOT_ACCEPTED,
    NOT_FOUND,
    OUT_OF_TURN,
    ROUND_LIMIT,
    THREAD_CLOSED,
    UNKNOWN_INSTANCE,
    VALIDATION_ERROR,
    VERSION_CONFLICT,
    ProtocolError,
)
from .ids import new_uuid
from .lifecycle import Delivery, Place
from .money import format_minor, payout_after_fee, to_minor
from .registry import Registry, query_instances
from .store import Store

DISTANCE_UNITS = ("MILES", "KM")

_REQUIRED_TEXT = ("pickupName", "dropoffName", "dropoffPhoneNumber")
_TIME_FIELDS = (
    "expiresAt",
    "pickupReadyAt",
    "pickupDeadlineAt",
    "dropoffReadyAt",
    "dropoffEta",
    "dropoffDeadlineAt",
)


def _parse_place(raw: Any, fname: str, problems: dict[str, str]) -> dict[str, Any]:
    if not isinstance(raw, dict):
        problems[fname] = "must be {lon, lat, address}"
        return {}
    try:
        lon, lat = float(raw["lon"]), float(raw["lat"])
        geo.validate_lon_lat(lon, lat)
    except (KeyError, TypeError, ValueError):
        problems[fname] = "must carry numeric lon/lat"
        return {}
    except ProtocolError as e:
        problems[fname] = e.message
        return {}
    return {"lon": lon, "lat": lat, "address": str(raw.get("address", ""))}


def parse_quote(raw: dict[str, Any], now: datetime, rng: Optional[random.Random] = None) -> dict[str, Any]:
    """Validate a wire-format quote and normalize it to the stored form."""
    if not isinstance(raw, dict):
        raise ProtocolError(VALIDATION_ERROR, "quote must be a JSON object")
    problems: dict[str, str] = {}

    currency = raw.get("currency")
    if not isinstance(currency, str):
        problems["currency"] = "required ISO-4217 code"
        currency = "USD"

    def amount(fname: str) -> int:
        try:
            minor = to_minor(str(raw[fname]), currency)
        except KeyError:
            problems[fname] = "required"
            return 0
        except ProtocolError as e:
            problems[fname] = e.message
            return 0
        if minor < 0:
            problems[fname] = "must be non-negative"
        return minor

    quote_minor = amount("quote")
    range_from = amount("quoteRangeFrom")
    range_to = amount("quoteRangeTo")
    order_total = amount("orderTotalValue")

    fee = raw.get("feePercentage")
    try:
        payout_after_fee(0, str(fee))
    except ProtocolError as e:
        problems["feePercentage"] = e.message

    duration = raw.get("duration")
    if not isinstance(duration, int) or isinstance(duration, bool) or duration <= 0:
        problems["duration"] = "must be a positive integer minute count"

    distance = raw.get("distance")
    if not isinstance(distance, (int, float)) or isinstance(distance, bool) or distance < 0:
        problems["distance"] = "must be a non-negative number"
    if raw.get("distanceUnit") not in DISTANCE_UNITS:
        problems["distanceUnit"] = f"must be one of {', '.join(DISTANCE_UNITS)}"

    for fname in _REQUIRED_TEXT:
        if not isinstance(raw.get(fname), str) or not raw[fname].strip():
            problems[fname] = "required text"
    pickup_phone = raw.get("pickupPhoneNumber")
    if pickup_phone is not None and not isinstance(pickup_phone, str):
        problems["pickupPhoneNumber"] = "must be text"

    times: dict[str, datetime] = {}
    for fname in _TIME_FIELDS:
        try:
            times[fname] = from_iso(raw[fname])
        except KeyError:
            problems[fname] = "required"
        except ProtocolError as e:
            problems[fname] = e.message

    if not problems:
        if not (range_from <= quote_minor <= range_to):
            problems["quote"] = "quote must lie within [quoteRangeFrom, quoteRangeTo]"
        if times["pickupReadyAt"] > times["pickupDeadlineAt"]:
            problems["pickupReadyAt"] = "must not exceed pickupDeadlineAt"
        if not (times["dropoffReadyAt"] <= times["dropoffEta"] <= times["dropoffDeadlineAt"]):
            problems["dropoffEta"] = "needs dropoffReadyAt <= dropoffEta <= dropoffDeadlineAt"
        if times["pickupDeadlineAt"] > times["dropoffDeadlineAt"]:
            problems["pickupDeadlineAt"] = "must not exceed dropoffDeadlineAt"
        if times["expiresAt"] <= now:
            problems["expiresAt"] = "must be in the future"

    pickup = _parse_place(raw.get("pickupLocation"), "pickupLocation", problems)
    dropoff = _parse_place(raw.get("dropoffLocation"), "dropoffLocation", problems)

    if problems:
        raise ProtocolError(VALIDATION_ERROR, "invalid quote", problems)

    return {
        "quoteId": raw.get("quoteId") or new_uuid(rng),
        "quoteMinor": quote_minor,
        "quoteRangeFromMinor": range_from,
        "quoteRangeToMinor": range_to,
        "feePercentage": str(fee),
        "currency": currency,
        "duration": duration,
        "distance": float(distance),
        "distanceUnit": raw["distanceUnit"],
        "pickupPhoneNumber": pickup_phone,
        "pickupName": raw["pickupName"],
        "dropoffPhoneNumber": raw["dropoffPhoneNumber"],
        "dropoffName": raw["dropoffName"],
        **{fname: to_iso(times[fname]) for fname in _TIME_FIELDS},
        "orderTotalValueMinor": order_total,
        "pickupLocation": pickup,
        "dropoffLocation": dropoff,
    }


def quote_to_api(q: dict[str, Any]) -> dict[str, Any]:
    """Stored form back to wire field names (decimal strings for money)."""
    cur = q["currency"]
    return {
        "quoteId": q["quoteId"],
        "quote": format_minor(q["quoteMinor"], cur),
        "quoteRangeFrom": format_minor(q["quoteRangeFromMinor"], cur),
        "quoteRangeTo": format_minor(q["quoteRangeToMinor"], cur),
        "feePercentage": q["feePercentage"],
        "currency": cur,
        "duration": q["duration"],
        "distance": q["distance"],
        "distanceUnit": q["distanceUnit"],
        "pickupPhoneNumber": q["pickupPhoneNumber"],
        "pickupName": q["pickupName"],
        "dropoffPhoneNumber": q["dropoffPhoneNumber"],
        "dropoffName": q["dropoffName"],
        **{f: q[f] for f in _TIME_FIELDS},
        "orderTotalValue": format_minor(q["orderTotalValueMinor"], cur),
        "pickupLocation": q["pickupLocation"],
        "dropoffLocation": q["dropoffLocation"],
    }


def thread_to_api(t: dict[str, Any]) -> dict[str, Any]:
    cur = t["quote"]["currency"]
    return {
        "threadId": t["threadId"],
        "state": t["state"],
        "requesterId": t["requesterId"],
        "instanceDomain": t["instanceDomain"],
        "broadcastGroupId": t.get("broadcastGroupId"),
        "quote": quote_to_api(t["quote"]),
        "rounds": [
            {
                "by": r["by"],
                "kind": r["kind"],
                "message": r["message"],
                "amount": format_minor(r["amountMinor"], cur) if r.get("amountMinor") is not None else None,
                "at": r["at"],
            }
            for r in t["rounds"]
        ],
        "agreedAmount": format_minor(t["agreedAmountMinor"], cur)
        if t.get("agreedAmountMinor") is not None
        else None,
        "deliveryId": t.get("deliveryId"),
    }


class BroadcastCoordinator:
    """Group records and the first-ACCEPT-wins claim.

    The group record is the atomicity point: claiming runs a compare-and-set
    on it, so racing accepts resolve to exactly one winner no matter which
    instance's thread they arrive on.
    """

    def __init__(self, store: Store):
        self._store = store
        self._services: dict[str, "QuoteService"] = {}

    def register_service(self, domain: str, svc: "QuoteService") -> None:
        self._services[domain] = svc

    def create_group(self, group_id: str, members: list[tuple[str, str]]) -> None:
        self._store.put(
            f"bgroup/{group_id}",
            {"winnerThreadId": None, "members": [[d, t] for d, t in members]},
            None,
        )

    def claim(self, group_id: str, thread_id: str) -> str:
        """Return the winning threadId, setting it to thread_id if unclaimed."""
        while True:
            rec = self._store.require(f"bgroup/{group_id}")
            winner = rec.value["winnerThreadId"]
            if winner is not None:
                return winner
            rec.value["winnerThreadId"] = thread_id
            try:
                self._store.put(f"bgroup/{group_id}", rec.value, rec.version)
                return thread_id
            except ProtocolError as e:
                if e.code != VERSION_CONFLICT:
                    raise

    def reject_losers(self, group_id: str, winner_thread_id: str) -> None:
        rec = self._store.require(f"bgroup/{group_id}")
        for domain, thread_id in rec.value["members"]:
            if thread_id == winner_thread_id:
                continue
            svc = self._services.get(domain)
            if svc is not None:
                svc.system_reject(thread_id, "broadcast group finalized by another instance")


class QuoteService:
    """Negotiation threads for the instances registered with its coordinator."""

    def __init__(
        self,
        store: Store,
        clock: Clock,
        cfg: InstanceConfig,
        rng: Optional[random.Random] = None,
        known_instance: Optional[Callable[[str], bool]] = None,
        coordinator: Optional[BroadcastCoordinator] = None,
    ):
        self._store = store
        self._clock = clock
        self._cfg = cfg
        self._rng = rng
        self._known = known_instance or (lambda domain: domain == cfg.domainName)
        self.coordinator = coordinator or BroadcastCoordinator(store)
        self.coordinator.register_service(cfg.domainName, self)
        self.on_finalized: Optional[Callable[[Delivery], Delivery]] = None

    # -- helpers --------------------------------------------------------------

    def _key(self, thread_id: str) -> str:
        return f"thread/{thread_id}"

    def _load(self, thread_id: str) -> tuple[dict[str, Any], int]:
        rec = self._store.get(self._key(thread_id))
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no negotiation thread {thread_id!r}")
        return rec.value, rec.version

    def _round(self, by: str, kind: str, message: str, amount_minor: Optional[int]) -> dict[str, Any]:
        return {
            "by": by,
            "kind": kind,
            "message": message,
            "amountMinor": amount_minor,
            "at": to_iso(self._clock.now()),
        }

    # -- operations -----------------------------------------------------------

    def create(
        self,
        requester_id: str,
        instance_domain: str,
        quote_raw: dict[str, Any],
        broadcast_group_id: Optional[str] = None,
    ) -> dict[str, Any]:
        if not self._known(instance_domain):
            raise ProtocolError(UNKNOWN_INSTANCE, f"instance {instance_domain!r} is not known")
        q = parse_quote(quote_raw, self._clock.now(), self._rng)
        thread = {
            "threadId": new_uuid(self._rng),
            "requesterId": requester_id,
            "instanceDomain": instance_domain,
            "state": "OPEN",
            "broadcastGroupId": broadcast_group_id,
            "quote": q,
            "rounds": [
                self._round("REQUESTER", "OFFER", quote_raw.get("message", ""), q["quoteMinor"])
            ],
            "agreedAmountMinor": None,
            "deliveryId": None,
        }
        self._store.put(self._key(thread["threadId"]), thread, None)
        return thread

    def get(self, thread_id: str) -> dict[str, Any]:
        thread, _ = self._load(thread_id)
        return thread

    def _expire_if_due(self, thread: dict[str, Any], version: int) -> tuple[dict[str, Any], int]:
        if thread["state"] == "OPEN" and from_iso(thread["quote"]["expiresAt"]) <= self._clock.now():
            thread["state"] = "EXPIRED"
            version = self._store.put(self._key(thread["threadId"]), thread, version)
        return thread, version

    def respond(
        self,
        thread_id: str,
        by: str,
        kind: str,
        message: str = "",
        amount: Optional[str] = None,
    ) -> dict[str, Any]:
        if by not in ("REQUESTER", "INSTANCE"):
            raise ProtocolError(VALIDATION_ERROR, "responder must be REQUESTER or INSTANCE")
        if kind not in ("COUNTER", "ACCEPT", "REJECT"):
            raise ProtocolError(VALIDATION_ERROR, "kind must be COUNTER, ACCEPT, or REJECT")

        thread, version = self._load(thread_id)
        thread, version = self._expire_if_due(thread, version)
        if thread["state"] == "EXPIRED":
            raise ProtocolError(EXPIRED, f"thread {thread_id} expired")
        if thread["state"] != "OPEN":
            raise ProtocolError(THREAD_CLOSED, f"thread {thread_id} is {thread['state']}")
        if thread["rounds"][-1]["by"] == by:
            raise ProtocolError(OUT_OF_TURN, f"{by} may not respond twice consecutively")
        if len(thread["rounds"]) >= 2 * self._cfg.maxRounds:
            raise ProtocolError(
                ROUND_LIMIT, f"negotiation capped at {2 * self._cfg.maxRounds} rounds"
            )

        amount_minor: Optional[int] = None
        if kind == "COUNTER":
            if amount is None:
                raise ProtocolError(VALIDATION_ERROR, "counteroffer requires an amount")
            amount_minor = to_minor(str(amount), thread["quote"]["currency"])
            if amount_minor <= 0:
                raise ProtocolError(VALIDATION_ERROR, "counteroffer must be positive")
            sides_countered = {r["by"] for r in thread["rounds"] if r["kind"] == "COUNTER"}
            free_form = len(sides_countered) == 2
            lo, hi = thread["quote"]["quoteRangeFromMinor"], thread["quote"]["quoteRangeToMinor"]
            if not free_form and not (lo <= amount_minor <= hi):
                raise ProtocolError(
                    VALIDATION_ERROR,
                    "counteroffer must stay within the quote range until both sides have countered",
                )

        if kind == "ACCEPT" and thread.get("broadcastGroupId"):
            winner = self.coordinator.claim(thread["broadcastGroupId"], thread_id)
            if winner != thread_id:
                thread["rounds"].append(
                    self._round("SYSTEM", "REJECT", "broadcast group finalized by another instance", None)
                )
                thread["state"] = "REJECTED"
                self._store.put(self._key(thread_id), thread, version)
                raise ProtocolError(
                    THREAD_CLOSED, f"broadcast group already won by thread {winner}"
                )

        thread["rounds"].append(self._round(by, kind, message, amount_minor))
        if kind == "ACCEPT":
            offered = [r["amountMinor"] for r in thread["rounds"] if r["kind"] in ("OFFER", "COUNTER")]
            thread["agreedAmountMinor"] = offered[-1]
            thread["state"] = "ACCEPTED"
        elif kind == "REJECT":
            thread["state"] = "REJECTED"
        self._store.put(self._key(thread_id), thread, version)

        if kind == "ACCEPT" and thread.get("broadcastGroupId"):
            self.coordinator.reject_losers(thread["broadcastGroupId"], thread_id)
        return thread

    def system_reject(self, thread_id: str, message: str) -> None:
        thread, version = self._load(thread_id)
        if thread["state"] != "OPEN":
            return
        thread["rounds"].append(self._round("SYSTEM", "REJECT", message, None))
        thread["state"] = "REJECTED"
        self._store.put(self._key(thread_id), thread, version)

    def broadcast(
        self, requester_id: str, reg: Registry, filters: dict[str, Any], quote_raw: dict[str, Any]
    ) -> list[dict[str, Any]]:
        matched = query_instances(
            reg,
            point=filters.get("point"),
            region=filters.get("region"),
            language=filters.get("language"),
            text=filters.get("text"),
        )
        hosted = [r for r in matched if self._known(r.domainName)]
        if not hosted:
            raise ProtocolError(NO_MATCHING_INSTANCE, "no instance matches the broadcast filter")
        group_id = new_uuid(self._rng)
        threads = [
            self.create(requester_id, rec.domainName, quote_raw, broadcast_group_id=group_id)
            for rec in hosted
        ]
        self.coordinator.create_group(
            group_id, [(t["instanceDomain"], t["threadId"]) for t in threads]
        )
        return threads

    def finalize(self, thread_id: str) -> tuple[dict[str, Any], Delivery]:
        thread, version = self._load(thread_id)
        if thread["state"] == "FINALIZED":
            raise ProtocolError(
                ALREADY_FINALIZED,
                f"thread {thread_id} already finalized",
                {"deliveryId": thread.get("deliveryId")},
            )
        if thread["state"] != "ACCEPTED":
            raise ProtocolError(NOT_ACCEPTED, f"thread {thread_id} is {thread['state']}, not ACCEPTED")
        q = thread["quote"]
        now_iso = to_iso(self._clock.now())
        delivery = Delivery(
            deliveryId=new_uuid(self._rng),
            instanceDomain=thread["instanceDomain"],
            pickupLocation=Place.from_dict(q["pickupLocation"]),
            dropoffLocation=Place.from_dict(q["dropoffLocation"]),
            payoutMinor=payout_after_fee(thread["agreedAmountMinor"], q["feePercentage"]),
            currency=q["currency"],
            createdAt=now_iso,
            updatedAt=now_iso,
            distance=q["distance"],
            distanceUnit=q["distanceUnit"],
            threadId=thread_id,
            chainId=new_uuid(self._rng),
        )
        thread["state"] = "FINALIZED"
        thread["deliveryId"] = delivery.deliveryId
        self._store.put(self._key(thread_id), thread, version)
        if self.on_finalized is not None:
            delivery = self.on_finalized(delivery)
        return thread, delivery

    def expire_quotes(self) -> int:
        """Expire every due OPEN thread; idempotent, returns count flipped."""
        count = 0
        now = self._clock.now()
        for key, rec in self._store.scan("thread/"):
            thread = rec.value
            if thread["state"] == "OPEN" and from_iso(thread["quote"]["expiresAt"]) <= now:
                thread["state"] = "EXPIRED"
                self._store.put(key, thread, rec.version)
                count += 1
        return count

    def list_threads(self, instance_domain: Optional[str] = None) -> list[dict[str, Any]]:
        out = [rec.value for _, rec in self._store.scan("thread/")]
        if instance_domain is not None:
            out = [t for t in out if t["instanceDomain"] == instance_domain]
        out.sort(key=lambda t: (t["rounds"][0]["at"], t["threadId"]))
        return out
