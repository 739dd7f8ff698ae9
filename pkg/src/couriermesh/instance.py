"""One courier instance: the service layer every API route lands on.

Composes the domain modules over a single store and clock. All state
mutation funnels through here so the HTTP gateway and the in-process
simulation drive the exact same code paths.
"""

from __future__ import annotations

import random
from datetime import datetime
from typing import Any, Callable, Optional

from . import preferences as prefs_mod
from .assignment import (
    AssignmentPolicy,
    ChainClosure,
    CourierState,
    assign,
    on_reject,
)
from .auth import AuthService, Principal
from .clock import Clock, from_iso, to_iso
from .config import InstanceConfig
from .errors import (
    FORBIDDEN_ACTOR,
    NO_CANDIDATE,
    NOT_FOUND,
    VALIDATION_ERROR,
    ProtocolError,
)
from .ids import new_uuid
from .lifecycle import (
    ADMIN,
    CourierAvailability,
    Delivery,
    DeliveryStatus,
    TransitionEvent,
    bucket_of,
    courier as courier_actor,
    report_issue_grace,
    transition,
)
from .notes import NotesService
from .quoting import BroadcastCoordinator, QuoteService
from .registry import Registry
from .store import Store

_ACTIVE_STATUSES = (DeliveryStatus.DISPATCHED, DeliveryStatus.ACCEPTED, DeliveryStatus.PICKED_UP)

# Table-2 action suffix -> lifecycle event
EVENT_FOR_ACTION = {
    "accept": TransitionEvent.ACCEPT,
    "reject": TransitionEvent.REJECT,
    "cancel": TransitionEvent.CANCEL,
    "mark-as-dispatched": TransitionEvent.DISPATCH,
    "arrived-at-pickup": TransitionEvent.ARRIVED_AT_PICKUP,
    "mark-as-picked-up": TransitionEvent.MARK_PICKED_UP,
    "mark-as-on-the-way": TransitionEvent.MARK_ON_THE_WAY,
    "arrived-at-dropoff": TransitionEvent.ARRIVED_AT_DROPOFF,
    "mark-as-delivered": TransitionEvent.MARK_DELIVERED,
    "report-issue": TransitionEvent.REPORT_ISSUE,
}


class InstanceService:
    def __init__(
        self,
        cfg: InstanceConfig,
        store: Store,
        clock: Clock,
        rng: Optional[random.Random] = None,
        registry: Optional[Registry] = None,
        coordinator: Optional[BroadcastCoordinator] = None,
        known_instance: Optional[Callable[[str], bool]] = None,
        on_event: Optional[Callable[[dict[str, Any]], None]] = None,
    ):
        self.cfg = cfg
        self.store = store
        self.clock = clock
        self.rng = rng
        self.registry = registry or Registry()
        self.auth = AuthService(store, rng)
        self.notes = NotesService(store, clock, rng)
        self.quotes = QuoteService(
            store, clock, cfg, rng,
            known_instance=known_instance,
            coordinator=coordinator,
        )
        self.quotes.on_finalized = self._accept_finalized_delivery
        self.on_event = on_event
        self.admin = self.auth.issue("ADMIN", "admin")
        if store.get("policy") is None:
            store.put("policy", AssignmentPolicy().to_dict(), None)

    # -- plumbing -------------------------------------------------------------

    def _emit(self, kind: str, **fields: Any) -> None:
        if self.on_event is not None:
            self.on_event(
                {"at": to_iso(self.clock.now()), "instance": self.cfg.domainName,
                 "kind": kind, **fields}
            )

    def _delivery(self, delivery_id: str) -> tuple[Delivery, int]:
        rec = self.store.get(f"delivery/{delivery_id}")
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no delivery {delivery_id!r}")
        return Delivery.from_dict(rec.value), rec.version

    def _save_delivery(self, d: Delivery, version: Optional[int]) -> None:
        self.store.put(f"delivery/{d.deliveryId}", d.to_dict(), version)

    def _courier(self, courier_id: str) -> tuple[dict[str, Any], int]:
        rec = self.store.get(f"courier/{courier_id}")
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no courier {courier_id!r}")
        return rec.value, rec.version

    # -- couriers (admin-created, minimal enrollment flow) ---------------------

    def create_courier(self, display_name: str, vehicle_type: str = "BICYCLE") -> dict[str, Any]:
        if not display_name or not isinstance(display_name, str):
            raise ProtocolError(VALIDATION_ERROR, "displayName required")
        if vehicle_type not in prefs_mod.VEHICLE_TYPES:
            raise ProtocolError(
                VALIDATION_ERROR, f"vehicleType must be one of {', '.join(prefs_mod.VEHICLE_TYPES)}"
            )
        cid = new_uuid(self.rng)
        now = to_iso(self.clock.now())
        record = {
            "courierId": cid,
            "displayName": display_name,
            "availability": CourierAvailability.OFFLINE.value,
            "enrolledAt": now,
            "lon": None,
            "lat": None,
            "positionAt": None,
        }
        self.store.put(f"courier/{cid}", record, None)
        defaults = prefs_mod.default_preferences(self.cfg.territory)
        defaults = prefs_mod.apply_patch(defaults, {"vehicleType": vehicle_type})
        self.store.put(f"prefs/{cid}", defaults.to_dict(), None)
        principal = self.auth.issue("COURIER", cid)
        self._emit("courier_enrolled", courierId=cid)
        return {**record, "token": principal.token}

    def list_couriers(self) -> list[dict[str, Any]]:
        rows = [rec.value for key, rec in self.store.scan("courier/")]
        rows.sort(key=lambda r: r["courierId"])
        for r in rows:
            r["activeDeliveryCount"] = self._active_count(r["courierId"])
        return rows

    def set_availability(self, courier_id: str, availability: str) -> dict[str, Any]:
        try:
            value = CourierAvailability(availability)
        except ValueError:
            raise ProtocolError(
                VALIDATION_ERROR,
                f"availability must be one of {', '.join(a.value for a in CourierAvailability)}",
            ) from None
        rec, version = self._courier(courier_id)
        rec["availability"] = value.value
        self.store.put(f"courier/{courier_id}", rec, version)
        self._emit("availability", courierId=courier_id, value=value.value)
        if value is CourierAvailability.ONLINE:
            self.pump_dispatch()
        return rec

    def update_position(self, courier_id: str, lon: float, lat: float) -> dict[str, Any]:
        from .geo import validate_lon_lat

        validate_lon_lat(lon, lat)
        rec, version = self._courier(courier_id)
        rec["lon"], rec["lat"] = float(lon), float(lat)
        rec["positionAt"] = to_iso(self.clock.now())
        self.store.put(f"courier/{courier_id}", rec, version)
        self.pump_dispatch()
        return rec

    def _active_count(self, courier_id: str) -> int:
        n = 0
        for _, rec in self.store.scan("delivery/"):
            if rec.value.get("courierId") == courier_id and DeliveryStatus(
                rec.value["status"]
            ) in _ACTIVE_STATUSES:
                n += 1
        return n

    def fleet_snapshot(self) -> list[CourierState]:
        fleet = []
        for _, rec in sorted(self.store.scan("courier/")):
            r = rec.value
            p = self.store.get(f"prefs/{r['courierId']}")
            fleet.append(
                CourierState(
                    courierId=r["courierId"],
                    availability=CourierAvailability(r["availability"]),
                    enrolledAt=from_iso(r["enrolledAt"]),
                    lon=r["lon"],
                    lat=r["lat"],
                    positionAt=from_iso(r["positionAt"]) if r["positionAt"] else None,
                    activeDeliveryCount=self._active_count(r["courierId"]),
                    prefs=prefs_mod.CourierPreferences.from_dict(p.value) if p else None,
                )
            )
        return fleet

    # -- preferences (Table-3 settings document) --------------------------------

    def get_settings(self, courier_id: str) -> dict[str, Any]:
        self._courier(courier_id)
        rec = self.store.require(f"prefs/{courier_id}")
        return rec.value

    def patch_settings(self, courier_id: str, partial: dict[str, Any]) -> dict[str, Any]:
        self._courier(courier_id)
        rec = self.store.require(f"prefs/{courier_id}")
        updated = prefs_mod.apply_patch(
            prefs_mod.CourierPreferences.from_dict(rec.value), partial
        )
        self.store.put(f"prefs/{courier_id}", updated.to_dict(), rec.version)
        self._emit("settings_patched", courierId=courier_id, fields=sorted(partial))
        return updated.to_dict()

    # -- assignment policy ------------------------------------------------------

    def get_policy(self) -> AssignmentPolicy:
        return AssignmentPolicy.from_dict(self.store.require("policy").value)

    def set_policy(self, raw: dict[str, Any]) -> AssignmentPolicy:
        policy = AssignmentPolicy.from_dict(raw)
        rec = self.store.require("policy")
        self.store.put("policy", policy.to_dict(), rec.version)
        self._emit("policy_switched", policy=policy.kind, courierId=policy.courierId)
        return policy

    # -- deliveries -------------------------------------------------------------

    def _accept_finalized_delivery(self, d: Delivery) -> Delivery:
        self._save_delivery(d, None)
        self.store.put(
            f"chain/{d.chainId}",
            {"chainId": d.chainId, "state": "OPEN", "attempts": 1, "threadId": d.threadId},
            None,
        )
        self._emit("delivery_created", deliveryId=d.deliveryId, threadId=d.threadId, chainId=d.chainId)
        return self._try_dispatch(d)

    def _try_dispatch(self, d: Delivery) -> Delivery:
        _, version = self._delivery(d.deliveryId)
        try:
            dispatched = assign(
                d, self.fleet_snapshot(), self.get_policy(), self.clock.now(), self.cfg
            )
        except ProtocolError as e:
            if e.code == NO_CANDIDATE:
                return d  # stays CREATED; the pump retries when the fleet changes
            raise
        self._save_delivery(dispatched, version)
        self._emit(
            "dispatched",
            deliveryId=d.deliveryId,
            courierId=dispatched.courierId,
            attempt=dispatched.attempt,
            chainId=d.chainId,
        )
        return dispatched

    def pump_dispatch(self) -> int:
        """Retry every queued CREATED delivery; returns how many dispatched."""
        count = 0
        for _, rec in sorted(self.store.scan("delivery/")):
            if rec.value["status"] == DeliveryStatus.CREATED.value:
                after = self._try_dispatch(Delivery.from_dict(rec.value))
                if after.status is not DeliveryStatus.CREATED:
                    count += 1
        return count

    def get_delivery(self, delivery_id: str) -> Delivery:
        d, _ = self._delivery(delivery_id)
        return d

    def list_deliveries(self, courier_id: str, bucket: str) -> list[Delivery]:
        out = []
        for _, rec in self.store.scan("delivery/"):
            d = Delivery.from_dict(rec.value)
            if d.courierId != courier_id:
                continue
            if bucket_of(d) == bucket:
                out.append(d)
        return _newest_first(out)

    def all_deliveries(self) -> list[Delivery]:
        rows = [Delivery.from_dict(rec.value) for _, rec in self.store.scan("delivery/")]
        return _newest_first(rows)

    def delivery_event(
        self,
        delivery_id: str,
        action: str,
        principal: Principal,
        issue: Optional[dict[str, str]] = None,
        target_courier_id: Optional[str] = None,
    ) -> Delivery:
        ev = EVENT_FOR_ACTION.get(action)
        if ev is None:
            raise ProtocolError(NOT_FOUND, f"unknown delivery action {action!r}")
        d, version = self._delivery(delivery_id)
        now = self.clock.now()
        actor = ADMIN if principal.kind == "ADMIN" else courier_actor(principal.id)

        if ev is TransitionEvent.REPORT_ISSUE and d.status is DeliveryStatus.DELIVERED:
            updated = report_issue_grace(d, actor, now, issue or {})
        else:
            updated = transition(
                d, ev, actor, now,
                target_courier_id=target_courier_id
                or (principal.id if ev is TransitionEvent.DISPATCH and principal.kind == "COURIER" else None),
                issue=issue,
            )
        self._save_delivery(updated, version)
        self._emit(
            "transition",
            deliveryId=delivery_id,
            event=ev.value,
            actor=actor.label(),
            status=updated.status.value,
            tripPhase=updated.tripPhase.value,
            chainId=updated.chainId,
        )
        if updated.status is DeliveryStatus.REJECTED:
            self._handle_rejection(updated)
        return updated

    def _chain_deliveries(self, chain_id: str) -> list[Delivery]:
        rows = [
            Delivery.from_dict(rec.value)
            for _, rec in self.store.scan("delivery/")
            if rec.value.get("chainId") == chain_id
        ]
        rows.sort(key=lambda d: d.attempt)
        return rows

    def _handle_rejection(self, d: Delivery) -> None:
        from .assignment import chain_rejectors

        chain = self._chain_deliveries(d.chainId) if d.chainId else [d]
        outcome = on_reject(
            d,
            self.fleet_snapshot(),
            self.get_policy(),
            self.clock.now(),
            self.cfg,
            rng=self.rng,
            prior_rejectors=chain_rejectors(chain),
        )
        if isinstance(outcome, ChainClosure):
            if d.chainId:
                rec = self.store.get(f"chain/{d.chainId}")
                if rec is not None:
                    self.store.put(f"chain/{d.chainId}", {**rec.value, **outcome.to_dict()}, rec.version)
            self._emit("chain_canceled", chainId=outcome.chainId, reason=outcome.reason)
            return
        self._save_delivery(outcome, None)
        if d.chainId:
            rec = self.store.get(f"chain/{d.chainId}")
            if rec is not None:
                self.store.put(
                    f"chain/{d.chainId}", {**rec.value, "attempts": outcome.attempt}, rec.version
                )
        self._emit(
            "redispatched",
            deliveryId=outcome.deliveryId,
            courierId=outcome.courierId,
            attempt=outcome.attempt,
            chainId=outcome.chainId,
        )

    def get_chain(self, chain_id: str) -> dict[str, Any]:
        rec = self.store.get(f"chain/{chain_id}")
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no task chain {chain_id!r}")
        return {**rec.value, "deliveries": [d.to_dict() for d in self._chain_deliveries(chain_id)]}

    # -- disclosure ---------------------------------------------------------------

    def export_csv(self, from_utc: datetime, to_utc: datetime, salt: Optional[str] = None) -> str:
        from .disclosure import export_csv

        return export_csv(self.all_deliveries(), from_utc, to_utc, salt=salt, rng=self.rng)

    def metrics(self, from_utc: datetime, to_utc: datetime) -> dict[str, Any]:
        from .disclosure import metrics

        return metrics(self.all_deliveries(), from_utc, to_utc)


def _newest_first(rows: list[Delivery]) -> list[Delivery]:
    # stable two-pass sort: deliveryId ascending breaks updatedAt ties
    rows.sort(key=lambda d: d.deliveryId)
    rows.sort(key=lambda d: d.updatedAt, reverse=True)
    return rows


def require_courier(principal: Principal) -> str:
    if principal.kind != "COURIER":
        raise ProtocolError(FORBIDDEN_ACTOR, "courier credentials required")
    return principal.id


def require_admin(principal: Principal) -> None:
    if principal.kind != "ADMIN":
        raise ProtocolError(FORBIDDEN_ACTOR, "admin credentials required")
