"""Deterministic whole-ecosystem simulation: N instances, scripted actors.

One virtual clock drives everything; no wall time, no threads. The same
seed and scenario always produce the same JSON-lines event log, byte for
byte, which is what the replay verifier and the determinism tests lean on.
"""

from __future__ import annotations

import json
import math
import random
from datetime import datetime, timedelta
from typing import Any, Optional

from .auth import Principal
from .clock import VirtualClock, from_iso, to_iso
from .config import DEFAULT_TERRITORY, InstanceConfig
from .errors import (
    NO_MATCHING_INSTANCE,
    SCENARIO_INVALID,
    THREAD_CLOSED,
    ProtocolError,
)
from .ids import new_uuid
from .instance import InstanceService
from .lifecycle import (
    EDGES,
    TERMINAL_STATUSES,
    DeliveryStatus,
    TransitionEvent,
    TripPhase,
)
from .quoting import BroadcastCoordinator
from .registry import InstanceRecord, Registry, query_instances
from .store import MemoryStore

DEFAULT_START = "2025-06-01T12:00:00Z"
M_PER_DEG_LAT = 111194.9

# happy-path order a scripted courier walks after accepting
PHASE_EVENTS = (
    TransitionEvent.ARRIVED_AT_PICKUP,
    TransitionEvent.MARK_PICKED_UP,
    TransitionEvent.MARK_ON_THE_WAY,
    TransitionEvent.ARRIVED_AT_DROPOFF,
    TransitionEvent.MARK_DELIVERED,
)

ACTION_FOR_EVENT = {
    TransitionEvent.ARRIVED_AT_PICKUP: "arrived-at-pickup",
    TransitionEvent.MARK_PICKED_UP: "mark-as-picked-up",
    TransitionEvent.MARK_ON_THE_WAY: "mark-as-on-the-way",
    TransitionEvent.ARRIVED_AT_DROPOFF: "arrived-at-dropoff",
    TransitionEvent.MARK_DELIVERED: "mark-as-delivered",
}


def _invalid(message: str, **details: Any) -> ProtocolError:
    return ProtocolError(SCENARIO_INVALID, message, details or None)


def load_scenario(raw: Any) -> dict[str, Any]:
    """Validate and normalize a scenario document; raises SCENARIO_INVALID."""
    if not isinstance(raw, dict):
        raise _invalid("scenario must be a JSON object")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise _invalid("seed must be an integer in [0, 2^64)")
    duration = raw.get("durationMinutes", 60)
    if not isinstance(duration, (int, float)) or duration <= 0 or duration > 7 * 24 * 60:
        raise _invalid("durationMinutes must be a positive number of minutes, at most one week")
    tick = raw.get("tickSeconds", 30)
    if not isinstance(tick, int) or tick < 1 or tick > 3600:
        raise _invalid("tickSeconds must be an integer in [1, 3600]")
    start_raw = raw.get("startAt", DEFAULT_START)
    try:
        start = from_iso(start_raw)
    except ProtocolError:
        raise _invalid("startAt must be an ISO-8601 instant") from None

    instances = raw.get("instances")
    if not isinstance(instances, list) or not instances:
        raise _invalid("instances must be a non-empty list")
    domains: list[str] = []
    norm_instances = []
    for i, inst in enumerate(instances):
        if not isinstance(inst, dict):
            raise _invalid(f"instances[{i}] must be an object")
        domain = inst.get("domainName")
        if not isinstance(domain, str) or not domain:
            raise _invalid(f"instances[{i}].domainName required")
        if domain in domains:
            raise _invalid(f"duplicate domainName {domain!r}")
        domains.append(domain)
        fleet = inst.get("fleet", [])
        if not isinstance(fleet, list):
            raise _invalid(f"instances[{i}].fleet must be a list")
        for j, member in enumerate(fleet):
            if not isinstance(member, dict):
                raise _invalid(f"instances[{i}].fleet[{j}] must be an object")
            for f in ("lon", "lat"):
                if not isinstance(member.get(f), (int, float)):
                    raise _invalid(f"instances[{i}].fleet[{j}].{f} must be a number")
        policy = inst.get("policy", {"policy": "NEAREST"})
        if not isinstance(policy, dict):
            raise _invalid(f"instances[{i}].policy must be an object")
        overrides = inst.get("config", {})
        if not isinstance(overrides, dict):
            raise _invalid(f"instances[{i}].config must be an object")
        allowed = {"maxRounds", "maxAttempts", "maxActiveDeliveries",
                   "positionStalenessSeconds", "smallOrderMaxLbs", "mediumOrderMaxLbs"}
        bad = sorted(set(overrides) - allowed)
        if bad:
            raise _invalid(f"instances[{i}].config has unknown keys: {', '.join(bad)}")
        norm_instances.append(
            {
                "domainName": domain,
                "instanceName": inst.get("instanceName", domain),
                "territory": inst.get("territory"),
                "policy": policy,
                "fleet": fleet,
                "config": inst.get("config", {}),
            }
        )

    script = raw.get("requesterScript", [])
    if not isinstance(script, list):
        raise _invalid("requesterScript must be a list")
    norm_script = []
    for i, entry in enumerate(script):
        if not isinstance(entry, dict):
            raise _invalid(f"requesterScript[{i}] must be an object")
        at = entry.get("atMinute", 0)
        if not isinstance(at, (int, float)) or at < 0 or at > duration:
            raise _invalid(f"requesterScript[{i}].atMinute must lie within the scenario window")
        action = entry.get("action")
        if action not in ("quote", "broadcast"):
            raise _invalid(f"requesterScript[{i}].action must be quote or broadcast")
        if action == "quote":
            target = entry.get("instance")
            if target not in domains:
                raise _invalid(f"requesterScript[{i}].instance must name a scenario instance")
        responses = entry.get("responses", ["INSTANCE:ACCEPT"])
        if not isinstance(responses, list):
            raise _invalid(f"requesterScript[{i}].responses must be a list")
        for r in responses:
            parts = str(r).split(":")
            if parts[0] not in ("INSTANCE", "REQUESTER"):
                raise _invalid(f"bad response step {r!r}: must start with INSTANCE or REQUESTER")
            if parts[1] not in ("ACCEPT", "REJECT", "COUNTER"):
                raise _invalid(f"bad response step {r!r}: unknown verb")
            if parts[1] == "COUNTER" and len(parts) != 3:
                raise _invalid(f"bad response step {r!r}: COUNTER needs an amount")
        norm_script.append(
            {
                "atMinute": at,
                "action": action,
                "instance": entry.get("instance"),
                "quote": entry.get("quote", {}),
                "responses": responses,
                "filters": entry.get("filters", {}),
                "accepts": entry.get("accepts", "all"),
            }
        )

    courier_script = raw.get("courierScript", {})
    if not isinstance(courier_script, dict):
        raise _invalid("courierScript must be an object")
    accept_p = courier_script.get("acceptProbability", 1.0)
    if not isinstance(accept_p, (int, float)) or not 0 <= accept_p <= 1:
        raise _invalid("courierScript.acceptProbability must lie in [0, 1]")

    return {
        "seed": seed,
        "durationMinutes": duration,
        "tickSeconds": tick,
        "startAt": to_iso(start),
        "instances": norm_instances,
        "requesterScript": norm_script,
        "courierScript": {"acceptProbability": float(accept_p)},
    }


def _default_quote(now: datetime, territory: dict[str, Any]) -> dict[str, Any]:
    ring = territory["coordinates"][0]
    lons = [p[0] for p in ring]
    lats = [p[1] for p in ring]
    mid_lon, mid_lat = sum(lons[:-1]) / (len(lons) - 1), sum(lats[:-1]) / (len(lats) - 1)
    return {
        "quote": "12.00",
        "quoteRangeFrom": "8.00",
        "quoteRangeTo": "20.00",
        "feePercentage": "10",
        "currency": "USD",
        "duration": 25,
        "distance": 1.4,
        "distanceUnit": "MILES",
        "pickupPhoneNumber": "+1-609-555-0100",
        "pickupName": "Pickup Counter",
        "dropoffPhoneNumber": "+1-609-555-0101",
        "dropoffName": "Recipient",
        "expiresAt": to_iso(now + timedelta(hours=2)),
        "pickupReadyAt": to_iso(now + timedelta(minutes=10)),
        "pickupDeadlineAt": to_iso(now + timedelta(minutes=50)),
        "dropoffReadyAt": to_iso(now + timedelta(minutes=15)),
        "dropoffEta": to_iso(now + timedelta(minutes=45)),
        "dropoffDeadlineAt": to_iso(now + timedelta(minutes=90)),
        "orderTotalValue": "30.00",
        "pickupLocation": {"lon": mid_lon - 0.002, "lat": mid_lat - 0.002, "address": "1 Depot Way"},
        "dropoffLocation": {"lon": mid_lon + 0.002, "lat": mid_lat + 0.002, "address": "9 Elm St"},
    }


class Ecosystem:
    """All instances of one scenario wired to a shared clock and registry."""

    def __init__(self, scenario: dict[str, Any]):
        self.scenario = scenario
        self.clock = VirtualClock(from_iso(scenario["startAt"]))
        self.log: list[dict[str, Any]] = []
        master = random.Random(scenario["seed"])
        self.script_rng = random.Random(master.getrandbits(64))
        self.coordinator = BroadcastCoordinator(MemoryStore())
        self.registry = Registry(sourceKind="SERVICE")
        self.instances: dict[str, InstanceService] = {}
        self.couriers: dict[str, list[dict[str, Any]]] = {}

        for inst in scenario["instances"]:
            domain = inst["domainName"]
            territory = inst["territory"] or json.loads(json.dumps(DEFAULT_TERRITORY))
            cfg = InstanceConfig(
                domainName=domain, territory=territory, **inst["config"]
            )
            svc = InstanceService(
                cfg,
                MemoryStore(),
                self.clock,
                random.Random(master.getrandbits(64)),
                registry=self.registry,
                coordinator=self.coordinator,
                known_instance=lambda d, mine=domain: d == mine,
                on_event=self.log.append,
            )
            svc.set_policy(inst["policy"])
            self.registry.records.append(self._record(inst, territory))
            self.instances[domain] = svc
            self.couriers[domain] = []
            for member in inst["fleet"]:
                c = svc.create_courier(
                    member.get("displayName", f"{domain} courier"),
                    member.get("vehicleType", "BICYCLE"),
                )
                svc.set_availability(c["courierId"], "ONLINE")
                svc.update_position(c["courierId"], member["lon"], member["lat"])
                self.couriers[domain].append(
                    {
                        "courierId": c["courierId"],
                        "lon": float(member["lon"]),
                        "lat": float(member["lat"]),
                        "movePerTick": float(member.get("moveMetersPerTick", 0.0)),
                        "heading": float(member.get("headingDegrees", 90.0)),
                        "acceptProbability": member.get("acceptProbability"),
                    }
                )

    @staticmethod
    def _record(inst: dict[str, Any], territory: dict[str, Any]) -> InstanceRecord:
        domain = inst["domainName"]
        return InstanceRecord(
            instanceName=inst["instanceName"],
            admin="ops",
            contact=f"ops@{domain}",
            domainName=domain,
            termsOfServiceUrl=f"https://{domain}/tos",
            privacyPolicyUrl=f"https://{domain}/privacy",
            location=territory,
            languages=("en",),
            description="simulated instance",
            logoUrl=f"https://{domain}/logo.png",
        )

    def emit(self, kind: str, **fields: Any) -> None:
        self.log.append({"at": to_iso(self.clock.now()), "kind": kind, **fields})

    def broadcast(self, requester_id: str, filters: dict[str, Any], quote_raw: dict[str, Any]):
        matched = query_instances(
            self.registry,
            point=filters.get("point"),
            language=filters.get("language"),
            text=filters.get("text"),
        )
        hosted = [r for r in matched if r.domainName in self.instances]
        if not hosted:
            raise ProtocolError(NO_MATCHING_INSTANCE, "no instance matches the broadcast filter")
        group_id = new_uuid(self.script_rng)
        threads = []
        for rec in hosted:
            svc = self.instances[rec.domainName]
            threads.append(svc.quotes.create(requester_id, rec.domainName, quote_raw, group_id))
        self.coordinator.create_group(group_id, [(t["instanceDomain"], t["threadId"]) for t in threads])
        return group_id, threads


def run_scenario(raw: Any) -> tuple[list[str], dict[str, Any]]:
    """Execute a scenario; returns (JSON-lines event log, final snapshot)."""
    scenario = load_scenario(raw)
    eco = Ecosystem(scenario)
    tick = scenario["tickSeconds"]
    end = from_iso(scenario["startAt"]) + timedelta(minutes=scenario["durationMinutes"])
    accept_default = scenario["courierScript"]["acceptProbability"]

    # constructor-time enrollment events already sit in the log; the start
    # marker still belongs in front of them (same virtual instant)
    eco.log.insert(0, {
        "at": scenario["startAt"], "kind": "scenario_start", "seed": scenario["seed"],
        "instances": sorted(eco.instances), "tickSeconds": tick,
    })

    # negotiations in flight: one response step per tick keeps rounds interleaved
    pending: list[dict[str, Any]] = []
    script = sorted(
        enumerate(scenario["requesterScript"]), key=lambda p: (p[1]["atMinute"], p[0])
    )
    cursor = 0

    while eco.clock.now() < end:
        now = eco.clock.now()
        minute = (now - from_iso(scenario["startAt"])).total_seconds() / 60.0

        # 1. fire scheduled requester actions
        while cursor < len(script) and script[cursor][1]["atMinute"] <= minute:
            _, entry = script[cursor]
            cursor += 1
            _start_action(eco, entry, pending)

        # 2. play one negotiation step per open thread
        still = []
        for work in pending:
            if _step_negotiation(eco, work):
                still.append(work)
        pending = still

        # 3. couriers look at their boards
        for domain in sorted(eco.instances):
            _drive_couriers(eco, domain, accept_default)

        # 4. lapse any quotes that ran out
        for domain in sorted(eco.instances):
            n = eco.instances[domain].quotes.expire_quotes()
            if n:
                eco.emit("quotes_expired", instance=domain, count=n)

        eco.clock.advance_by(tick)

    snapshot = _snapshot(eco, scenario)
    eco.emit("scenario_end", **snapshot)
    lines = [json.dumps(e, sort_keys=True) for e in eco.log]
    return lines, snapshot


def _start_action(eco: Ecosystem, entry: dict[str, Any], pending: list[dict[str, Any]]) -> None:
    requester = "req-script"
    if entry["action"] == "quote":
        domain = entry["instance"]
        svc = eco.instances[domain]
        quote_raw = _default_quote(eco.clock.now(), svc.cfg.territory)
        quote_raw.update(entry["quote"])
        try:
            thread = svc.quotes.create(requester, domain, quote_raw)
        except ProtocolError as e:
            eco.emit("script_error", action="quote", instance=domain, code=e.code)
            return
        eco.emit("thread_created", instance=domain, threadId=thread["threadId"])
        pending.append(
            {"kind": "thread", "domain": domain, "threadId": thread["threadId"],
             "steps": list(entry["responses"]), "requester": requester}
        )
        return

    # broadcast: siblings race to accept on the next tick
    filters = dict(entry["filters"])
    if "lon" in filters and "lat" in filters:
        filters["point"] = (filters.pop("lon"), filters.pop("lat"))
    first_domain = sorted(eco.instances)[0]
    quote_raw = _default_quote(eco.clock.now(), eco.instances[first_domain].cfg.territory)
    quote_raw.update(entry["quote"])
    try:
        group_id, threads = eco.broadcast(requester, filters, quote_raw)
    except ProtocolError as e:
        eco.emit("script_error", action="broadcast", code=e.code)
        return
    eco.emit(
        "broadcast_created",
        broadcastGroupId=group_id,
        threads=[{"instance": t["instanceDomain"], "threadId": t["threadId"]} for t in threads],
    )
    accepts = entry["accepts"]
    racers = [
        t for t in threads
        if accepts == "all" or t["instanceDomain"] in accepts
    ]
    # deterministic mode: ascending threadId settles who claims first
    racers.sort(key=lambda t: t["threadId"])
    pending.append(
        {"kind": "race", "group": group_id, "requester": requester,
         "racers": [(t["instanceDomain"], t["threadId"]) for t in racers]}
    )


def _step_negotiation(eco: Ecosystem, work: dict[str, Any]) -> bool:
    """Advance one pending negotiation by one step; False when finished."""
    if work["kind"] == "race":
        winner = None
        for domain, thread_id in work["racers"]:  # every sibling tries
            svc = eco.instances[domain]
            try:
                svc.quotes.respond(thread_id, "INSTANCE", "ACCEPT")
            except ProtocolError as e:
                eco.emit("race_lost", instance=domain, threadId=thread_id, code=e.code)
                continue
            eco.emit("race_won", instance=domain, threadId=thread_id)
            winner = (domain, thread_id)
        if winner is not None:
            _finalize(eco, winner[0], winner[1])
        return False

    domain, thread_id = work["domain"], work["threadId"]
    svc = eco.instances[domain]
    if not work["steps"]:
        return False
    step = work["steps"].pop(0)
    parts = step.split(":")
    by, verb = parts[0], parts[1]
    amount = parts[2] if len(parts) == 3 else None
    try:
        thread = svc.quotes.respond(thread_id, by, verb, amount=amount)
    except ProtocolError as e:
        eco.emit("respond_failed", instance=domain, threadId=thread_id,
                 step=step, code=e.code)
        return bool(work["steps"])
    eco.emit("round", instance=domain, threadId=thread_id, by=by, verb=verb,
             state=thread["state"])
    if thread["state"] == "ACCEPTED":
        _finalize(eco, domain, thread_id)
        return False
    if thread["state"] in ("REJECTED", "EXPIRED", "FINALIZED"):
        return False
    return bool(work["steps"])


def _finalize(eco: Ecosystem, domain: str, thread_id: str) -> None:
    svc = eco.instances[domain]
    try:
        thread, delivery = svc.quotes.finalize(thread_id)
    except ProtocolError as e:
        eco.emit("finalize_failed", instance=domain, threadId=thread_id, code=e.code)
        return
    eco.emit("finalized", instance=domain, threadId=thread_id,
             deliveryId=delivery.deliveryId, payout=delivery.payoutMinor)


def _drive_couriers(eco: Ecosystem, domain: str, accept_default: float) -> None:
    svc = eco.instances[domain]
    for courier in eco.couriers[domain]:
        cid = courier["courierId"]
        if courier["movePerTick"]:
            rad = math.radians(courier["heading"])
            courier["lat"] += courier["movePerTick"] * math.cos(rad) / M_PER_DEG_LAT
            courier["lon"] += (
                courier["movePerTick"] * math.sin(rad)
                / (M_PER_DEG_LAT * math.cos(math.radians(courier["lat"])))
            )
        svc.update_position(cid, courier["lon"], courier["lat"])

        p_accept = courier["acceptProbability"]
        if p_accept is None:
            p_accept = accept_default
        principal = Principal("COURIER", cid, "sim", ())
        for d in svc.list_deliveries(cid, "NEW"):
            roll = eco.script_rng.random()
            action = "accept" if roll < p_accept else "reject"
            try:
                svc.delivery_event(d.deliveryId, action, principal)
            except ProtocolError as e:
                eco.emit("courier_action_failed", instance=domain,
                         deliveryId=d.deliveryId, action=action, code=e.code)
        for d in svc.list_deliveries(cid, "IN_PROGRESS"):
            done = {h["event"] for h in d.history}
            for ev in PHASE_EVENTS:
                if ev.value not in done:
                    try:
                        svc.delivery_event(d.deliveryId, ACTION_FOR_EVENT[ev], principal)
                    except ProtocolError as e:
                        eco.emit("courier_action_failed", instance=domain,
                                 deliveryId=d.deliveryId, action=ev.value, code=e.code)
                    break  # one phase step per tick


def _snapshot(eco: Ecosystem, scenario: dict[str, Any]) -> dict[str, Any]:
    start = from_iso(scenario["startAt"])
    end = eco.clock.now()
    per_instance = {}
    totals = {"finalized": 0, "delivered": 0, "canceled": 0, "inFlight": 0}
    for domain in sorted(eco.instances):
        svc = eco.instances[domain]
        chains: dict[str, list] = {}
        for d in svc.all_deliveries():
            chains.setdefault(d.chainId or d.deliveryId, []).append(d)
        delivered = canceled = in_flight = 0
        for chain_id, rows in sorted(chains.items()):
            states = {d.status for d in rows}
            chain_rec = svc.store.get(f"chain/{chain_id}")
            closed = chain_rec is not None and chain_rec.value.get("state") == "CANCELED"
            if DeliveryStatus.DELIVERED in states:
                delivered += 1
            elif DeliveryStatus.CANCELED in states or closed:
                canceled += 1
            else:
                in_flight += 1
        finalized = sum(
            1 for t in svc.quotes.list_threads() if t["state"] == "FINALIZED"
        )
        m = svc.metrics(start, end)
        per_instance[domain] = {
            "finalizedThreads": finalized,
            "createdChains": len(chains),
            "delivered": delivered,
            "canceled": canceled,
            "inFlight": in_flight,
            "metrics": m,
        }
        totals["finalized"] += finalized
        totals["delivered"] += delivered
        totals["canceled"] += canceled
        totals["inFlight"] += in_flight
    return {"instances": per_instance, "totals": totals}


# -- log replay checker ---------------------------------------------------------


def verify_log(lines: list[str]) -> list[str]:
    """Replay a JSON-lines event log; returns problems (empty list = valid)."""
    problems: list[str] = []
    events: list[dict[str, Any]] = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            e = json.loads(line)
        except json.JSONDecodeError:
            problems.append(f"line {n}: not valid JSON")
            continue
        if not isinstance(e, dict) or "at" not in e or "kind" not in e:
            problems.append(f"line {n}: event must be an object with at and kind")
            continue
        events.append(e)
    if problems:
        return problems

    last_at: Optional[datetime] = None
    state: dict[str, tuple[DeliveryStatus, TripPhase]] = {}
    chain_of: dict[str, str] = {}
    chain_delivered: dict[str, bool] = {}
    chain_canceled: dict[str, bool] = {}
    finalized = 0
    created = 0

    for n, e in enumerate(events, 1):
        try:
            at = from_iso(e["at"])
        except (ValueError, TypeError):
            problems.append(f"line {n}: bad timestamp {e['at']!r}")
            continue
        if last_at is not None and at < last_at:
            problems.append(f"line {n}: timestamp moves backwards ({e['at']})")
        last_at = at

        kind = e["kind"]
        if kind == "delivery_created":
            did = e.get("deliveryId")
            if did in state:
                problems.append(f"line {n}: delivery {did} created twice")
                continue
            state[did] = (DeliveryStatus.CREATED, TripPhase.NONE)
            chain = e.get("chainId") or did
            chain_of[did] = chain
            chain_delivered.setdefault(chain, False)
            chain_canceled.setdefault(chain, False)
            created += 1
        elif kind == "finalized":
            finalized += 1
        elif kind in ("dispatched", "redispatched"):
            did = e.get("deliveryId")
            if kind == "redispatched":
                if did in state:
                    problems.append(f"line {n}: redispatch reuses delivery id {did}")
                    continue
                state[did] = (DeliveryStatus.CREATED, TripPhase.NONE)
                chain = e.get("chainId") or did
                chain_of[did] = chain
                chain_delivered.setdefault(chain, False)
                chain_canceled.setdefault(chain, False)
            if did not in state:
                problems.append(f"line {n}: dispatch of unknown delivery {did}")
                continue
            s, p = state[did]
            edge = (s, p, TransitionEvent.DISPATCH)
            if edge not in EDGES:
                problems.append(
                    f"line {n}: illegal edge ({s.value}, {p.value}) --DISPATCH-> for {did}"
                )
                continue
            state[did] = EDGES[edge]
        elif kind == "transition":
            did = e.get("deliveryId")
            if did not in state:
                problems.append(f"line {n}: transition on unknown delivery {did}")
                continue
            try:
                ev = TransitionEvent(e.get("event"))
            except ValueError:
                problems.append(f"line {n}: unknown event {e.get('event')!r}")
                continue
            s, p = state[did]
            if ev is TransitionEvent.REPORT_ISSUE and s in TERMINAL_STATUSES:
                new = (s, p)  # grace-window identity on DELIVERED rows
                if s is not DeliveryStatus.DELIVERED:
                    problems.append(
                        f"line {n}: illegal edge ({s.value}, {p.value}) "
                        f"--REPORT_ISSUE-> for {did}"
                    )
                    continue
            else:
                edge = (s, p, ev)
                if edge not in EDGES:
                    problems.append(
                        f"line {n}: illegal edge ({s.value}, {p.value}) --{ev.value}-> for {did}"
                    )
                    continue
                new = EDGES[edge]
            state[did] = new
            claimed = (e.get("status"), e.get("tripPhase"))
            if claimed != (new[0].value, new[1].value):
                problems.append(
                    f"line {n}: log claims ({claimed[0]}, {claimed[1]}) but "
                    f"{ev.value} lands in ({new[0].value}, {new[1].value})"
                )
            if new[0] is DeliveryStatus.DELIVERED:
                chain_delivered[chain_of[did]] = True
            if new[0] is DeliveryStatus.CANCELED:
                chain_canceled[chain_of[did]] = True
        elif kind == "chain_canceled":
            chain = e.get("chainId")
            if chain is not None:
                chain_canceled[chain] = True

    chains = set(chain_of.values())
    if finalized != len(chains):
        problems.append(
            f"conservation: {finalized} finalized threads but {len(chains)} task chains"
        )
    delivered = sum(1 for c in chains if chain_delivered.get(c))
    canceled = sum(1 for c in chains if chain_canceled.get(c) and not chain_delivered.get(c))
    in_flight = len(chains) - delivered - canceled
    if delivered + canceled + in_flight != finalized:
        problems.append(
            f"conservation: delivered {delivered} + canceled {canceled} + "
            f"in-flight {in_flight} != finalized {finalized}"
        )
    return problems
