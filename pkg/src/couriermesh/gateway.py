"""HTTP surface: route table, auth, error mapping, and the wire adapter.

The router itself is transport-free (Request in, Response out) so tests and
the simulation can drive it without sockets. A thin http.server adapter at
the bottom serves the same router over TCP.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Optional
from urllib.parse import parse_qsl, urlsplit

from .auth import Principal
from .clock import from_iso
from .errors import (
    ALREADY_FINALIZED,
    CORRUPT_RECORD,
    DUPLICATE_DOMAIN,
    EMPTY_RANGE,
    EXPIRED,
    FORBIDDEN_ACTOR,
    ILLEGAL_STATE,
    ILLEGAL_TRANSITION,
    INVALID_GEOMETRY,
    ISSUE_WINDOW_CLOSED,
    NO_CANDIDATE,
    NO_MATCHING_INSTANCE,
    NOT_ACCEPTED,
    NOT_FOUND,
    OUT_OF_TURN,
    PARSE_ERROR,
    READ_ONLY_REGISTRY,
    ROUND_LIMIT,
    SCENARIO_INVALID,
    SOURCE_UNAVAILABLE,
    THREAD_CLOSED,
    UNAUTHENTICATED,
    UNAUTHORIZED,
    UNKNOWN_INSTANCE,
    VALIDATION_ERROR,
    VERSION_CONFLICT,
    ProtocolError,
)
from .instance import InstanceService
from .quoting import thread_to_api
from .registry import InstanceRecord, Registry, query_instances, register_instance

HTTP_STATUS = {
    PARSE_ERROR: 400,
    VALIDATION_ERROR: 400,
    INVALID_GEOMETRY: 400,
    SCENARIO_INVALID: 400,
    EMPTY_RANGE: 400,
    UNAUTHENTICATED: 401,
    UNAUTHORIZED: 403,
    FORBIDDEN_ACTOR: 403,
    NOT_FOUND: 404,
    ILLEGAL_TRANSITION: 409,
    THREAD_CLOSED: 409,
    ILLEGAL_STATE: 409,
    VERSION_CONFLICT: 409,
    DUPLICATE_DOMAIN: 409,
    ALREADY_FINALIZED: 409,
    ISSUE_WINDOW_CLOSED: 409,
    EXPIRED: 409,
    OUT_OF_TURN: 409,
    NOT_ACCEPTED: 409,
    READ_ONLY_REGISTRY: 409,
    ROUND_LIMIT: 422,
    NO_CANDIDATE: 422,
    NO_MATCHING_INSTANCE: 422,
    UNKNOWN_INSTANCE: 422,
    SOURCE_UNAVAILABLE: 503,
    CORRUPT_RECORD: 500,
}


@dataclass
class Request:
    method: str
    path: str
    headers: dict[str, str] = field(default_factory=dict)
    body: Any = None
    query: dict[str, str] = field(default_factory=dict)

    def header(self, name: str) -> Optional[str]:
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return None


@dataclass
class Response:
    status: int
    body: Any = None
    content_type: str = "application/json"

    def encode(self) -> bytes:
        if self.content_type == "application/json":
            return json.dumps(self.body, sort_keys=True).encode()
        return str(self.body).encode()


def error_response(code: str, message: str, details: Any = None) -> Response:
    return Response(
        HTTP_STATUS.get(code, 500),
        {"error": {"code": code, "message": message, "details": details or {}}},
    )


@dataclass(frozen=True)
class Route:
    method: str
    path: str          # template; {name} segments capture
    auth: Optional[str]  # principal kind required, None = public
    handler: str       # Gateway method name

    @property
    def segments(self) -> tuple[str, ...]:
        return tuple(self.path.strip("/").split("/"))


def _match(route: Route, method: str, path: str) -> Optional[dict[str, str]]:
    if route.method != method:
        return None
    got = tuple(path.strip("/").split("/"))
    want = route.segments
    if len(got) != len(want):
        return None
    params: dict[str, str] = {}
    for w, g in zip(want, got):
        if w.startswith("{") and w.endswith("}"):
            if not g:
                return None
            params[w[1:-1]] = g
        elif w != g:
            return None
    return params


# Printed-path table; literal routes must precede the {param} routes they shadow.
ROUTE_TABLE: tuple[Route, ...] = (
    # deliveries, admin side
    Route("GET", "/api/admin/v1/deliveries/{deliveryId}", "ADMIN", "admin_get_delivery"),
    Route("GET", "/api/admin/v1/deliveries", "ADMIN", "admin_list_deliveries"),
    # deliveries, courier side
    Route("GET", "/api/courier/v1/deliveries/new", "COURIER", "courier_list_new"),
    Route("GET", "/api/courier/v1/deliveries/in-progress", "COURIER", "courier_list_in_progress"),
    Route("GET", "/api/courier/v1/deliveries/done", "COURIER", "courier_list_done"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/accept", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/reject", "COURIER", "courier_action"),
    Route("PATCH", "/api/courier/v1/deliveries/{deliveryId}/cancel", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-dispatched", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/arrived-at-pickup", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-picked-up", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-on-the-way", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/arrived-at-dropoff", "COURIER", "courier_action"),
    Route("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-delivered", "COURIER", "courier_action"),
    Route("PATCH", "/api/courier/v1/deliveries/{deliveryId}/report-issue", "COURIER", "courier_action"),
    # preferences document
    Route("GET", "/api/courier/v1/settings", "COURIER", "get_settings"),
    Route("PATCH", "/api/courier/v1/settings", "COURIER", "patch_settings"),
    # location notes; /near shadows /{locationNoteId} so it comes first
    Route("POST", "/api/courier/v1/location-notes", "COURIER", "note_create"),
    Route("GET", "/api/courier/v1/location-notes", "COURIER", "note_list_mine"),
    Route("GET", "/api/courier/v1/location-notes/near", "COURIER", "note_list_near"),
    Route("PATCH", "/api/courier/v1/location-notes/{locationNoteId}", "COURIER", "note_update"),
    Route("GET", "/api/courier/v1/location-notes/{locationNoteId}", "COURIER", "note_get"),
    Route("DELETE", "/api/courier/v1/location-notes/{locationNoteId}", "COURIER", "note_delete"),
    Route("POST", "/api/courier/v1/location-notes/{locationNoteId}/react", "COURIER", "note_react"),
    # courier presence (enrollment flow extension)
    Route("PUT", "/api/courier/v1/availability", "COURIER", "put_availability"),
    Route("PUT", "/api/courier/v1/position", "COURIER", "put_position"),
    # negotiation, requester side
    Route("POST", "/api/requester/v1/quotes/broadcast", "REQUESTER", "quote_broadcast"),
    Route("POST", "/api/requester/v1/quotes", "REQUESTER", "quote_create"),
    Route("POST", "/api/requester/v1/quotes/{threadId}/respond", "REQUESTER", "quote_respond_requester"),
    Route("POST", "/api/requester/v1/quotes/{threadId}/finalize", "REQUESTER", "quote_finalize"),
    Route("GET", "/api/requester/v1/quotes/{threadId}", "REQUESTER", "quote_get"),
    # negotiation, instance side
    Route("POST", "/api/instance/v1/quotes/{threadId}/respond", "ADMIN", "quote_respond_instance"),
    Route("GET", "/api/instance/v1/quotes", "ADMIN", "quote_list"),
    Route("GET", "/api/instance/v1/quotes/{threadId}", "ADMIN", "quote_get"),
    # admin: fleet, policy, disclosure
    Route("POST", "/api/admin/v1/couriers", "ADMIN", "admin_create_courier"),
    Route("GET", "/api/admin/v1/couriers", "ADMIN", "admin_list_couriers"),
    Route("POST", "/api/admin/v1/requesters", "ADMIN", "admin_create_requester"),
    Route("GET", "/api/admin/v1/assignment-policy", "ADMIN", "get_policy"),
    Route("PUT", "/api/admin/v1/assignment-policy", "ADMIN", "put_policy"),
    Route("GET", "/api/admin/v1/disclosure/export.csv", "ADMIN", "disclosure_export"),
    Route("GET", "/api/admin/v1/disclosure/metrics", "ADMIN", "disclosure_metrics"),
)

REGISTRY_ROUTES: tuple[Route, ...] = (
    Route("GET", "/api/registry/v1/instances", None, "registry_query"),
    Route("POST", "/api/registry/v1/instances", None, "registry_register"),
)

_MUTATING = ("POST", "PUT", "PATCH", "DELETE")


class Gateway:
    """One instance's HTTP contract over its service layer."""

    def __init__(self, svc: InstanceService):
        self.svc = svc
        self.routes = ROUTE_TABLE

    # -- entry point -----------------------------------------------------------

    def route(self, req: Request) -> Response:
        matched = None
        params: dict[str, str] = {}
        for r in self.routes:
            p = _match(r, req.method, req.path)
            if p is not None:
                matched, params = r, p
                break
        if matched is None:
            return error_response(NOT_FOUND, f"no route {req.method} {req.path}")

        try:
            principal = self._authorize(matched, req)
        except ProtocolError as e:
            return error_response(e.code, str(e.args[0]) if e.args else e.code, e.details)

        idem_key = req.header("Idempotency-Key")
        store_key = None
        if idem_key and req.method in _MUTATING:
            digest = hashlib.sha256(
                f"{req.method} {req.path} {idem_key}".encode()
            ).hexdigest()
            store_key = f"idem/{digest}"
            prior = self.svc.store.get(store_key)
            if prior is not None:
                v = prior.value
                return Response(v["status"], v["body"], v["contentType"])

        try:
            resp = getattr(self, matched.handler)(req, params, principal)
        except ProtocolError as e:
            resp = error_response(e.code, str(e.args[0]) if e.args else e.code, e.details)

        if store_key is not None:
            self.svc.store.put(
                store_key,
                {"status": resp.status, "body": resp.body, "contentType": resp.content_type},
                None,
            )
        return resp

    def _authorize(self, route: Route, req: Request) -> Optional[Principal]:
        if route.auth is None:
            return None
        header = req.header("Authorization") or ""
        if not header.startswith("Bearer "):
            raise ProtocolError(UNAUTHENTICATED, "bearer token required")
        principal = self.svc.auth.authenticate(header[len("Bearer "):].strip())
        if principal.kind != route.auth:
            raise ProtocolError(
                FORBIDDEN_ACTOR, f"{route.auth} credentials required", {"kind": principal.kind}
            )
        return principal

    # -- body/query plumbing -----------------------------------------------------

    @staticmethod
    def _body(req: Request) -> dict[str, Any]:
        if req.body is None:
            return {}
        if not isinstance(req.body, dict):
            raise ProtocolError(VALIDATION_ERROR, "JSON object body required")
        return req.body

    @staticmethod
    def _float_param(req: Request, name: str) -> float:
        raw = req.query.get(name)
        if raw is None:
            raise ProtocolError(VALIDATION_ERROR, f"query parameter {name!r} required")
        try:
            return float(raw)
        except ValueError:
            raise ProtocolError(VALIDATION_ERROR, f"{name!r} must be a number") from None

    @staticmethod
    def _range_params(req: Request) -> tuple:
        out = []
        for name in ("from", "to"):
            raw = req.query.get(name)
            if raw is None:
                raise ProtocolError(VALIDATION_ERROR, f"query parameter {name!r} required")
            try:
                out.append(from_iso(raw))
            except (ValueError, TypeError):
                raise ProtocolError(VALIDATION_ERROR, f"{name!r} must be an ISO-8601 instant") from None
        return tuple(out)

    # -- courier handlers -----------------------------------------------------------

    def courier_list_new(self, req, params, p) -> Response:
        return Response(200, [d.to_dict() for d in self.svc.list_deliveries(p.id, "NEW")])

    def courier_list_in_progress(self, req, params, p) -> Response:
        return Response(200, [d.to_dict() for d in self.svc.list_deliveries(p.id, "IN_PROGRESS")])

    def courier_list_done(self, req, params, p) -> Response:
        return Response(200, [d.to_dict() for d in self.svc.list_deliveries(p.id, "DONE")])

    def courier_action(self, req, params, p) -> Response:
        action = req.path.rstrip("/").rsplit("/", 1)[-1]
        issue = None
        if action == "report-issue":
            body = self._body(req)
            issue = body.get("issue") or body or None
        d = self.svc.delivery_event(params["deliveryId"], action, p, issue=issue)
        return Response(200, d.to_dict())

    def get_settings(self, req, params, p) -> Response:
        return Response(200, self.svc.get_settings(p.id))

    def patch_settings(self, req, params, p) -> Response:
        return Response(200, self.svc.patch_settings(p.id, self._body(req)))

    def put_availability(self, req, params, p) -> Response:
        body = self._body(req)
        return Response(200, self.svc.set_availability(p.id, body.get("availability")))

    def put_position(self, req, params, p) -> Response:
        body = self._body(req)
        if "lon" not in body or "lat" not in body:
            raise ProtocolError(VALIDATION_ERROR, "lon and lat required")
        return Response(200, self.svc.update_position(p.id, body["lon"], body["lat"]))

    # -- note handlers -----------------------------------------------------------------

    def note_create(self, req, params, p) -> Response:
        body = self._body(req)
        if "lon" not in body or "lat" not in body:
            raise ProtocolError(VALIDATION_ERROR, "lon and lat required")
        note = self.svc.notes.create(p.id, (body["lon"], body["lat"]), body.get("text", ""))
        return Response(201, note)

    def note_list_mine(self, req, params, p) -> Response:
        return Response(200, self.svc.notes.list_mine(p.id))

    def note_list_near(self, req, params, p) -> Response:
        lon = self._float_param(req, "lon")
        lat = self._float_param(req, "lat")
        radius = self._float_param(req, "radius")
        return Response(200, self.svc.notes.list_near((lon, lat), radius))

    def note_get(self, req, params, p) -> Response:
        return Response(200, self.svc.notes.get(params["locationNoteId"]))

    def note_update(self, req, params, p) -> Response:
        body = self._body(req)
        return Response(200, self.svc.notes.update(p.id, params["locationNoteId"], body.get("text", "")))

    def note_delete(self, req, params, p) -> Response:
        self.svc.notes.delete(p.id, params["locationNoteId"])
        return Response(204, None)

    def note_react(self, req, params, p) -> Response:
        body = self._body(req)
        return Response(200, self.svc.notes.react(p.id, params["locationNoteId"], body.get("emoji", "")))

    # -- negotiation handlers --------------------------------------------------------------

    def quote_create(self, req, params, p) -> Response:
        body = self._body(req)
        domain = body.get("instanceDomain") or self.svc.cfg.domainName
        quote = body.get("quote")
        if not isinstance(quote, dict):
            raise ProtocolError(VALIDATION_ERROR, "body must carry a quote object")
        thread = self.svc.quotes.create(p.id, domain, quote)
        return Response(201, thread_to_api(thread))

    def quote_broadcast(self, req, params, p) -> Response:
        body = self._body(req)
        quote = body.get("quote")
        if not isinstance(quote, dict):
            raise ProtocolError(VALIDATION_ERROR, "body must carry a quote object")
        filters: dict[str, Any] = {}
        f = body.get("filters") or {}
        if "lon" in f and "lat" in f:
            filters["point"] = (f["lon"], f["lat"])
        if "language" in f:
            filters["language"] = f["language"]
        if "q" in f:
            filters["text"] = f["q"]
        threads = self.svc.quotes.broadcast(p.id, self.svc.registry, filters, quote)
        return Response(201, [thread_to_api(t) for t in threads])

    def _respond(self, thread_id: str, by: str, body: dict[str, Any]) -> Response:
        kind = body.get("kind")
        if kind not in ("ACCEPT", "REJECT", "COUNTER", "OFFER"):
            raise ProtocolError(VALIDATION_ERROR, "kind must be ACCEPT, REJECT or COUNTER")
        thread = self.svc.quotes.respond(
            thread_id, by, kind, message=body.get("message", ""), amount=body.get("amount")
        )
        return Response(200, thread_to_api(thread))

    def quote_respond_requester(self, req, params, p) -> Response:
        return self._respond(params["threadId"], "REQUESTER", self._body(req))

    def quote_respond_instance(self, req, params, p) -> Response:
        return self._respond(params["threadId"], "INSTANCE", self._body(req))

    def quote_finalize(self, req, params, p) -> Response:
        thread, delivery = self.svc.quotes.finalize(params["threadId"])
        return Response(200, {"thread": thread_to_api(thread), "delivery": delivery.to_dict()})

    def quote_get(self, req, params, p) -> Response:
        rec = self.svc.store.get(f"thread/{params['threadId']}")
        if rec is None:
            raise ProtocolError(NOT_FOUND, f"no thread {params['threadId']!r}")
        return Response(200, thread_to_api(rec.value))

    def quote_list(self, req, params, p) -> Response:
        return Response(200, [thread_to_api(t) for t in self.svc.quotes.list_threads()])

    # -- admin handlers ---------------------------------------------------------------------

    def admin_get_delivery(self, req, params, p) -> Response:
        return Response(200, self.svc.get_delivery(params["deliveryId"]).to_dict())

    def admin_list_deliveries(self, req, params, p) -> Response:
        rows = self.svc.all_deliveries()
        status = req.query.get("status")
        if status:
            rows = [d for d in rows if d.status.value == status]
        return Response(200, [d.to_dict() for d in rows])

    def admin_create_courier(self, req, params, p) -> Response:
        body = self._body(req)
        out = self.svc.create_courier(
            body.get("displayName", ""), body.get("vehicleType", "BICYCLE")
        )
        return Response(201, out)

    def admin_list_couriers(self, req, params, p) -> Response:
        return Response(200, self.svc.list_couriers())

    def admin_create_requester(self, req, params, p) -> Response:
        from .ids import new_uuid

        body = self._body(req)
        rid = body.get("requesterId") or new_uuid(self.svc.rng)
        issued = self.svc.auth.issue("REQUESTER", rid)
        return Response(201, {"requesterId": rid, "token": issued.token})

    def get_policy(self, req, params, p) -> Response:
        return Response(200, self.svc.get_policy().to_dict())

    def put_policy(self, req, params, p) -> Response:
        return Response(200, self.svc.set_policy(self._body(req)).to_dict())

    def disclosure_export(self, req, params, p) -> Response:
        frm, to = self._range_params(req)
        return Response(200, self.svc.export_csv(frm, to), content_type="text/csv")

    def disclosure_metrics(self, req, params, p) -> Response:
        frm, to = self._range_params(req)
        return Response(200, self.svc.metrics(frm, to))


class RegistryGateway:
    """Service-mode registry: open directory reads, instance registration."""

    def __init__(self, registry: Optional[Registry] = None):
        self.registry = registry or Registry(sourceKind="SERVICE")
        self.routes = REGISTRY_ROUTES
        self._lock = threading.Lock()

    def route(self, req: Request) -> Response:
        for r in self.routes:
            if _match(r, req.method, req.path) is not None:
                try:
                    return getattr(self, r.handler)(req)
                except ProtocolError as e:
                    return error_response(e.code, str(e.args[0]) if e.args else e.code, e.details)
        return error_response(NOT_FOUND, f"no route {req.method} {req.path}")

    def registry_query(self, req: Request) -> Response:
        point = None
        if "lon" in req.query or "lat" in req.query:
            try:
                point = (float(req.query["lon"]), float(req.query["lat"]))
            except (KeyError, ValueError):
                raise ProtocolError(VALIDATION_ERROR, "lon and lat must both be numbers") from None
        with self._lock:
            rows = query_instances(
                self.registry,
                point=point,
                language=req.query.get("language"),
                text=req.query.get("q"),
            )
        return Response(200, [r.to_dict() for r in rows])

    def registry_register(self, req: Request) -> Response:
        if not isinstance(req.body, dict):
            raise ProtocolError(VALIDATION_ERROR, "JSON object body required")
        rec = InstanceRecord.from_dict(req.body)
        with self._lock:
            self.registry = register_instance(self.registry, rec)
        return Response(201, rec.to_dict())


# -- wire adapter ---------------------------------------------------------------------------


def make_http_server(router: Any, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind `router.route` to a TCP socket. Port 0 picks a free port."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _serve(self) -> None:
            split = urlsplit(self.path)
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            body: Any = None
            if raw:
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    self._write(error_response(PARSE_ERROR, "request body is not valid JSON"))
                    return
            req = Request(
                method=self.command,
                path=split.path,
                headers=dict(self.headers.items()),
                body=body,
                query=dict(parse_qsl(split.query)),
            )
            self._write(router.route(req))

        def _write(self, resp: Response) -> None:
            payload = b"" if resp.status == 204 else resp.encode()
            self.send_response(resp.status)
            self.send_header("Content-Type", resp.content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            if payload:
                self.wfile.write(payload)

        do_GET = do_POST = do_PUT = do_PATCH = do_DELETE = _serve

        def log_message(self, fmt: str, *args: Any) -> None:
            pass  # quiet; the service layer has its own event log

    return ThreadingHTTPServer((host, port), Handler)
