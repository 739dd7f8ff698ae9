// HTTP client layer. Paths are always produced by routes.fill over the
// published templates; nothing in here concatenates URL strings by hand.

import { fill, GATEWAY_ROUTES, REGISTRY_ROUTES } from "./routes.js";
import type {
  Availability,
  CourierRecord,
  DeliveryView,
  EnrolledCourier,
  ErrorEnvelope,
  InstanceRecordView,
  LocationNote,
  MetricsView,
  PolicyView,
  PreferencesView,
  RoundKind,
  ThreadView,
} from "./types.js";

export interface ApiRequest {
  method: string;
  path: string; // concrete path, no query string
  query?: Record<string, string>;
  body?: unknown;
}

export interface ApiResponse {
  status: number;
  body: unknown; // parsed JSON, or raw text for non-JSON content
  contentType: string;
}

export interface Transport {
  send(req: ApiRequest): Promise<ApiResponse>;
}

export class ApiError extends Error {
  readonly status: number;
  /** The server's error envelope, untouched, for verbatim display. */
  readonly envelope: ErrorEnvelope | null;

  constructor(status: number, envelope: ErrorEnvelope | null, fallback: string) {
    super(envelope ? envelope.error.message : fallback);
    this.name = "ApiError";
    this.status = status;
    this.envelope = envelope;
  }

  get code(): string {
    return this.envelope ? this.envelope.error.code : `HTTP_${this.status}`;
  }
}

function asEnvelope(body: unknown): ErrorEnvelope | null {
  if (typeof body !== "object" || body === null) return null;
  const err = (body as Record<string, unknown>)["error"];
  if (typeof err !== "object" || err === null) return null;
  const e = err as Record<string, unknown>;
  if (typeof e["code"] !== "string" || typeof e["message"] !== "string") return null;
  return body as unknown as ErrorEnvelope;
}

export class HttpTransport implements Transport {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  async send(req: ApiRequest): Promise<ApiResponse> {
    let url = this.baseUrl.replace(/\/$/, "") + req.path;
    if (req.query && Object.keys(req.query).length > 0) {
      url += "?" + new URLSearchParams(req.query).toString();
    }
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (req.body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchImpl(url, {
      method: req.method,
      headers,
      body: req.body === undefined ? undefined : JSON.stringify(req.body),
    });
    const contentType = resp.headers.get("content-type") ?? "";
    const text = await resp.text();
    let body: unknown = null;
    if (text !== "") {
      body = contentType.includes("application/json") ? JSON.parse(text) : text;
    }
    return { status: resp.status, body, contentType };
  }
}

export interface RequestRecord {
  method: string;
  path: string;
}

/** Wraps a transport and logs every (method, path) the session issues. */
export class RecordingTransport implements Transport {
  readonly log: RequestRecord[] = [];

  constructor(private readonly inner: Transport) {}

  send(req: ApiRequest): Promise<ApiResponse> {
    this.log.push({ method: req.method, path: req.path });
    return this.inner.send(req);
  }
}

interface CallOpts {
  params?: Record<string, string>;
  query?: Record<string, string>;
  body?: unknown;
}

class Client {
  constructor(protected readonly transport: Transport) {}

  protected async call<T>(method: string, template: string, opts: CallOpts = {}): Promise<T> {
    const resp = await this.transport.send({
      method,
      path: fill(template, opts.params),
      query: opts.query,
      body: opts.body,
    });
    if (resp.status >= 400) {
      throw new ApiError(resp.status, asEnvelope(resp.body), `HTTP ${resp.status}`);
    }
    return resp.body as T;
  }
}

// Trip-phase buttons map one to one onto these action segments.
export const TRIP_ACTIONS = [
  "mark-as-dispatched",
  "arrived-at-pickup",
  "mark-as-picked-up",
  "mark-as-on-the-way",
  "arrived-at-dropoff",
  "mark-as-delivered",
] as const;

export type TripAction = (typeof TRIP_ACTIONS)[number];

const BUCKET_ROUTES = {
  new: "/api/courier/v1/deliveries/new",
  "in-progress": "/api/courier/v1/deliveries/in-progress",
  done: "/api/courier/v1/deliveries/done",
} as const;

export class CourierApi extends Client {
  listBucket(bucket: keyof typeof BUCKET_ROUTES): Promise<DeliveryView[]> {
    return this.call("GET", BUCKET_ROUTES[bucket]);
  }

  accept(deliveryId: string): Promise<DeliveryView> {
    return this.call("POST", "/api/courier/v1/deliveries/{deliveryId}/accept", {
      params: { deliveryId },
    });
  }

  reject(deliveryId: string): Promise<DeliveryView> {
    return this.call("POST", "/api/courier/v1/deliveries/{deliveryId}/reject", {
      params: { deliveryId },
    });
  }

  cancel(deliveryId: string): Promise<DeliveryView> {
    return this.call("PATCH", "/api/courier/v1/deliveries/{deliveryId}/cancel", {
      params: { deliveryId },
    });
  }

  tripAction(deliveryId: string, action: TripAction): Promise<DeliveryView> {
    return this.call("POST", `/api/courier/v1/deliveries/{deliveryId}/${action}`, {
      params: { deliveryId },
    });
  }

  reportIssue(deliveryId: string, code: string, note?: string): Promise<DeliveryView> {
    return this.call("PATCH", "/api/courier/v1/deliveries/{deliveryId}/report-issue", {
      params: { deliveryId },
      body: { issue: note === undefined ? { code } : { code, note } },
    });
  }

  getSettings(): Promise<PreferencesView> {
    return this.call("GET", "/api/courier/v1/settings");
  }

  patchSettings(partial: Partial<PreferencesView>): Promise<PreferencesView> {
    return this.call("PATCH", "/api/courier/v1/settings", { body: partial });
  }

  setAvailability(availability: Availability): Promise<CourierRecord> {
    return this.call("PUT", "/api/courier/v1/availability", { body: { availability } });
  }

  setPosition(lon: number, lat: number): Promise<CourierRecord> {
    return this.call("PUT", "/api/courier/v1/position", { body: { lon, lat } });
  }

  createNote(lon: number, lat: number, text: string): Promise<LocationNote> {
    return this.call("POST", "/api/courier/v1/location-notes", { body: { lon, lat, text } });
  }

  myNotes(): Promise<LocationNote[]> {
    return this.call("GET", "/api/courier/v1/location-notes");
  }

  notesNear(lon: number, lat: number, radiusMeters: number): Promise<LocationNote[]> {
    return this.call("GET", "/api/courier/v1/location-notes/near", {
      query: { lon: String(lon), lat: String(lat), radius: String(radiusMeters) },
    });
  }

  getNote(locationNoteId: string): Promise<LocationNote> {
    return this.call("GET", "/api/courier/v1/location-notes/{locationNoteId}", {
      params: { locationNoteId },
    });
  }

  updateNote(locationNoteId: string, text: string): Promise<LocationNote> {
    return this.call("PATCH", "/api/courier/v1/location-notes/{locationNoteId}", {
      params: { locationNoteId },
      body: { text },
    });
  }

  deleteNote(locationNoteId: string): Promise<void> {
    return this.call("DELETE", "/api/courier/v1/location-notes/{locationNoteId}", {
      params: { locationNoteId },
    });
  }

  react(locationNoteId: string, emoji: string): Promise<LocationNote> {
    return this.call("POST", "/api/courier/v1/location-notes/{locationNoteId}/react", {
      params: { locationNoteId },
      body: { emoji },
    });
  }
}

export class AdminApi extends Client {
  getDelivery(deliveryId: string): Promise<DeliveryView> {
    return this.call("GET", "/api/admin/v1/deliveries/{deliveryId}", { params: { deliveryId } });
  }

  listDeliveries(): Promise<DeliveryView[]> {
    return this.call("GET", "/api/admin/v1/deliveries");
  }

  createCourier(displayName: string, vehicleType: string): Promise<EnrolledCourier> {
    return this.call("POST", "/api/admin/v1/couriers", { body: { displayName, vehicleType } });
  }

  listCouriers(): Promise<CourierRecord[]> {
    return this.call("GET", "/api/admin/v1/couriers");
  }

  createRequester(requesterId?: string): Promise<{ requesterId: string; token: string }> {
    return this.call("POST", "/api/admin/v1/requesters", {
      body: requesterId === undefined ? {} : { requesterId },
    });
  }

  getPolicy(): Promise<PolicyView> {
    return this.call("GET", "/api/admin/v1/assignment-policy");
  }

  setPolicy(policy: PolicyView): Promise<PolicyView> {
    return this.call("PUT", "/api/admin/v1/assignment-policy", { body: policy });
  }

  exportCsv(fromIso: string, toIso: string): Promise<string> {
    return this.call("GET", "/api/admin/v1/disclosure/export.csv", {
      query: { from: fromIso, to: toIso },
    });
  }

  metrics(fromIso: string, toIso: string): Promise<MetricsView> {
    return this.call("GET", "/api/admin/v1/disclosure/metrics", {
      query: { from: fromIso, to: toIso },
    });
  }

  listThreads(): Promise<ThreadView[]> {
    return this.call("GET", "/api/instance/v1/quotes");
  }

  getThread(threadId: string): Promise<ThreadView> {
    return this.call("GET", "/api/instance/v1/quotes/{threadId}", { params: { threadId } });
  }

  respondToQuote(
    threadId: string,
    kind: RoundKind,
    opts: { amount?: string; message?: string } = {},
  ): Promise<ThreadView> {
    return this.call("POST", "/api/instance/v1/quotes/{threadId}/respond", {
      params: { threadId },
      body: { kind, ...opts },
    });
  }
}

export class RegistryApi extends Client {
  query(filters: { lon?: number; lat?: number; language?: string; q?: string } = {}): Promise<
    InstanceRecordView[]
  > {
    const query: Record<string, string> = {};
    if (filters.lon !== undefined) query["lon"] = String(filters.lon);
    if (filters.lat !== undefined) query["lat"] = String(filters.lat);
    if (filters.language !== undefined) query["language"] = filters.language;
    if (filters.q !== undefined) query["q"] = filters.q;
    return this.call("GET", "/api/registry/v1/instances", { query });
  }

  register(record: InstanceRecordView): Promise<InstanceRecordView> {
    return this.call("POST", "/api/registry/v1/instances", { body: record });
  }
}

export { GATEWAY_ROUTES, REGISTRY_ROUTES };
