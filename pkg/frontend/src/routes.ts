// Published route table. The console builds every request path from these
// templates, so a request that is not listed here cannot be issued at all.
// Kept in lockstep with the server's own `routes` listing; the contract test
// compares the two line by line.

export interface RouteTemplate {
  readonly method: string;
  readonly path: string;
}

function r(method: string, path: string): RouteTemplate {
  return Object.freeze({ method, path });
}

export const GATEWAY_ROUTES: readonly RouteTemplate[] = Object.freeze([
  r("GET", "/api/admin/v1/deliveries/{deliveryId}"),
  r("GET", "/api/admin/v1/deliveries"),

  r("GET", "/api/courier/v1/deliveries/new"),
  r("GET", "/api/courier/v1/deliveries/in-progress"),
  r("GET", "/api/courier/v1/deliveries/done"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/accept"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/reject"),
  r("PATCH", "/api/courier/v1/deliveries/{deliveryId}/cancel"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-dispatched"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/arrived-at-pickup"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-picked-up"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-on-the-way"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/arrived-at-dropoff"),
  r("POST", "/api/courier/v1/deliveries/{deliveryId}/mark-as-delivered"),
  r("PATCH", "/api/courier/v1/deliveries/{deliveryId}/report-issue"),

  r("GET", "/api/courier/v1/settings"),
  r("PATCH", "/api/courier/v1/settings"),

  r("POST", "/api/courier/v1/location-notes"),
  r("GET", "/api/courier/v1/location-notes"),
  r("GET", "/api/courier/v1/location-notes/near"),
  r("PATCH", "/api/courier/v1/location-notes/{locationNoteId}"),
  r("GET", "/api/courier/v1/location-notes/{locationNoteId}"),
  r("DELETE", "/api/courier/v1/location-notes/{locationNoteId}"),
  r("POST", "/api/courier/v1/location-notes/{locationNoteId}/react"),

  r("PUT", "/api/courier/v1/availability"),
  r("PUT", "/api/courier/v1/position"),

  r("POST", "/api/requester/v1/quotes/broadcast"),
  r("POST", "/api/requester/v1/quotes"),
  r("POST", "/api/requester/v1/quotes/{threadId}/respond"),
  r("POST", "/api/requester/v1/quotes/{threadId}/finalize"),
  r("GET", "/api/requester/v1/quotes/{threadId}"),

  r("POST", "/api/instance/v1/quotes/{threadId}/respond"),
  r("GET", "/api/instance/v1/quotes"),
  r("GET", "/api/instance/v1/quotes/{threadId}"),

  r("POST", "/api/admin/v1/couriers"),
  r("GET", "/api/admin/v1/couriers"),
  r("POST", "/api/admin/v1/requesters"),
  r("GET", "/api/admin/v1/assignment-policy"),
  r("PUT", "/api/admin/v1/assignment-policy"),
  r("GET", "/api/admin/v1/disclosure/export.csv"),
  r("GET", "/api/admin/v1/disclosure/metrics"),
]);

export const REGISTRY_ROUTES: readonly RouteTemplate[] = Object.freeze([
  r("GET", "/api/registry/v1/instances"),
  r("POST", "/api/registry/v1/instances"),
]);

export const ALL_ROUTES: readonly RouteTemplate[] = Object.freeze([
  ...GATEWAY_ROUTES,
  ...REGISTRY_ROUTES,
]);

const PARAM = /^\{([A-Za-z]+)\}$/;

/** Substitute {name} segments; every placeholder must be supplied and used. */
export function fill(template: string, params: Record<string, string> = {}): string {
  const unused = new Set(Object.keys(params));
  const out = template
    .split("/")
    .map((seg) => {
      const m = PARAM.exec(seg);
      if (!m) return seg;
      const name = m[1]!;
      const value = params[name];
      if (value === undefined || value === "") {
        throw new Error(`missing path parameter ${name} for ${template}`);
      }
      unused.delete(name);
      return encodeURIComponent(value);
    })
    .join("/");
  if (unused.size > 0) {
    throw new Error(`unknown path parameters [${[...unused].join(", ")}] for ${template}`);
  }
  return out;
}

/** Find the published template a concrete request corresponds to, if any. */
export function findTemplate(
  method: string,
  path: string,
  routes: readonly RouteTemplate[] = ALL_ROUTES,
): RouteTemplate | null {
  const got = path.split("/");
  for (const route of routes) {
    if (route.method !== method) continue;
    const want = route.path.split("/");
    if (want.length !== got.length) continue;
    // literal segments win over parameters, same order as the server table
    const ok = want.every((seg, i) => (PARAM.test(seg) ? got[i] !== "" : seg === got[i]));
    if (ok) return route;
  }
  return null;
}

export function matchesTemplate(
  method: string,
  path: string,
  routes: readonly RouteTemplate[] = ALL_ROUTES,
): boolean {
  return findTemplate(method, path, routes) !== null;
}
