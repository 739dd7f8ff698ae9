// Browser entry point. Builds either workspace over the HTTP clients and
// re-renders whole panels on every state change; the server stays the only
// source of truth.

import {
  AdminApi,
  CourierApi,
  HttpTransport,
  RecordingTransport,
  RegistryApi,
  TRIP_ACTIONS,
} from "./api.js";
import { AdminWorkspace } from "./admin.js";
import { CourierWorkspace } from "./courier.js";
import { clearChildren, el, mount } from "./dom.js";
import { formatMinor, shortId, titleCase } from "./format.js";
import { Poller } from "./poll.js";
import type { ConsoleConfig, DeliveryView } from "./types.js";
import { DEFAULT_CONFIG } from "./types.js";

async function loadConfig(): Promise<ConsoleConfig> {
  try {
    const resp = await fetch("config.json");
    if (!resp.ok) return DEFAULT_CONFIG;
    return { ...DEFAULT_CONFIG, ...(await resp.json()) };
  } catch {
    return DEFAULT_CONFIG;
  }
}

function deliveryCard(
  d: DeliveryView,
  actions: Array<{ label: string; onTap: () => void; disabled?: boolean }>,
): HTMLElement {
  const buttons = actions.map((a) =>
    el(
      "button",
      { class: "action", onclick: () => a.onTap(), disabled: a.disabled ?? false },
      a.label,
    ),
  );
  return el(
    "div",
    { class: "card" },
    el("div", { class: "card-head" },
      el("span", { class: "mono" }, shortId(d.deliveryId)),
      el("span", { class: `status status-${d.status.toLowerCase()}` }, titleCase(d.status)),
    ),
    el("div", {}, `${d.pickupLocation.address || "pickup"} -> ${d.dropoffLocation.address || "dropoff"}`),
    el("div", {},
      `${formatMinor(d.payoutMinor, d.currency)}`,
      d.distance !== null ? ` | ${d.distance} ${(d.distanceUnit ?? "").toLowerCase()}` : "",
    ),
    d.tripPhase !== "NONE" ? el("div", { class: "phase" }, titleCase(d.tripPhase)) : "",
    el("div", { class: "actions" }, ...buttons),
  );
}

function errorBanner(text: string | null): HTMLElement {
  return text ? el("div", { class: "banner" }, text) : el("div", {});
}

function renderCourier(root: Element, ws: CourierWorkspace): void {
  clearChildren(root);
  const s = ws.state;

  const availability = el(
    "div",
    { class: "toolbar" },
    el("strong", {}, "Availability: "),
    ...(["ONLINE", "ON_BREAK", "OFFLINE"] as const).map((v) =>
      el(
        "button",
        {
          class: s.availability === v ? "toggle active" : "toggle",
          onclick: () => void ws.setAvailability(v).catch(() => {}),
        },
        titleCase(v),
      ),
    ),
  );

  const newColumn = el(
    "div",
    { class: ws.newBucketDisabled ? "bucket greyed" : "bucket" },
    el("h3", {}, `New (${s.buckets.new.length})`),
    ...s.buckets.new.map((d) =>
      deliveryCard(d, [
        { label: "Accept", onTap: () => void ws.accept(d.deliveryId).catch(() => {}), disabled: ws.newBucketDisabled },
        { label: "Reject", onTap: () => void ws.reject(d.deliveryId).catch(() => {}), disabled: ws.newBucketDisabled },
      ]),
    ),
  );

  const inProgressColumn = el(
    "div",
    { class: "bucket" },
    el("h3", {}, `In progress (${s.buckets.inProgress.length})`),
    ...s.buckets.inProgress.map((d) =>
      deliveryCard(d, [
        ...TRIP_ACTIONS.filter((a) => a !== "mark-as-dispatched").map((a) => ({
          label: titleCase(a),
          onTap: () => void ws.advance(d.deliveryId, a).catch(() => {}),
        })),
        { label: "Cancel", onTap: () => void ws.cancel(d.deliveryId).catch(() => {}) },
        {
          label: "Report issue",
          onTap: () => {
            const code = window.prompt("Issue code (e.g. DAMAGED):") ?? "";
            if (code) void ws.reportIssue(d.deliveryId, code).catch(() => {});
          },
        },
      ]),
    ),
  );

  const doneColumn = el(
    "div",
    { class: "bucket" },
    el("h3", {}, `Done (${s.buckets.done.length})`),
    ...s.buckets.done.map((d) => deliveryCard(d, [])),
  );

  const noteList = el(
    "div",
    { class: "notes" },
    el("h3", {}, "Nearby notes"),
    ...s.notes.map((n) =>
      el(
        "div",
        { class: "note" },
        el("span", {}, n.text),
        el(
          "button",
          { class: "action", onclick: () => void ws.reactToNote(n.locationNoteId, "\u{1F44D}").catch(() => {}) },
          `\u{1F44D} ${(n.reactions["\u{1F44D}"] ?? []).length}`,
        ),
      ),
    ),
    el("button", {
      class: "action",
      onclick: () => {
        const text = window.prompt("Note text:") ?? "";
        if (text) void ws.addNote(text).catch(() => {});
      },
    }, "Add note here"),
  );

  const prefs = s.settings
    ? el(
        "div",
        { class: "prefs" },
        el("h3", {}, "Preferences"),
        el("label", {}, "Vehicle: ", el("span", { class: "mono" }, s.settings.vehicleType)),
        el("label", {}, "Speed: ", el("span", { class: "mono" }, s.settings.deliverySpeed)),
        el("button", {
          class: "action",
          onclick: () => {
            const day = window.prompt("Shift day (e.g. MONDAY):") ?? "";
            const hours = window.prompt("Hours (e.g. 09:00-17:00):") ?? "";
            if (day && hours) {
              void ws.saveSettings({ shiftAvailability: { [day]: [hours] } }).catch(() => {});
            }
          },
        }, "Edit shift"),
      )
    : el("div", {});

  mount(
    root,
    errorBanner(s.lastError),
    availability,
    el("div", { class: "columns" }, newColumn, inProgressColumn, doneColumn),
    el("div", { class: "columns" }, noteList, prefs),
  );
}

function renderAdmin(root: Element, ws: AdminWorkspace): void {
  clearChildren(root);
  const s = ws.state;

  const filter = el(
    "select",
    {
      onchange: (ev: Event) =>
        ws.setStatusFilter((ev.target as HTMLSelectElement).value as never),
    },
    ...["ALL", "CREATED", "DISPATCHED", "ACCEPTED", "REJECTED", "PICKED_UP", "DELIVERED", "CANCELED"].map(
      (v) => {
        const opt = el("option", { value: v }, titleCase(v));
        if (v === s.statusFilter) opt.setAttribute("selected", "");
        return opt;
      },
    ),
  );

  const rows = ws.visibleDeliveries().map((d) =>
    el(
      "tr",
      {},
      el("td", { class: "mono" }, shortId(d.deliveryId)),
      el("td", {}, titleCase(d.status)),
      el("td", {}, titleCase(d.tripPhase)),
      el("td", { class: "mono" }, shortId(d.courierId)),
      el("td", {}, formatMinor(d.payoutMinor, d.currency)),
      el("td", {}, d.updatedAt),
    ),
  );
  const table = el(
    "table",
    { class: "deliveries" },
    el(
      "thead",
      {},
      el("tr", {}, ...["Delivery", "Status", "Phase", "Courier", "Payout", "Updated"].map((h) => el("th", {}, h))),
    ),
    el("tbody", {}, ...rows),
  );

  const policyPanel = el(
    "div",
    { class: "toolbar" },
    el("strong", {}, "Assignment policy: "),
    ...(["NEAREST", "MOST_SENIOR", "SPECIFIED"] as const).map((kind) =>
      el(
        "button",
        {
          class: s.policy?.policy === kind ? "toggle active" : "toggle",
          onclick: () => {
            const courierId =
              kind === "SPECIFIED" ? window.prompt("Courier id:") ?? "" : null;
            if (kind === "SPECIFIED" && !courierId) return;
            void ws.switchPolicy(kind, courierId).catch(() => {});
          },
        },
        titleCase(kind),
      ),
    ),
  );

  const threadList = el(
    "div",
    { class: "threads" },
    el("h3", {}, `Negotiations (${s.threads.length})`),
    ...s.threads.map((t) =>
      el(
        "div",
        { class: "thread-row" },
        el("span", { class: "mono" }, shortId(t.threadId)),
        el("span", {}, ` ${t.state} `),
        el("button", { class: "action", onclick: () => void ws.openThread(t.threadId).catch(() => {}) }, "Open"),
      ),
    ),
  );

  const open = s.openThread;
  const threadView = open
    ? el(
        "div",
        { class: "thread-view" },
        el("h3", {}, `Thread ${shortId(open.threadId)} (${open.state})`),
        ...open.rounds.map((r) =>
          el("div", { class: "round" }, `${r.by} ${r.kind}${r.amount ? " " + r.amount : ""} ${r.message}`),
        ),
        el("div", { class: "toolbar" },
          el("button", { class: "action", onclick: () => void ws.acceptQuote(open.threadId).catch(() => {}) }, "Accept"),
          el("button", { class: "action", onclick: () => void ws.rejectQuote(open.threadId).catch(() => {}) }, "Reject"),
          el("button", {
            class: "action",
            onclick: () => {
              const amount = window.prompt("Counter amount (e.g. 12.50):") ?? "";
              if (amount) void ws.counter(open.threadId, amount, "instance counteroffer").catch(() => {});
            },
          }, "Counter"),
        ),
      )
    : el("div", {});

  const metricsCards = el(
    "div",
    { class: "metrics" },
    el("h3", {}, "Last 24h"),
    el("div", { class: "card" }, `Completed: ${s.metrics?.deliveriesCompleted ?? "-"}`),
    el("div", { class: "card" }, `Avg hourly earnings: ${s.metrics?.avgHourlyEarnings ?? "-"}`),
    el("div", { class: "card" }, `Avg payout: ${s.metrics?.avgPayoutPerDelivery ?? "-"}`),
    el("button", {
      class: "action",
      onclick: () => {
        const to = new Date();
        const from = new Date(to.getTime() - 24 * 3600 * 1000);
        void ws
          .downloadExport(from.toISOString(), to.toISOString())
          .then((csv) => {
            const blob = new Blob([csv], { type: "text/csv" });
            const a = document.createElement("a");
            a.href = URL.createObjectURL(blob);
            a.download = "disclosure.csv";
            a.click();
            URL.revokeObjectURL(a.href);
          })
          .catch(() => {});
      },
    }, "Download export"),
  );

  const registryPanel = el(
    "div",
    { class: "registry" },
    el("h3", {}, `Registry (${s.registry.length})`),
    ...s.registry.map((rec) => el("div", { class: "mono" }, rec.domainName)),
    el("button", { class: "action", onclick: () => void ws.loadRegistry().catch(() => {}) }, "Reload"),
  );

  mount(
    root,
    errorBanner(s.lastError),
    policyPanel,
    el("div", { class: "toolbar" }, el("strong", {}, "Status filter: "), filter),
    table,
    el("div", { class: "columns" }, threadList, threadView),
    el("div", { class: "columns" }, metricsCards, registryPanel),
  );
}

function loginForm(onSubmit: (role: "courier" | "admin", token: string) => void): HTMLElement {
  const roleSelect = el(
    "select",
    {},
    el("option", { value: "courier" }, "Courier"),
    el("option", { value: "admin" }, "Admin"),
  );
  const tokenInput = el("input", { type: "password", placeholder: "access token" });
  return el(
    "div",
    { class: "login" },
    el("h2", {}, "Instance console"),
    roleSelect,
    tokenInput,
    el("button", {
      class: "action",
      onclick: () => {
        if (tokenInput.value) {
          onSubmit(roleSelect.value as "courier" | "admin", tokenInput.value);
        }
      },
    }, "Sign in"),
  );
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const cfg = await loadConfig();

  mount(
    root,
    loginForm((role, token) => {
      const transport = new RecordingTransport(new HttpTransport(cfg.gatewayBaseUrl, token));
      if (role === "courier") {
        const ws = new CourierWorkspace(new CourierApi(transport), () => renderCourier(root, ws));
        const poller = new Poller(() => ws.refresh(), cfg.pollIntervalMs);
        void ws.loadSettings().catch(() => {});
        poller.start();
      } else {
        const registry = new RegistryApi(new HttpTransport(cfg.registryUrl));
        const ws = new AdminWorkspace(new AdminApi(transport), registry, () => renderAdmin(root, ws));
        const poller = new Poller(() => ws.refresh(), cfg.pollIntervalMs);
        void ws.loadPolicy().catch(() => {});
        poller.start();
      }
    }),
  );
}

void boot();
