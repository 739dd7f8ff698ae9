// Admin workspace view-model: live delivery table, policy switcher,
// negotiation threads, disclosure panel, registry records.

import type { AdminApi, RegistryApi } from "./api.js";
import { errorText } from "./format.js";
import type {
  CourierRecord,
  DeliveryStatus,
  DeliveryView,
  InstanceRecordView,
  MetricsView,
  PolicyKind,
  PolicyView,
  ThreadView,
} from "./types.js";

export type StatusFilter = DeliveryStatus | "ALL";

export interface AdminState {
  deliveries: DeliveryView[];
  statusFilter: StatusFilter;
  couriers: CourierRecord[];
  policy: PolicyView | null;
  threads: ThreadView[];
  openThread: ThreadView | null;
  metrics: MetricsView | null;
  registry: InstanceRecordView[];
  lastError: string | null;
}

export class AdminWorkspace {
  readonly state: AdminState = {
    deliveries: [],
    statusFilter: "ALL",
    couriers: [],
    policy: null,
    threads: [],
    openThread: null,
    metrics: null,
    registry: [],
    lastError: null,
  };

  constructor(
    private readonly api: AdminApi,
    private readonly registryApi: RegistryApi | null = null,
    private readonly onChange: () => void = () => {},
  ) {}

  private async run<T>(op: () => Promise<T>): Promise<T> {
    try {
      const out = await op();
      this.state.lastError = null;
      this.onChange();
      return out;
    } catch (err) {
      this.state.lastError = errorText(err);
      this.onChange();
      throw err;
    }
  }

  /** One poll: deliveries and negotiation threads. */
  refresh(): Promise<void> {
    return this.run(async () => {
      const [deliveries, threads] = await Promise.all([
        this.api.listDeliveries(),
        this.api.listThreads(),
      ]);
      this.state.deliveries = deliveries;
      this.state.threads = threads;
      if (this.state.openThread) {
        const id = this.state.openThread.threadId;
        this.state.openThread = threads.find((t) => t.threadId === id) ?? null;
      }
    });
  }

  // The filter is presentation only; the table always derives from the full
  // server response, so switching it never needs another request.
  setStatusFilter(filter: StatusFilter): void {
    this.state.statusFilter = filter;
    this.onChange();
  }

  visibleDeliveries(): DeliveryView[] {
    const f = this.state.statusFilter;
    if (f === "ALL") return this.state.deliveries;
    return this.state.deliveries.filter((d) => d.status === f);
  }

  loadCouriers(): Promise<void> {
    return this.run(async () => {
      this.state.couriers = await this.api.listCouriers();
    });
  }

  addCourier(displayName: string, vehicleType: string): Promise<string> {
    return this.run(async () => {
      const enrolled = await this.api.createCourier(displayName, vehicleType);
      this.state.couriers = await this.api.listCouriers();
      return enrolled.token; // shown once for handoff to the courier device
    });
  }

  loadPolicy(): Promise<void> {
    return this.run(async () => {
      this.state.policy = await this.api.getPolicy();
    });
  }

  switchPolicy(
    kind: PolicyKind,
    courierId: string | null = null,
    respectPreferences = true,
  ): Promise<void> {
    return this.run(async () => {
      this.state.policy = await this.api.setPolicy({
        policy: kind,
        courierId,
        respectPreferences,
      });
    });
  }

  openThread(threadId: string): Promise<void> {
    return this.run(async () => {
      this.state.openThread = await this.api.getThread(threadId);
    });
  }

  counter(threadId: string, amount: string, message = ""): Promise<void> {
    return this.respond(threadId, "COUNTER", { amount, message });
  }

  acceptQuote(threadId: string): Promise<void> {
    return this.respond(threadId, "ACCEPT", {});
  }

  rejectQuote(threadId: string, message = ""): Promise<void> {
    return this.respond(threadId, "REJECT", { message });
  }

  private respond(
    threadId: string,
    kind: "ACCEPT" | "REJECT" | "COUNTER",
    opts: { amount?: string; message?: string },
  ): Promise<void> {
    return this.run(async () => {
      const thread = await this.api.respondToQuote(threadId, kind, opts);
      this.state.openThread = thread;
      this.state.threads = this.state.threads.map((t) =>
        t.threadId === thread.threadId ? thread : t,
      );
    });
  }

  loadMetrics(fromIso: string, toIso: string): Promise<void> {
    return this.run(async () => {
      this.state.metrics = await this.api.metrics(fromIso, toIso);
    });
  }

  /** Returns the CSV exactly as served; the caller turns it into a download. */
  downloadExport(fromIso: string, toIso: string): Promise<string> {
    return this.run(() => this.api.exportCsv(fromIso, toIso));
  }

  loadRegistry(filters: { lon?: number; lat?: number; language?: string; q?: string } = {}): Promise<void> {
    return this.run(async () => {
      if (!this.registryApi) throw new Error("no registry configured");
      this.state.registry = await this.registryApi.query(filters);
    });
  }

  saveRegistryRecord(record: InstanceRecordView): Promise<void> {
    return this.run(async () => {
      if (!this.registryApi) throw new Error("no registry configured");
      await this.registryApi.register(record);
      this.state.registry = await this.registryApi.query();
    });
  }
}
