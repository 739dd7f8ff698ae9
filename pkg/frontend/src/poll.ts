// Timer-driven refresh. The server is the source of truth, so the console
// just re-pulls on an interval; there is no push channel to manage.

export class Poller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private stopped = true;

  constructor(
    private readonly refresh: () => Promise<void>,
    readonly intervalMs: number,
    private readonly onError: (err: unknown) => void = () => {},
  ) {}

  /** One refresh, awaitable. Overlapping calls collapse into the running one. */
  async tick(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.refresh();
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
    }
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    const loop = async () => {
      if (this.stopped) return;
      await this.tick();
      if (this.stopped) return;
      this.timer = setTimeout(loop, this.intervalMs);
    };
    void loop();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  get running(): boolean {
    return !this.stopped;
  }
}
