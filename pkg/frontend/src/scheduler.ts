// Debounced latest-wins request scheduling. One timer, at most one request
// in flight; a newer task aborts the in-flight one and replaces anything
// still queued, so a burst of control changes costs exactly one request.

export const DEBOUNCE_MS = 250;

export type Task = (signal: AbortSignal) => Promise<void>;

export class LatestWins {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pending: Task | null = null;
  private current: AbortController | null = null;
  private launched = 0;

  constructor(private readonly delayMs: number = DEBOUNCE_MS) {}

  // requests actually sent, for instrumentation
  get requestCount(): number {
    return this.launched;
  }

  get busy(): boolean {
    return this.current !== null || this.timer !== null;
  }

  schedule(task: Task): void {
    this.pending = task;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, this.delayMs);
  }

  private fire(): void {
    if (this.pending === null) return;
    if (this.current !== null) {
      // stale request: abort it; its settle handler relaunches with the
      // pending (newest) task
      this.current.abort();
      return;
    }
    const task = this.pending;
    this.pending = null;
    const controller = new AbortController();
    this.current = controller;
    this.launched += 1;
    void task(controller.signal)
      .catch(() => undefined) // tasks surface their own errors to the UI
      .finally(() => {
        this.current = null;
        // relaunch only if no newer debounce window is still open
        if (this.timer === null) this.fire();
      });
  }
}
