/** Trailing-edge debounce with a hard rate cap.
 *
 * Scrubbing a slider fires many change events; the sender coalesces them
 * and emits at most one message per interval, always ending with the
 * latest value. Quiet periods emit nothing.
 */

export interface Clock {
  now(): number;
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export const realClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as ReturnType<typeof setTimeout>),
};

export class DebouncedSender<T> {
  private pending: T | null = null;
  private timer: unknown = null;
  private lastSent = -Infinity;
  sentCount = 0;

  constructor(
    private readonly send: (value: T) => void,
    private readonly intervalMs: number = 50,
    private readonly clock: Clock = realClock,
  ) {}

  /** Queue the latest value; it is sent after the interval elapses. */
  update(value: T): void {
    this.pending = value;
    if (this.timer !== null) return;
    const wait = Math.max(this.intervalMs, this.lastSent + this.intervalMs - this.clock.now());
    this.timer = this.clock.setTimeout(() => this.flush(), wait);
  }

  flush(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.pending === null) return;
    const value = this.pending;
    this.pending = null;
    this.lastSent = this.clock.now();
    this.sentCount += 1;
    this.send(value);
  }

  dispose(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    this.pending = null;
  }
}
