/** WebSocket session against /api/stream.
 *
 * Frames carry sequence numbers; anything arriving out of order is
 * dropped. A dropped connection retries with backoff and resends the last
 * control state so the stream resumes where the user left it.
 */

import { FrameMessage, RenderRequest, parseServerMessage } from "./protocol.js";

export type StreamStatus = "connecting" | "live" | "retrying" | "closed";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface StreamEvents {
  onFrame?: (frame: FrameMessage) => void;
  onStatus?: (status: StreamStatus) => void;
  onError?: (detail: string) => void;
}

export class StreamClient {
  private socket: SocketLike | null = null;
  private lastSeq = 0;
  private lastSent: { set: RenderRequest } | null = null;
  private closed = false;
  private retryHandle: unknown = null;
  status: StreamStatus = "connecting";
  droppedFrames = 0;

  constructor(
    private readonly url: string,
    private readonly events: StreamEvents = {},
    private readonly factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    private readonly retryMs: number = 1000,
    private readonly schedule: (fn: () => void, ms: number) => unknown = (fn, ms) => setTimeout(fn, ms),
  ) {
    this.connect();
  }

  private setStatus(status: StreamStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  private connect(): void {
    if (this.closed) return;
    this.setStatus(this.socket === null ? "connecting" : "retrying");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.lastSeq = 0;
      this.setStatus("live");
      if (this.lastSent !== null) {
        socket.send(JSON.stringify(this.lastSent));
      }
    };
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(ev.data);
      if (msg.type === "frame") {
        if (msg.seq <= this.lastSeq) {
          this.droppedFrames += 1;
          return;
        }
        this.lastSeq = msg.seq;
        this.events.onFrame?.(msg);
      } else if (msg.type === "error") {
        this.events.onError?.(msg.detail);
      }
    };
    const retry = () => {
      if (this.closed) return;
      this.setStatus("retrying");
      this.retryHandle = this.schedule(() => this.connect(), this.retryMs);
    };
    socket.onclose = retry;
    socket.onerror = () => {
      /* onclose follows and schedules the retry */
    };
  }

  /** Send the full control state (the stream is delta-tolerant, but the
   * full payload makes reconnect resume exact). */
  sendState(message: { set: RenderRequest }): void {
    this.lastSent = message;
    if (this.status === "live" && this.socket) {
      this.socket.send(JSON.stringify(message));
    }
  }

  close(): void {
    this.closed = true;
    this.setStatus("closed");
    this.socket?.close();
  }
}
