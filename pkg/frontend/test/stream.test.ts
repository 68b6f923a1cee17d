import { describe, expect, it } from "vitest";
import { FrameMessage } from "../src/protocol.js";
import { SocketLike, StreamClient, StreamStatus } from "../src/stream.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.();
  }

  push(doc: unknown): void {
    this.onmessage?.({ data: JSON.stringify(doc) });
  }

  drop(): void {
    this.onclose?.();
  }
}

function frame(seq: number): unknown {
  return {
    type: "frame",
    seq,
    timings_ms: { tex: 1, pred: 1, tra: 1, ren: 1, total: 4 },
    png_base64: `frame${seq}`,
  };
}

function setup() {
  const sockets: FakeSocket[] = [];
  const pendingRetries: (() => void)[] = [];
  const frames: FrameMessage[] = [];
  const statuses: StreamStatus[] = [];
  const client = new StreamClient(
    "ws://test/api/stream",
    { onFrame: (f) => frames.push(f), onStatus: (s) => statuses.push(s) },
    (url) => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    10,
    (fn) => {
      pendingRetries.push(fn);
      return pendingRetries.length;
    },
  );
  return { client, sockets, frames, statuses, pendingRetries };
}

describe("StreamClient", () => {
  it("delivers in-order frames and drops stale ones", () => {
    const { sockets, frames, client } = setup();
    sockets[0].open();
    sockets[0].push(frame(1));
    sockets[0].push(frame(3));
    sockets[0].push(frame(2)); // out of order: dropped
    sockets[0].push(frame(4));
    expect(frames.map((f) => f.seq)).toEqual([1, 3, 4]);
    expect(client.droppedFrames).toBe(1);
  });

  it("queues state until live, then flushes it on open", () => {
    const { client, sockets } = setup();
    const msg = { set: { pose: [0], expression: { gamma: [], jaw: [0, 0, 0], eyelids: [0, 0] }, camera: "front", background: "000000" } };
    client.sendState(msg);
    expect(sockets[0].sent).toHaveLength(0); // not open yet
    sockets[0].open();
    expect(sockets[0].sent).toHaveLength(1); // queued state flushed on open
    expect(JSON.parse(sockets[0].sent[0])).toEqual(msg);
    client.sendState(msg);
    expect(sockets[0].sent).toHaveLength(2);
  });

  it("reconnects after a drop and resends the last state", () => {
    const { client, sockets, statuses, pendingRetries } = setup();
    sockets[0].open();
    const msg = { set: { pose: [1, 2], expression: { gamma: [0.5], jaw: [0, 0, 0], eyelids: [0, 0] }, camera: "front", background: "aabbcc" } };
    client.sendState(msg);
    sockets[0].drop();
    expect(statuses).toContain("retrying");
    expect(pendingRetries).toHaveLength(1);
    pendingRetries[0]();
    expect(sockets).toHaveLength(2);
    sockets[1].open();
    expect(JSON.parse(sockets[1].sent[0])).toEqual(msg); // state resumed
    expect(client.status).toBe("live");
  });

  it("sequence tracking resets after reconnect", () => {
    const { client, sockets, frames, pendingRetries } = setup();
    sockets[0].open();
    sockets[0].push(frame(5));
    sockets[0].drop();
    pendingRetries[0]();
    sockets[1].open();
    sockets[1].push(frame(1)); // new session restarts numbering
    expect(frames.map((f) => f.seq)).toEqual([5, 1]);
  });

  it("close() stops reconnecting", () => {
    const { client, sockets, pendingRetries } = setup();
    sockets[0].open();
    client.close();
    expect(sockets[0].closed).toBe(true);
    sockets[0].drop();
    pendingRetries.forEach((fn) => fn());
    expect(sockets).toHaveLength(1);
    expect(client.status).toBe("closed");
  });

  it("surfaces server errors without dying", () => {
    const errors: string[] = [];
    const sockets: FakeSocket[] = [];
    const client = new StreamClient(
      "ws://test",
      { onError: (d) => errors.push(d) },
      () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
      10,
      () => 0,
    );
    sockets[0].open();
    sockets[0].push({ type: "error", error: "schema", detail: "gamma must be 4 finite numbers" });
    sockets[0].push(frame(1));
    expect(errors).toEqual(["gamma must be 4 finite numbers"]);
    expect(client.status).toBe("live");
  });
});
