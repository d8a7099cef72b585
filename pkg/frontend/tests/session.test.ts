import { describe, expect, it } from "vitest";
import { ClientSession, type SocketLike } from "../src/session.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

function snapshotFrame(seq: number, x: number): string {
  return JSON.stringify({
    type: "snapshot",
    seq,
    payload: {
      sim_time: 0.1 * seq,
      robot: { x, y: 0, theta: 0, v: 0.5, omega: 0 },
      pedestrians: [],
      goal: { x: 8, y: 0 },
      status: "running",
      attention_agrid_b64: null,
      chosen: { v: 0.5, omega: 0 },
      candidates: [],
      min_clearance: null,
      world: { bounds: [-1, -4, 10, 4], boxes: [], segments: [] },
      scenario: "scen1",
    },
  });
}

function harness(backoffMs = [10, 20]) {
  const sockets: FakeSocket[] = [];
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const states: string[] = [];
  const session = new ClientSession({
    url: "ws://test",
    makeSocket: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    backoffMs,
    schedule: (fn, ms) => timers.push({ fn, ms }),
    onStateChange: (s) => states.push(s),
  });
  return { session, sockets, timers, states };
}

describe("client session", () => {
  it("tracks the latest snapshot and never extrapolates", () => {
    const { session, sockets } = harness();
    session.connect();
    sockets[0]!.onopen!();
    sockets[0]!.onmessage!({ data: snapshotFrame(1, 0.5) });
    sockets[0]!.onmessage!({ data: snapshotFrame(2, 0.7) });
    expect(session.latest?.robot.x).toBe(0.7);
  });

  it("skips malformed frames without dying", () => {
    const { session, sockets } = harness();
    session.connect();
    sockets[0]!.onopen!();
    sockets[0]!.onmessage!({ data: "garbage{" });
    sockets[0]!.onmessage!({ data: '{"type": "snapshot", "seq": 1, "payload": {}}' });
    expect(session.latest).toBeNull();
    sockets[0]!.onmessage!({ data: snapshotFrame(3, 1.0) });
    expect(session.latest?.robot.x).toBe(1.0);
  });

  it("reconnects with growing backoff after the server drops", () => {
    const { session, sockets, timers, states } = harness([10, 20]);
    session.connect();
    sockets[0]!.onopen!();
    sockets[0]!.onclose!();
    expect(timers).toHaveLength(1);
    expect(timers[0]!.ms).toBe(10);
    timers[0]!.fn(); // first retry fails immediately
    expect(sockets).toHaveLength(2);
    sockets[1]!.onclose!();
    expect(timers[1]!.ms).toBe(20);
    timers[1]!.fn();
    sockets[2]!.onopen!();
    sockets[2]!.onmessage!({ data: snapshotFrame(9, 2.0) });
    expect(session.latest?.robot.x).toBe(2.0); // session resumed, no reload
    expect(states).toContain("closed");
    // after a deliberate close, no more reconnects are scheduled
    const n = timers.length;
    session.close();
    expect(timers.length).toBe(n);
  });

  it("refuses to send while disconnected and validates outbound frames", () => {
    const { session, sockets } = harness();
    session.connect();
    session.sendTeleop({ v: 1, omega: 0 }); // not open yet: dropped
    sockets[0]!.onopen!();
    session.sendTeleop({ v: 1, omega: 0 });
    session.sendControl("start_recording");
    expect(sockets[0]!.sent).toHaveLength(2);
    const teleop = JSON.parse(sockets[0]!.sent[0]!);
    expect(teleop).toMatchObject({ type: "teleop", payload: { v: 1, omega: 0 } });
    expect(JSON.parse(sockets[0]!.sent[1]!).payload.action).toBe("start_recording");
  });
});
