/**
 * WebSocket client session: subscribes to snapshots, reconnects with
 * exponential backoff, and validates every outbound message against the
 * protocol schema before send. Rendering always reads `latest` -- the client
 * never extrapolates robot state.
 */
import { encodeMessage, parseMessage, type Envelope, type Snapshot, type TeleopCommand } from "./schema.js";

export type ConnectionState = "connecting" | "open" | "closed";

/** Minimal socket surface so tests can inject a fake. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
}

export interface SessionOptions {
  url: string;
  makeSocket?: (url: string) => SocketLike;
  /** Backoff schedule in ms; the last entry repeats. */
  backoffMs?: number[];
  schedule?: (fn: () => void, ms: number) => unknown;
  onStateChange?: (state: ConnectionState) => void;
  onSnapshot?: (snapshot: Snapshot) => void;
  onControl?: (payload: Record<string, unknown>) => void;
  onServerError?: (message: string) => void;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000];

export class ClientSession {
  latest: Snapshot | null = null;
  state: ConnectionState = "closed";
  private socket: SocketLike | null = null;
  private seq = 0;
  private attempts = 0;
  private stopped = false;

  constructor(private readonly opts: SessionOptions) {}

  connect(): void {
    this.stopped = false;
    this.open();
  }

  private open(): void {
    const make = this.opts.makeSocket ??
      ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.setState("connecting");
    const socket = make(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.setState("open");
    };
    socket.onmessage = (event) => {
      if (typeof event.data !== "string") return;
      const message = parseMessage(event.data);
      if (message === null) return; // diagnostic already logged; session alive
      this.dispatch(message);
    };
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      this.socket = null;
      this.setState("closed");
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const backoff = this.opts.backoffMs ?? DEFAULT_BACKOFF;
    const delay = backoff[Math.min(this.attempts, backoff.length - 1)]!;
    this.attempts += 1;
    const schedule = this.opts.schedule ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    schedule(() => {
      if (!this.stopped) this.open();
    }, delay);
  }

  private dispatch(message: Envelope): void {
    switch (message.type) {
      case "snapshot":
        this.latest = message.payload;
        this.opts.onSnapshot?.(message.payload);
        break;
      case "control":
        this.opts.onControl?.(message.payload as Record<string, unknown>);
        break;
      case "error":
        this.opts.onServerError?.(message.payload.message);
        break;
      case "teleop":
        break; // server never sends teleop; ignore
    }
  }

  sendTeleop(cmd: TeleopCommand): void {
    this.sendEnvelope({ type: "teleop", seq: this.nextSeq(), payload: cmd });
  }

  sendControl(action: "start_recording" | "stop_recording" | "reset" | "shutdown"): void {
    this.sendEnvelope({ type: "control", seq: this.nextSeq(), payload: { action } });
  }

  private sendEnvelope(message: Envelope): void {
    if (this.state !== "open" || this.socket === null) return;
    this.socket.send(encodeMessage(message)); // validates before send
  }

  close(): void {
    this.stopped = true;
    this.socket?.close();
  }

  private nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.opts.onStateChange?.(state);
  }
}
