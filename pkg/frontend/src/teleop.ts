/**
 * Keyboard teleoperation: WASD / arrow keys map to a velocity command that is
 * streamed at 20 Hz while any key is held, with exactly one zero command sent
 * on release. Platform limits match the robot defaults server-side (the
 * server clamps again regardless).
 */
import type { TeleopCommand } from "./schema.js";

export const V_MAX = 1.0;
export const OMEGA_MAX = 1.5;
export const SEND_PERIOD_MS = 50; // 20 Hz

const FORWARD = new Set(["w", "arrowup"]);
const BACK = new Set(["s", "arrowdown"]);
const LEFT = new Set(["a", "arrowleft"]);
const RIGHT = new Set(["d", "arrowright"]);

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x));
}

/** Pure key-state -> command mapping. Key names are lower-case `event.key`. */
export function commandFromKeys(pressed: ReadonlySet<string>): TeleopCommand {
  const any = (names: Set<string>) => [...names].some((n) => pressed.has(n));
  let v = 0;
  if (any(FORWARD)) v += V_MAX;
  if (any(BACK)) v -= 0.5 * V_MAX; // gentle reverse for repositioning
  let omega = 0;
  if (any(LEFT)) omega += OMEGA_MAX; // +omega turns left (counter-clockwise)
  if (any(RIGHT)) omega -= OMEGA_MAX;
  return { v: clamp(v, -V_MAX, V_MAX), omega: clamp(omega, -OMEGA_MAX, OMEGA_MAX) };
}

/**
 * Drives the 20 Hz send loop. Timer scheduling is injected so tests can tick
 * manually; the browser passes setInterval/clearInterval.
 */
export class TeleopLoop {
  private pressed = new Set<string>();
  private timer: unknown = null;

  constructor(
    private readonly send: (cmd: TeleopCommand) => void,
    private readonly schedule: (fn: () => void, ms: number) => unknown = (fn, ms) =>
      setInterval(fn, ms),
    private readonly cancel: (handle: unknown) => void = (h) =>
      clearInterval(h as ReturnType<typeof setInterval>),
  ) {}

  keyDown(key: string): void {
    this.pressed.add(key.toLowerCase());
    if (this.timer === null && this.pressed.size > 0) {
      this.tick();
      this.timer = this.schedule(() => this.tick(), SEND_PERIOD_MS);
    }
  }

  keyUp(key: string): void {
    this.pressed.delete(key.toLowerCase());
    if (this.pressed.size === 0 && this.timer !== null) {
      this.cancel(this.timer);
      this.timer = null;
      this.send({ v: 0, omega: 0 }); // single zero command, then silence
    }
  }

  /** One periodic send; public so tests can tick without a real timer. */
  tick(): void {
    if (this.pressed.size > 0) {
      this.send(commandFromKeys(this.pressed));
    }
  }

  get active(): boolean {
    return this.timer !== null;
  }
}
