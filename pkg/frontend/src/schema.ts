/**
 * Wire-protocol schema (see ../../docs/protocol.md). Every message in both
 * directions is an envelope {type, seq, payload}; outbound messages are
 * validated against this schema before send.
 */
import { z } from "zod";

export const teleopPayload = z.object({
  v: z.number(),
  omega: z.number(),
});

/** Client -> server control requests. */
export const controlRequestPayload = z.object({
  action: z.enum(["start_recording", "stop_recording", "reset", "shutdown"]),
});

/** Server -> client control acknowledgements. */
export const controlAckPayload = z.object({
  action: z.enum(["recording_started", "recording_saved", "reset_ok", "shutting_down"]),
  path: z.string().optional(),
  scenario: z.string().optional(),
});

export const errorPayload = z.object({
  message: z.string(),
});

export const robotState = z.object({
  x: z.number(),
  y: z.number(),
  theta: z.number(),
  v: z.number(),
  omega: z.number(),
});

export const pedestrianState = z.object({
  x: z.number(),
  y: z.number(),
  vx: z.number(),
  vy: z.number(),
});

export const candidate = z.object({
  v: z.number(),
  omega: z.number(),
  j: z.number(),
});

const rect = z.tuple([z.number(), z.number(), z.number(), z.number()]);

export const snapshotPayload = z.object({
  sim_time: z.number(),
  robot: robotState,
  pedestrians: z.array(pedestrianState),
  goal: z.object({ x: z.number(), y: z.number() }),
  status: z.enum(["running", "reached_goal", "collision", "timeout"]),
  attention_agrid_b64: z.string().nullable(),
  chosen: z.object({ v: z.number(), omega: z.number() }),
  candidates: z.array(candidate),
  min_clearance: z.number().nullable(),
  world: z.object({
    bounds: rect,
    boxes: z.array(rect),
    segments: z.array(rect),
  }),
  scenario: z.string(),
});

const seq = z.number().int().nonnegative();

export const envelope = z.discriminatedUnion("type", [
  z.object({ type: z.literal("snapshot"), seq, payload: snapshotPayload }),
  z.object({ type: z.literal("teleop"), seq, payload: teleopPayload }),
  z.object({
    type: z.literal("control"),
    seq,
    payload: z.union([controlAckPayload, controlRequestPayload]),
  }),
  z.object({ type: z.literal("error"), seq, payload: errorPayload }),
]);

export type Envelope = z.infer<typeof envelope>;
export type Snapshot = z.infer<typeof snapshotPayload>;
export type Candidate = z.infer<typeof candidate>;
export type TeleopCommand = z.infer<typeof teleopPayload>;

/** Parse an incoming frame; returns null (with a console diagnostic) on junk
 * so a malformed message never kills the session. */
export function parseMessage(raw: string): Envelope | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (err) {
    console.warn("vilad-ui: dropping non-JSON frame", err);
    return null;
  }
  const result = envelope.safeParse(data);
  if (!result.success) {
    console.warn("vilad-ui: dropping malformed frame", result.error.issues);
    return null;
  }
  return result.data;
}

/** Serialize an outbound envelope, validating first (throws on bugs). */
export function encodeMessage(message: Envelope): string {
  return JSON.stringify(envelope.parse(message));
}
