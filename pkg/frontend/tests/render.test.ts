import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { buildScene, candidateArc, frameViewport, unprojectPixel } from "../src/render.js";
import type { Snapshot } from "../src/schema.js";
import { snapshotPayload } from "../src/schema.js";

function capturedSnapshot(): Snapshot {
  const lines = readFileSync(join(__dirname, "fixtures", "session.jsonl"), "utf8")
    .trim()
    .split("\n")
    .map((l) => JSON.parse(l));
  return snapshotPayload.parse(lines.find((m) => m.type === "snapshot").payload);
}

describe("scene construction", () => {
  it("draws exactly k fan arcs for k candidates", () => {
    const snap = capturedSnapshot();
    const scene = buildScene(snap);
    const fans = scene.items.filter((i) => i.kind === "fanArc");
    expect(fans).toHaveLength(snap.candidates.length);
    expect(fans.filter((f) => f.kind === "fanArc" && f.chosen)).toHaveLength(1);
  });

  it("draws no attention wedge when the map is absent or all-zero", () => {
    const snap = capturedSnapshot();
    const noMap = { ...snap, attention_agrid_b64: null };
    expect(buildScene(noMap).items.some((i) => i.kind === "attentionCell")).toBe(false);
    expect(buildScene(snap, [], false).items.some((i) => i.kind === "attentionCell")).toBe(false);
  });

  it("draws the attention wedge ahead of the robot for a live map", () => {
    const snap = capturedSnapshot();
    const cells = buildScene(snap).items.filter((i) => i.kind === "attentionCell");
    expect(cells.length).toBeGreaterThan(0);
    for (const c of cells) {
      if (c.kind !== "attentionCell") continue;
      // the robot faces +x from near the origin: the camera frustum only
      // ever shows ground in front of it
      expect(c.x).toBeGreaterThan(snap.robot.x);
    }
  });

  it("viewport always frames robot and goal", () => {
    const snap = capturedSnapshot();
    const wandered = { ...snap, robot: { ...snap.robot, x: 55, y: -30 } };
    const vp = frameViewport(wandered);
    expect(vp.x1).toBeGreaterThanOrEqual(55);
    expect(vp.y0).toBeLessThanOrEqual(-30);
    expect(vp.x1).toBeGreaterThanOrEqual(wandered.goal.x);
  });

  it("candidate arcs follow the unicycle kinematics", () => {
    const robot = { x: 1, y: 2, theta: 0 };
    const straight = candidateArc(robot, { v: 1, omega: 0 });
    expect(straight.at(-1)![0]).toBeCloseTo(3.0, 9); // 1 m/s for 2 s
    expect(straight.at(-1)![1]).toBeCloseTo(2.0, 9);
    const arc = candidateArc(robot, { v: 0.8, omega: 0.6 });
    // every point lies on the circle of radius v/omega centered at (x, y + r)
    const r = 0.8 / 0.6;
    for (const [px, py] of arc) {
      expect(Math.hypot(px - 1, py - (2 + r))).toBeCloseTo(r, 9);
    }
  });

  it("pixel unprojection lands in front of the camera", () => {
    const ground = unprojectPixel(160, 239);
    expect(ground).not.toBeNull();
    expect(ground![0]).toBeGreaterThan(0);
    expect(Math.abs(ground![1])).toBeLessThan(0.1); // center column -> straight ahead
    expect(unprojectPixel(160, 0)).toBeNull(); // above the horizon
  });
});
