/**
 * Pure scene construction: snapshot -> display list. The canvas layer in
 * main.ts just draws the list, so everything visual is testable headlessly.
 * All geometry is in world coordinates; the viewport says what to frame.
 */
import { decodeAgridBase64, jetColor, type AttentionGrid } from "./agrid.js";
import type { Candidate, Snapshot } from "./schema.js";

// Camera model matching the robot's default configuration; used to ground-
// project image-frame attention cells into the visible frustum wedge.
export const CAMERA = {
  focal: 200.0,
  u0: 160.0,
  v0: 120.0,
  height: 0.5,
  pitch: 0.35,
  imageWidth: 320,
  imageHeight: 240,
};

// Metric extents of ground-frame attention maps (row 0 = far edge,
// column 0 = left edge).
export const GROUND_X_MAX = 10.0;
export const GROUND_Y_HALF = 5.0;

export const PLAN_HORIZON_S = 2.0;
export const PLAN_DT_S = 0.1;

export interface Viewport {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export type SceneItem =
  | { kind: "box"; rect: [number, number, number, number] }
  | { kind: "segment"; rect: [number, number, number, number] }
  | { kind: "goal"; x: number; y: number }
  | { kind: "robot"; x: number; y: number; theta: number }
  | { kind: "pedestrian"; x: number; y: number; vx: number; vy: number }
  | { kind: "path"; points: Array<[number, number]> }
  | { kind: "fanArc"; points: Array<[number, number]>; color: [number, number, number]; chosen: boolean }
  | { kind: "attentionCell"; x: number; y: number; value: number; color: [number, number, number] };

export interface Scene {
  viewport: Viewport;
  items: SceneItem[];
}

/** Cast an image pixel onto the ground plane in the robot frame, mirroring
 * the server's camera geometry; null if the ray misses the ground. */
export function unprojectPixel(u: number, v: number): [number, number] | null {
  const st = Math.sin(CAMERA.pitch);
  const ct = Math.cos(CAMERA.pitch);
  const xc = (u - CAMERA.u0) / CAMERA.focal;
  const yc = (v - CAMERA.v0) / CAMERA.focal;
  const dx = -yc * st + ct;
  const dy = -xc;
  const dz = -yc * ct - st;
  if (dz >= -1e-12) return null;
  const t = CAMERA.height / -dz;
  return [t * dx, t * dy];
}

function toWorld(robot: { x: number; y: number; theta: number }, px: number, py: number): [number, number] {
  const c = Math.cos(robot.theta);
  const s = Math.sin(robot.theta);
  return [robot.x + c * px - s * py, robot.y + s * px + c * py];
}

/** Unicycle arc matching the planner's rollout, in the world frame. */
export function candidateArc(
  robot: { x: number; y: number; theta: number },
  cand: { v: number; omega: number },
): Array<[number, number]> {
  const points: Array<[number, number]> = [];
  const steps = Math.round(PLAN_HORIZON_S / PLAN_DT_S);
  for (let k = 0; k <= steps; k++) {
    const t = k * PLAN_DT_S;
    let px: number;
    let py: number;
    if (Math.abs(cand.omega) > 1e-9) {
      const r = cand.v / cand.omega;
      px = r * Math.sin(cand.omega * t);
      py = r * (1 - Math.cos(cand.omega * t));
    } else {
      px = cand.v * t;
      py = 0;
    }
    points.push(toWorld(robot, px, py));
  }
  return points;
}

function candidateColor(cand: Candidate, all: Candidate[]): [number, number, number] {
  const js = all.map((c) => c.j);
  const lo = Math.min(...js);
  const hi = Math.max(...js);
  const t = hi > lo ? (cand.j - lo) / (hi - lo) : 0;
  // best candidates cool (blue), worst hot (red)
  return jetColor(t);
}

function attentionItems(snapshot: Snapshot): SceneItem[] {
  if (snapshot.attention_agrid_b64 === null) return [];
  let grid: AttentionGrid;
  try {
    grid = decodeAgridBase64(snapshot.attention_agrid_b64);
  } catch (err) {
    console.warn("vilad-ui: undecodable attention map", err);
    return [];
  }
  let hot = false;
  for (const v of grid.values) {
    if (v > 0) {
      hot = true;
      break;
    }
  }
  if (!hot) return []; // an all-zero map carries no preference: no wedge
  const items: SceneItem[] = [];
  for (let i = 0; i < grid.height; i++) {
    for (let j = 0; j < grid.width; j++) {
      const value = grid.values[i * grid.width + j]!;
      if (value <= 0.01) continue;
      let ground: [number, number] | null;
      if (grid.frame === 0) {
        // image frame: unproject the cell-center pixel through the camera
        const u = ((j + 0.5) / grid.width) * CAMERA.imageWidth;
        const v = ((i + 0.5) / grid.height) * CAMERA.imageHeight;
        ground = unprojectPixel(u, v);
      } else {
        // ground frame: fixed metric extents
        ground = [
          GROUND_X_MAX - ((i + 0.5) / grid.height) * GROUND_X_MAX,
          GROUND_Y_HALF - ((j + 0.5) / grid.width) * 2 * GROUND_Y_HALF,
        ];
      }
      if (ground === null) continue;
      const [wx, wy] = toWorld(snapshot.robot, ground[0], ground[1]);
      items.push({ kind: "attentionCell", x: wx, y: wy, value, color: jetColor(value) });
    }
  }
  return items;
}

/** Viewport covering the world bounds, grown if the robot or goal strays. */
export function frameViewport(snapshot: Snapshot, margin = 0.5): Viewport {
  const [bx0, by0, bx1, by1] = snapshot.world.bounds;
  const xs = [bx0, bx1, snapshot.robot.x, snapshot.goal.x];
  const ys = [by0, by1, snapshot.robot.y, snapshot.goal.y];
  return {
    x0: Math.min(...xs) - margin,
    y0: Math.min(...ys) - margin,
    x1: Math.max(...xs) + margin,
    y1: Math.max(...ys) + margin,
  };
}

export function buildScene(
  snapshot: Snapshot,
  pathHistory: Array<[number, number]> = [],
  showAttention = true,
): Scene {
  const items: SceneItem[] = [];
  for (const rect of snapshot.world.boxes) items.push({ kind: "box", rect });
  for (const rect of snapshot.world.segments) items.push({ kind: "segment", rect });
  if (showAttention) items.push(...attentionItems(snapshot));
  if (pathHistory.length > 1) items.push({ kind: "path", points: pathHistory });
  for (const cand of snapshot.candidates) {
    items.push({
      kind: "fanArc",
      points: candidateArc(snapshot.robot, cand),
      color: candidateColor(cand, snapshot.candidates),
      chosen: cand.v === snapshot.chosen.v && cand.omega === snapshot.chosen.omega,
    });
  }
  items.push({ kind: "goal", x: snapshot.goal.x, y: snapshot.goal.y });
  for (const p of snapshot.pedestrians) {
    items.push({ kind: "pedestrian", x: p.x, y: p.y, vx: p.vx, vy: p.vy });
  }
  items.push({ kind: "robot", x: snapshot.robot.x, y: snapshot.robot.y, theta: snapshot.robot.theta });
  return { viewport: frameViewport(snapshot), items };
}
