/**
 * Browser entry point: wires the session, teleop loop, and canvas together.
 * Server URL comes from the `?server=` query parameter
 * (default ws://127.0.0.1:8765).
 */
import { buildScene, type Scene, type SceneItem, type Viewport } from "./render.js";
import { ClientSession } from "./session.js";
import { TeleopLoop } from "./teleop.js";

const params = new URLSearchParams(window.location.search);
const serverUrl = params.get("server") ?? "ws://127.0.0.1:8765";

const canvas = document.getElementById("world") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const panel = document.getElementById("panel")!;
const recordButton = document.getElementById("record") as HTMLButtonElement;
const attentionToggle = document.getElementById("attention") as HTMLInputElement;

const pathHistory: Array<[number, number]> = [];
let recording = false;
let lastScenario: string | null = null;

const session = new ClientSession({
  url: serverUrl,
  onStateChange: (state) => {
    banner.textContent = state === "open" ? "" : `connection: ${state} (${serverUrl})`;
    banner.className = state === "open" ? "hidden" : "banner";
  },
  onSnapshot: (snapshot) => {
    if (snapshot.scenario !== lastScenario || snapshot.sim_time < 0.2) {
      pathHistory.length = 0; // episode reset
      lastScenario = snapshot.scenario;
    }
    pathHistory.push([snapshot.robot.x, snapshot.robot.y]);
    if (pathHistory.length > 3000) pathHistory.shift();
    updatePanel();
  },
  onControl: (payload) => {
    if (payload.action === "recording_started") recording = true;
    if (payload.action === "recording_saved") {
      recording = false;
      banner.textContent = `saved ${payload.path}`;
      banner.className = "banner info";
      setTimeout(() => banner.classList.add("hidden"), 4000);
    }
    recordButton.textContent = recording ? "Stop recording" : "Start recording";
  },
  onServerError: (message) => {
    banner.textContent = `server error: ${message}`;
    banner.className = "banner";
  },
});
session.connect();

const teleop = new TeleopLoop((cmd) => session.sendTeleop(cmd));
window.addEventListener("keydown", (e) => {
  if (e.repeat) return;
  teleop.keyDown(e.key);
});
window.addEventListener("keyup", (e) => teleop.keyUp(e.key));

recordButton.addEventListener("click", () => {
  session.sendControl(recording ? "stop_recording" : "start_recording");
});

function updatePanel(): void {
  const s = session.latest;
  if (s === null) return;
  const clearance = s.min_clearance === null ? "-" : `${s.min_clearance.toFixed(2)} m`;
  panel.textContent =
    `${s.scenario} | t=${s.sim_time.toFixed(1)}s | ${s.status} | ` +
    `v=${s.chosen.v.toFixed(2)} w=${s.chosen.omega.toFixed(2)} | clearance ${clearance}` +
    (recording ? " | REC" : "");
}

function worldToCanvas(vp: Viewport, x: number, y: number): [number, number] {
  const sx = canvas.width / (vp.x1 - vp.x0);
  const sy = canvas.height / (vp.y1 - vp.y0);
  const s = Math.min(sx, sy);
  // y up in the world, down on canvas
  return [(x - vp.x0) * s, canvas.height - (y - vp.y0) * s];
}

function drawItem(vp: Viewport, item: SceneItem): void {
  const p = (x: number, y: number) => worldToCanvas(vp, x, y);
  switch (item.kind) {
    case "box": {
      const [x0, y0, x1, y1] = item.rect;
      const [cx, cy] = p(x0, y1);
      const [cx1, cy1] = p(x1, y0);
      ctx.fillStyle = "#555";
      ctx.fillRect(cx, cy, cx1 - cx, cy1 - cy);
      break;
    }
    case "segment": {
      const [x0, y0, x1, y1] = item.rect;
      ctx.strokeStyle = "#777";
      ctx.lineWidth = 3;
      ctx.beginPath();
      ctx.moveTo(...p(x0, y0));
      ctx.lineTo(...p(x1, y1));
      ctx.stroke();
      break;
    }
    case "attentionCell": {
      const [r, g, b] = item.color;
      ctx.fillStyle = `rgba(${r},${g},${b},${0.15 + 0.5 * item.value})`;
      const [cx, cy] = p(item.x, item.y);
      ctx.fillRect(cx - 4, cy - 4, 8, 8);
      break;
    }
    case "path": {
      ctx.strokeStyle = "#2a6";
      ctx.lineWidth = 2;
      ctx.beginPath();
      item.points.forEach(([x, y], k) => {
        const [cx, cy] = p(x, y);
        if (k === 0) ctx.moveTo(cx, cy);
        else ctx.lineTo(cx, cy);
      });
      ctx.stroke();
      break;
    }
    case "fanArc": {
      const [r, g, b] = item.color;
      ctx.strokeStyle = item.chosen ? "#fff" : `rgba(${r},${g},${b},0.7)`;
      ctx.lineWidth = item.chosen ? 2.5 : 1;
      ctx.beginPath();
      item.points.forEach(([x, y], k) => {
        const [cx, cy] = p(x, y);
        if (k === 0) ctx.moveTo(cx, cy);
        else ctx.lineTo(cx, cy);
      });
      ctx.stroke();
      break;
    }
    case "goal": {
      const [cx, cy] = p(item.x, item.y);
      ctx.strokeStyle = "#fc0";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.arc(cx, cy, 8, 0, 2 * Math.PI);
      ctx.stroke();
      break;
    }
    case "pedestrian": {
      const [cx, cy] = p(item.x, item.y);
      ctx.fillStyle = "#e55";
      ctx.beginPath();
      ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
      ctx.fill();
      break;
    }
    case "robot": {
      const [cx, cy] = p(item.x, item.y);
      ctx.fillStyle = "#4af";
      ctx.beginPath();
      ctx.arc(cx, cy, 7, 0, 2 * Math.PI);
      ctx.fill();
      ctx.strokeStyle = "#fff";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(cx, cy);
      ctx.lineTo(cx + 12 * Math.cos(-item.theta), cy + 12 * Math.sin(-item.theta));
      ctx.stroke();
      break;
    }
  }
}

function draw(): void {
  ctx.fillStyle = "#181c20";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const snapshot = session.latest;
  if (snapshot !== null) {
    const scene: Scene = buildScene(snapshot, pathHistory, attentionToggle.checked);
    for (const item of scene.items) drawItem(scene.viewport, item);
  }
  requestAnimationFrame(draw);
}
requestAnimationFrame(draw);
