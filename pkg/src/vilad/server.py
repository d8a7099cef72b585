"""Live bridge between a running episode and browser clients: broadcasts world
snapshots over a WebSocket and accepts teleop / recording-control messages.

Wire protocol (see docs/protocol.md): JSON envelopes {type, seq, payload} with
types snapshot | teleop | control | error. Teleop commands land in a single-slot
latest-wins mailbox; snapshots are broadcast best-effort and may be dropped
without ever blocking the episode loop.
"""

from __future__ import annotations

import base64
import json
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .costmap import grid_to_bytes
from .planner import PlannerConfig, VelocityCommand, plan
from .sim import (
    EpisodeStatus,
    OccupancyGrid,
    default_camera,
    initial_state,
    pedestrian_clearance,
    step,
    synth_attention,
    to_robot_frame,
    AttentionMode,
)

TELEOP_STALENESS_S = 0.5
SNAPSHOT_TOP_K = 12


class ControlError(RuntimeError):
    pass


@dataclass
class TeleopMailbox:
    """Single-slot latest-wins command buffer with wall-clock staleness."""

    v: float = 0.0
    omega: float = 0.0
    received_at: float = -math.inf

    def put(self, v: float, omega: float) -> None:
        self.v = v
        self.omega = omega
        self.received_at = time.monotonic()

    def get(self, now: float | None = None):
        now = time.monotonic() if now is None else now
        if now - self.received_at > TELEOP_STALENESS_S:
            return (0.0, 0.0)
        return (self.v, self.omega)


class EpisodeServer:
    """Owns one episode loop plus a WebSocket endpoint.

    policy: "teleop", "goal_only", "synth:<mode>", or "vilad:<model.vlad>".
    With realtime=True the loop paces itself to the control period; tests can
    run flat out.
    """

    def __init__(self, scenario, policy: str = "teleop", port: int = 8765,
                 cfg: PlannerConfig | None = None, refs_dir=None,
                 realtime: bool = True, host: str = "127.0.0.1"):
        self.scenario = scenario
        self.policy = policy
        self.port = port
        self.host = host
        self.cfg = cfg or PlannerConfig()
        if policy == "goal_only":
            import dataclasses

            self.cfg = dataclasses.replace(self.cfg, beta2=0.0)
        self.refs_dir = Path(refs_dir) if refs_dir else Path("references")
        self.realtime = realtime
        self.mailbox = TeleopMailbox()
        self.mailbox_lock = threading.Lock()
        self.clients = set()
        self.clients_lock = threading.Lock()
        self.stop_event = threading.Event()
        self.seq = 0
        self.recording = None  # None or list of rows
        self.recording_lock = threading.Lock()
        self.model = None
        if policy.startswith("vilad:"):
            from .distill import load_model

            self.model = load_model(policy.split(":", 1)[1])
        self._ws_server = None
        self._threads = []
        self._frame_buffer = []
        self.last_snapshot = None

    # -- networking ---------------------------------------------------------

    def _handle_client(self, conn):
        with self.clients_lock:
            self.clients.add(conn)
        try:
            for raw in conn:
                reply = self._handle_message(raw)
                if reply is not None:
                    try:
                        conn.send(json.dumps(reply))
                    except Exception:
                        break
        except Exception:
            pass
        finally:
            with self.clients_lock:
                self.clients.discard(conn)

    def _handle_message(self, raw):
        try:
            msg = json.loads(raw)
            mtype = msg["type"]
            payload = msg.get("payload", {})
        except (json.JSONDecodeError, TypeError, KeyError) as e:
            return self._envelope("error", {"message": f"malformed message: {e}"})
        if mtype == "teleop":
            try:
                v = float(payload["v"])
                omega = float(payload["omega"])
            except (KeyError, TypeError, ValueError):
                return self._envelope("error", {"message": "teleop needs numeric v and omega"})
            v = min(max(v, -self.cfg.v_max), self.cfg.v_max)
            omega = min(max(omega, -self.cfg.omega_max), self.cfg.omega_max)
            with self.mailbox_lock:
                self.mailbox.put(v, omega)
            return None
        if mtype == "control":
            action = payload.get("action")
            try:
                result = self._handle_control(action)
            except ControlError as e:
                return self._envelope("error", {"message": str(e)})
            return self._envelope("control", result)
        return self._envelope("error", {"message": f"unknown message type {mtype!r}"})

    def _handle_control(self, action):
        if action == "start_recording":
            with self.recording_lock:
                self.recording = []
            return {"action": "recording_started"}
        if action == "stop_recording":
            with self.recording_lock:
                if self.recording is None:
                    raise ControlError("stop_recording without start_recording")
                rows, self.recording = self.recording, None
            self.refs_dir.mkdir(parents=True, exist_ok=True)
            stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{int(time.time()*1000)%1000:03d}"
            path = self.refs_dir / f"{self.scenario.name}_{stamp}.csv"
            with open(path, "w") as f:
                f.write("t,x,y,theta,v,omega\n")
                for r in rows:
                    f.write(",".join(f"{val:.9f}" for val in r) + "\n")
            return {"action": "recording_saved", "path": str(path),
                    "scenario": self.scenario.name}
        if action == "reset":
            self._reset_requested = True
            return {"action": "reset_ok"}
        if action == "shutdown":
            self.stop_event.set()
            return {"action": "shutting_down"}
        raise ControlError(f"unknown control action {action!r}")

    def _envelope(self, mtype, payload):
        self.seq += 1
        return {"type": mtype, "seq": self.seq, "payload": payload}

    def _broadcast(self, message: dict) -> None:
        data = json.dumps(message)
        with self.clients_lock:
            conns = list(self.clients)
        for conn in conns:
            try:
                conn.send(data)
            except Exception:
                with self.clients_lock:
                    self.clients.discard(conn)

    # -- episode loop -------------------------------------------------------

    def _build_snapshot(self, state, cmd, diagnostics, amap):
        scen = self.scenario
        candidates = []
        if diagnostics is not None and diagnostics.candidates:
            ranked = sorted(diagnostics.candidates, key=lambda c: c.objective)
            for c in ranked[:SNAPSHOT_TOP_K]:
                candidates.append({"v": c.cmd.v, "omega": c.cmd.omega,
                                   "j": c.objective})
        attention = None
        if amap is not None:
            attention = base64.b64encode(grid_to_bytes(amap)).decode("ascii")
        clearance = pedestrian_clearance(state)
        return {
            "sim_time": state.t,
            "robot": {"x": state.robot[0], "y": state.robot[1],
                      "theta": state.robot[2], "v": cmd.v, "omega": cmd.omega},
            "pedestrians": [{"x": p.x, "y": p.y, "vx": p.vx, "vy": p.vy}
                            for p in state.pedestrians],
            "goal": {"x": scen.goal[0], "y": scen.goal[1]},
            "status": state.status.value,
            "attention_agrid_b64": attention,
            "chosen": {"v": cmd.v, "omega": cmd.omega},
            "candidates": candidates,
            "min_clearance": None if math.isinf(clearance) else clearance,
            "world": {
                "bounds": list(scen.bounds),
                "boxes": [[b.x0, b.y0, b.x1, b.y1] for b in scen.boxes],
                "segments": [[s.x0, s.y0, s.x1, s.y1] for s in scen.segments],
            },
            "scenario": scen.name,
        }

    def _episode_loop(self):
        cam = default_camera()
        occupancy = OccupancyGrid.from_scenario(self.scenario)
        state = initial_state(self.scenario)
        cmd = VelocityCommand(0.0, 0.0)
        self._reset_requested = False
        period = self.cfg.dt
        next_tick = time.monotonic()
        while not self.stop_event.is_set():
            if self._reset_requested:
                state = initial_state(self.scenario)
                cmd = VelocityCommand(0.0, 0.0)
                self._reset_requested = False
            diagnostics = None
            amap = None
            if state.status == EpisodeStatus.RUNNING:
                if self.policy == "teleop":
                    with self.mailbox_lock:
                        v, omega = self.mailbox.get()
                    cmd = VelocityCommand(v, omega)
                else:
                    from .sim import _build_policy_map

                    amap = _build_policy_map(self.policy, state, cam, self.model,
                                             self._frame_buffer)
                    goal_rf = to_robot_frame(state.robot, *self.scenario.goal)
                    cmd, diagnostics = plan(cmd, goal_rf, occupancy, amap, cam,
                                            self.cfg, robot_pose=state.robot)
                state = step(state, cmd, period)
                with self.recording_lock:
                    if self.recording is not None:
                        self.recording.append((state.t, *state.robot, cmd.v, cmd.omega))
            snapshot = self._envelope("snapshot",
                                      self._build_snapshot(state, cmd, diagnostics, amap))
            self.last_snapshot = snapshot
            self._broadcast(snapshot)
            if self.realtime:
                next_tick += period
                delay = next_tick - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_tick = time.monotonic()

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        from websockets.sync.server import serve as ws_serve

        try:
            self._ws_server = ws_serve(self._handle_client, self.host, self.port)
        except OSError as e:
            raise RuntimeError(f"cannot bind port {self.port}: {e}") from e
        t_net = threading.Thread(target=self._ws_server.serve_forever, daemon=True)
        t_ep = threading.Thread(target=self._episode_loop, daemon=True)
        t_net.start()
        t_ep.start()
        self._threads = [t_net, t_ep]
        return self

    def stop(self):
        self.stop_event.set()
        if self._ws_server is not None:
            self._ws_server.shutdown()
        for t in self._threads:
            t.join(timeout=5.0)


def serve(scenario, policy: str, port: int, cfg: PlannerConfig | None = None,
          refs_dir=None) -> None:
    """Blocking entry point used by the CLI."""
    server = EpisodeServer(scenario, policy, port, cfg, refs_dir, realtime=True)
    server.start()
    print(f"serving {scenario.name} with policy {policy} on ws://{server.host}:{port}")
    try:
        while not server.stop_event.is_set():
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
