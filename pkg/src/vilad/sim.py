"""Deterministic 2D world: unicycle robot, waypoint pedestrians, static
obstacles, synthetic attention maps, flat-shaded camera rendering, and episode
rollouts for evaluation."""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .costmap import AttentionMap, CameraModel, Frame, Role, normalize
from .planner import (
    ARC_OMEGA_EPS,
    PlannerConfig,
    VelocityCommand,
    plan,
    wrap_angle,
)

PED_RADIUS = 0.3
ROBOT_RADIUS = 0.35
# attention values at or above this level are treated as hard obstacles when
# running closed-loop episodes (some hazards only show up in the attention map)
EPISODE_SOCIAL_THRESHOLD = 0.8
SEGMENT_HALF_THICKNESS = 0.02
BLOB_SIGMA = 0.4
SOCIAL_HORIZON = 3.0
SOCIAL_PEAK_END = 0.4


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    REACHED_GOAL = "reached_goal"
    COLLISION = "collision"
    TIMEOUT = "timeout"


class TerminalStateError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class Box:
    x0: float
    y0: float
    x1: float
    y1: float
    height: float = 0.5
    lidar_visible: bool = True

    def distance_to(self, x: float, y: float) -> float:
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)

    @property
    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    lidar_visible: bool = True

    def distance_to(self, x: float, y: float) -> float:
        vx, vy = self.x1 - self.x0, self.y1 - self.y0
        L2 = vx * vx + vy * vy
        if L2 == 0.0:
            return math.hypot(x - self.x0, y - self.y0)
        t = min(max(((x - self.x0) * vx + (y - self.y0) * vy) / L2, 0.0), 1.0)
        return math.hypot(x - (self.x0 + t * vx), y - (self.y0 + t * vy))


@dataclass(frozen=True)
class PedestrianSpec:
    start: tuple
    waypoints: tuple
    speed: float = 1.0
    delay: float = 0.0
    radius: float = PED_RADIUS

    def path(self):
        return [tuple(self.start)] + [tuple(w) for w in self.waypoints]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    bounds: tuple  # (x0, y0, x1, y1)
    boxes: tuple = ()
    segments: tuple = ()
    pedestrians: tuple = ()
    robot_start: tuple = (0.0, 0.0, 0.0)
    goal: tuple = (5.0, 0.0)
    time_limit: float = 30.0
    seed: int = 0
    lighting: float = 1.0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": list(self.bounds),
            "boxes": [
                {"x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1,
                 "height": b.height, "lidar_visible": b.lidar_visible}
                for b in self.boxes
            ],
            "segments": [
                {"x0": s.x0, "y0": s.y0, "x1": s.x1, "y1": s.y1,
                 "lidar_visible": s.lidar_visible}
                for s in self.segments
            ],
            "pedestrians": [
                {"start": list(p.start), "waypoints": [list(w) for w in p.waypoints],
                 "speed": p.speed, "delay": p.delay, "radius": p.radius}
                for p in self.pedestrians
            ],
            "robot_start": list(self.robot_start),
            "goal": list(self.goal),
            "time_limit": self.time_limit,
            "seed": self.seed,
            "lighting": self.lighting,
            "metadata": dict(self.metadata),
        }

    @staticmethod
    def from_dict(d: dict) -> "ScenarioSpec":
        return ScenarioSpec(
            name=d["name"],
            bounds=tuple(d["bounds"]),
            boxes=tuple(Box(**b) for b in d.get("boxes", [])),
            segments=tuple(Segment(**s) for s in d.get("segments", [])),
            pedestrians=tuple(
                PedestrianSpec(
                    start=tuple(p["start"]),
                    waypoints=tuple(tuple(w) for w in p["waypoints"]),
                    speed=p.get("speed", 1.0),
                    delay=p.get("delay", 0.0),
                    radius=p.get("radius", PED_RADIUS),
                )
                for p in d.get("pedestrians", [])
            ),
            robot_start=tuple(d["robot_start"]),
            goal=tuple(d["goal"]),
            time_limit=d.get("time_limit", 30.0),
            seed=d.get("seed", 0),
            lighting=d.get("lighting", 1.0),
            metadata=d.get("metadata", {}),
        )


def load_scenario(path) -> ScenarioSpec:
    with open(path) as f:
        return ScenarioSpec.from_dict(json.load(f))


def save_scenario(scenario: ScenarioSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario.to_dict(), f, indent=2, sort_keys=True)


def bundled_scenario(name: str) -> ScenarioSpec:
    return load_scenario(Path(__file__).parent / "scenarios" / f"{name}.json")


def bundled_reference(name: str) -> Path:
    return Path(__file__).parent / "references" / f"{name}.csv"


def jitter_scenario(scenario: ScenarioSpec, seed: int) -> ScenarioSpec:
    """Perturb pedestrian timing and starts so per-seed trials differ."""
    rng = np.random.default_rng([scenario.seed, seed])
    peds = []
    for p in scenario.pedestrians:
        dx, dy = rng.uniform(-0.3, 0.3, size=2)
        peds.append(replace(
            p,
            start=(p.start[0] + dx, p.start[1] + dy),
            speed=p.speed * rng.uniform(0.9, 1.1),
            delay=p.delay + rng.uniform(0.0, 0.5),
        ))
    return replace(scenario, pedestrians=tuple(peds))


# ---------------------------------------------------------------------------
# World state


@dataclass(frozen=True)
class PedState:
    x: float
    y: float
    vx: float
    vy: float


def _ped_state_at(spec: PedestrianSpec, t: float) -> PedState:
    path = spec.path()
    travel = max(0.0, t - spec.delay) * spec.speed
    moving = t >= spec.delay and spec.speed > 0.0
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        seg_len = math.hypot(bx - ax, by - ay)
        if seg_len == 0.0:
            continue
        if travel <= seg_len:
            ux, uy = (bx - ax) / seg_len, (by - ay) / seg_len
            if moving:
                return PedState(ax + ux * travel, ay + uy * travel,
                                ux * spec.speed, uy * spec.speed)
            return PedState(ax, ay, 0.0, 0.0)
        travel -= seg_len
    fx, fy = path[-1]
    return PedState(fx, fy, 0.0, 0.0)


@dataclass(frozen=True)
class WorldState:
    scenario: ScenarioSpec
    t: float
    robot: tuple  # (x, y, theta)
    cmd: VelocityCommand
    status: EpisodeStatus

    @property
    def pedestrians(self):
        return [_ped_state_at(p, self.t) for p in self.scenario.pedestrians]


def initial_state(scenario: ScenarioSpec) -> WorldState:
    return WorldState(scenario, 0.0, tuple(scenario.robot_start),
                      VelocityCommand(0.0, 0.0), EpisodeStatus.RUNNING)


def advance_pose(pose, cmd: VelocityCommand, dt: float):
    """Exact unicycle arc in the world frame."""
    x, y, th = pose
    v, w = cmd.v, cmd.omega
    if abs(w) > ARC_OMEGA_EPS:
        r = v / w
        x += r * (math.sin(th + w * dt) - math.sin(th))
        y -= r * (math.cos(th + w * dt) - math.cos(th))
    else:
        x += v * math.cos(th) * dt
        y += v * math.sin(th) * dt
    return (x, y, wrap_angle(th + w * dt))


def _robot_collides(scenario: ScenarioSpec, pose, peds) -> bool:
    x, y, _ = pose
    x0, y0, x1, y1 = scenario.bounds
    if not (x0 + ROBOT_RADIUS <= x <= x1 - ROBOT_RADIUS
            and y0 + ROBOT_RADIUS <= y <= y1 - ROBOT_RADIUS):
        return True
    for b in scenario.boxes:
        if b.distance_to(x, y) < ROBOT_RADIUS:
            return True
    for s in scenario.segments:
        if s.distance_to(x, y) < ROBOT_RADIUS + SEGMENT_HALF_THICKNESS:
            return True
    for p, spec in zip(peds, scenario.pedestrians):
        if math.hypot(p.x - x, p.y - y) < ROBOT_RADIUS + spec.radius:
            return True
    return False


def step(state: WorldState, cmd: VelocityCommand, dt: float, *,
         check_goal: bool = True, check_collision: bool = True,
         check_timeout: bool = True) -> WorldState:
    """Advance the world by dt under a velocity command."""
    if state.status != EpisodeStatus.RUNNING:
        raise TerminalStateError(f"cannot step a {state.status.value} episode")
    scenario = state.scenario
    t = state.t + dt
    robot = advance_pose(state.robot, cmd, dt)
    new = WorldState(scenario, t, robot, cmd, EpisodeStatus.RUNNING)
    status = EpisodeStatus.RUNNING
    if check_goal:
        gx, gy = scenario.goal
        if math.hypot(robot[0] - gx, robot[1] - gy) <= GOAL_TOLERANCE:
            status = EpisodeStatus.REACHED_GOAL
    if status == EpisodeStatus.RUNNING and check_collision:
        if _robot_collides(scenario, robot, new.pedestrians):
            status = EpisodeStatus.COLLISION
    if status == EpisodeStatus.RUNNING and check_timeout and t >= scenario.time_limit:
        status = EpisodeStatus.TIMEOUT
    return WorldState(scenario, t, robot, cmd, status)


GOAL_TOLERANCE = 0.3


def pedestrian_clearance(state: WorldState) -> float:
    """Smallest surface-to-surface distance to any pedestrian (inf if none)."""
    x, y, _ = state.robot
    best = math.inf
    for p, spec in zip(state.pedestrians, state.scenario.pedestrians):
        best = min(best, math.hypot(p.x - x, p.y - y) - ROBOT_RADIUS - spec.radius)
    return best


def to_robot_frame(robot_pose, x: float, y: float):
    rx, ry, rth = robot_pose
    c, s = math.cos(rth), math.sin(rth)
    dx, dy = x - rx, y - ry
    return (c * dx + s * dy, -s * dx + c * dy)


def pedestrians_in_robot_frame(state: WorldState):
    """(x, y, vx, vy) tuples for the mock annotation oracle."""
    _, _, rth = state.robot
    c, s = math.cos(rth), math.sin(rth)
    out = []
    for p in state.pedestrians:
        px, py = to_robot_frame(state.robot, p.x, p.y)
        out.append((px, py, c * p.vx + s * p.vy, -s * p.vx + c * p.vy))
    return out


# ---------------------------------------------------------------------------
# Occupancy


class OccupancyGrid:
    """Boolean world-frame grid rasterized from LiDAR-visible obstacles.

    Collision queries run against a cached conservative dilation of the
    occupied mask, so repeated planner lookups are O(1).
    """

    def __init__(self, bounds, resolution: float, occupied: np.ndarray):
        self.bounds = tuple(bounds)
        self.resolution = resolution
        self.occupied = occupied  # (rows, cols), row 0 at y0
        self._dilated = {}

    @staticmethod
    def from_scenario(scenario: ScenarioSpec, resolution: float = 0.1,
                      include_hidden: bool = False) -> "OccupancyGrid":
        x0, y0, x1, y1 = scenario.bounds
        cols = int(math.ceil((x1 - x0) / resolution))
        rows = int(math.ceil((y1 - y0) / resolution))
        occ = np.zeros((rows, cols), dtype=bool)
        for b in scenario.boxes:
            if not (b.lidar_visible or include_hidden):
                continue
            j0 = max(0, int((b.x0 - x0) / resolution))
            j1 = min(cols, int(math.ceil((b.x1 - x0) / resolution)))
            i0 = max(0, int((b.y0 - y0) / resolution))
            i1 = min(rows, int(math.ceil((b.y1 - y0) / resolution)))
            occ[i0:i1, j0:j1] = True
        for s in scenario.segments:
            if not (s.lidar_visible or include_hidden):
                continue
            length = math.hypot(s.x1 - s.x0, s.y1 - s.y0)
            n = max(2, int(length / (resolution * 0.5)) + 1)
            for k in range(n):
                t = k / (n - 1)
                px = s.x0 + t * (s.x1 - s.x0)
                py = s.y0 + t * (s.y1 - s.y0)
                j = int((px - x0) / resolution)
                i = int((py - y0) / resolution)
                if 0 <= i < rows and 0 <= j < cols:
                    occ[i, j] = True
        return OccupancyGrid(scenario.bounds, resolution, occ)

    def _dilation(self, radius: float) -> np.ndarray:
        key = round(radius, 6)
        if key not in self._dilated:
            reach = radius + self.resolution * math.sqrt(2.0)
            rr = int(math.ceil(reach / self.resolution))
            mask = np.zeros_like(self.occupied)
            for di in range(-rr, rr + 1):
                for dj in range(-rr, rr + 1):
                    if math.hypot(di, dj) * self.resolution > reach:
                        continue
                    src = self.occupied
                    shifted = np.zeros_like(src)
                    si0, si1 = max(0, di), min(src.shape[0], src.shape[0] + di)
                    ti0, ti1 = max(0, -di), min(src.shape[0], src.shape[0] - di)
                    sj0, sj1 = max(0, dj), min(src.shape[1], src.shape[1] + dj)
                    tj0, tj1 = max(0, -dj), min(src.shape[1], src.shape[1] - dj)
                    shifted[ti0:ti1, tj0:tj1] = src[si0:si1, sj0:sj1]
                    mask |= shifted
            self._dilated[key] = mask
        return self._dilated[key]

    def path_collides(self, points, radius: float) -> bool:
        """disc_collides over a sequence of (x, y) points, stopping at the
        first hit; the dilation mask is resolved once for the whole path."""
        x0, y0, x1, y1 = self.bounds
        xlo, xhi = x0 + radius, x1 - radius
        ylo, yhi = y0 + radius, y1 - radius
        mask = self._dilation(radius)
        res = self.resolution
        rows, cols = mask.shape
        for x, y in points:
            if not (xlo <= x <= xhi and ylo <= y <= yhi):
                return True
            j = int((x - x0) / res)
            i = int((y - y0) / res)
            i = 0 if i < 0 else (rows - 1 if i >= rows else i)
            j = 0 if j < 0 else (cols - 1 if j >= cols else j)
            if mask[i, j]:
                return True
        return False

    def disc_collides(self, x: float, y: float, radius: float) -> bool:
        """Conservative test: does a disc at (x, y) touch any occupied cell?
        Points outside the grid bounds count as collisions (world edge)."""
        x0, y0, x1, y1 = self.bounds
        if not (x0 + radius <= x <= x1 - radius and y0 + radius <= y <= y1 - radius):
            return True
        j = int((x - x0) / self.resolution)
        i = int((y - y0) / self.resolution)
        mask = self._dilation(radius)
        i = min(max(i, 0), mask.shape[0] - 1)
        j = min(max(j, 0), mask.shape[1] - 1)
        return bool(mask[i, j])


# ---------------------------------------------------------------------------
# Synthetic attention


class AttentionMode(enum.Enum):
    PRETRAINED_LIKE = "pretrained_like"
    GROUND_TRUTH_SOCIAL = "ground_truth_social"


DEFAULT_IMAGE_WIDTH = 320
DEFAULT_IMAGE_HEIGHT = 240


def default_camera() -> CameraModel:
    return CameraModel(focal=200.0, u0=160.0, v0=120.0, height=0.5, pitch=0.35,
                       image_width=DEFAULT_IMAGE_WIDTH, image_height=DEFAULT_IMAGE_HEIGHT)


def _obstacle_sample_points(scenario: ScenarioSpec):
    pts = []
    for b in scenario.boxes:
        xs = (b.x0, 0.5 * (b.x0 + b.x1), b.x1)
        ys = (b.y0, 0.5 * (b.y0 + b.y1), b.y1)
        for x in xs:
            for y in ys:
                pts.append((x, y))
    for s in scenario.segments:
        length = math.hypot(s.x1 - s.x0, s.y1 - s.y0)
        n = max(2, int(length / 0.25) + 1)
        for k in range(n):
            t = k / (n - 1)
            pts.append((s.x0 + t * (s.x1 - s.x0), s.y0 + t * (s.y1 - s.y0)))
    return pts


_CELL_GROUND_CACHE: dict = {}


def _cell_ground_points(cam: CameraModel, grid_width: int, grid_height: int):
    """Ground-plane (x, y) under every cell center plus a visibility mask."""
    key = (cam.focal, cam.u0, cam.v0, cam.height, cam.pitch,
           cam.image_width, cam.image_height, grid_width, grid_height)
    if key not in _CELL_GROUND_CACHE:
        gx = np.zeros((grid_height, grid_width))
        gy = np.zeros((grid_height, grid_width))
        valid = np.zeros((grid_height, grid_width), dtype=bool)
        for i in range(grid_height):
            v = (i + 0.5) / grid_height * cam.image_height
            for j in range(grid_width):
                u = (j + 0.5) / grid_width * cam.image_width
                g = cam.unproject_image_to_ground(u, v)
                if g is not None:
                    gx[i, j], gy[i, j] = g
                    valid[i, j] = True
        _CELL_GROUND_CACHE[key] = (gx, gy, valid)
    return _CELL_GROUND_CACHE[key]


def synth_attention(state: WorldState, cam: CameraModel,
                    mode: AttentionMode = AttentionMode.PRETRAINED_LIKE,
                    grid_width: int = 32, grid_height: int = 24) -> AttentionMap:
    """Gaussian-blob attention over obstacles and pedestrians in image space.

    GROUND_TRUTH_SOCIAL additionally paints blobs along each pedestrian's
    constant-velocity extrapolation with linearly decaying peaks, marking where
    people are about to be rather than only where they are.
    """
    sources = []  # (x, y, peak) in robot frame
    for (ox, oy) in _obstacle_sample_points(state.scenario):
        rx, ry = to_robot_frame(state.robot, ox, oy)
        sources.append((rx, ry, 1.0))
    peds_rf = pedestrians_in_robot_frame(state)
    for (px, py, vx, vy) in peds_rf:
        sources.append((px, py, 1.0))
    if mode == AttentionMode.GROUND_TRUTH_SOCIAL:
        n_steps = int(SOCIAL_HORIZON / 0.25)
        for (px, py, vx, vy) in peds_rf:
            if math.hypot(vx, vy) < 1e-9:
                continue
            for k in range(1, n_steps + 1):
                t = k * 0.25
                peak = 1.0 + (SOCIAL_PEAK_END - 1.0) * (t / SOCIAL_HORIZON)
                sources.append((px + vx * t, py + vy * t, peak))

    raw = np.zeros((grid_height, grid_width))
    if sources:
        gx, gy, valid = _cell_ground_points(cam, grid_width, grid_height)
        src = np.array(sources)  # (S, 3)
        inv_two_sigma2 = 1.0 / (2.0 * BLOB_SIGMA * BLOB_SIGMA)
        d2 = ((gx[..., None] - src[:, 0]) ** 2 + (gy[..., None] - src[:, 1]) ** 2)
        raw = np.max(src[:, 2] * np.exp(-d2 * inv_two_sigma2), axis=-1)
        raw[~valid] = 0.0
    role = Role.PRETRAINED if mode == AttentionMode.PRETRAINED_LIKE else Role.SYNTHETIC
    return normalize(raw, role=role, frame=Frame.IMAGE)


# ---------------------------------------------------------------------------
# Rendering

SKY_TOP = (140, 170, 210)
SKY_BOTTOM = (200, 215, 230)
GROUND_NEAR = (96, 96, 92)
GROUND_FAR = (140, 140, 134)
BOX_COLOR = (150, 110, 70)
HIDDEN_BOX_COLOR = (110, 110, 110)
FENCE_COLOR = (90, 70, 50)
PED_PALETTE = [(200, 60, 60), (60, 120, 200), (200, 160, 50), (120, 60, 160),
               (60, 170, 120)]


def _project_unclipped(cam: CameraModel, x: float, y: float, z: float = 0.0):
    """Pinhole projection without image-bounds rejection; None behind camera."""
    st, ct = math.sin(cam.pitch), math.cos(cam.pitch)
    dxc = -y
    dyc = -(x) * st + (cam.height - z) * ct
    dzc = x * ct + (cam.height - z) * st
    if dzc <= 1e-6:
        return None
    return (cam.u0 + cam.focal * dxc / dzc, cam.v0 + cam.focal * dyc / dzc, dzc)


def render_frame(state: WorldState, cam: CameraModel, lighting: float | None = None):
    """Flat-shaded first-person frame from the robot's camera."""
    from PIL import Image, ImageDraw

    from .annotate import ImageFrame

    W, H = cam.image_width, cam.image_height
    horizon = int(round(cam.v0 - cam.focal * math.tan(cam.pitch)))
    horizon = min(max(horizon, 0), H - 1)
    rows = np.arange(H).reshape(-1, 1, 1)
    img = np.zeros((H, W, 3), dtype=np.float64)
    sky_t = np.clip(rows / max(horizon, 1), 0.0, 1.0)
    ground_t = np.clip((rows - horizon) / max(H - 1 - horizon, 1), 0.0, 1.0)
    sky = (1 - sky_t) * np.array(SKY_TOP) + sky_t * np.array(SKY_BOTTOM)
    ground = (1 - ground_t) * np.array(GROUND_FAR) + ground_t * np.array(GROUND_NEAR)
    img = np.broadcast_to(np.where(rows <= horizon, sky, ground), (H, W, 3)).copy()

    im = Image.fromarray(img.astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(im)

    # obstacles: filled footprint polygons, far to near for stable overlap
    items = []
    for b in state.scenario.boxes:
        corners = [(b.x0, b.y0), (b.x1, b.y0), (b.x1, b.y1), (b.x0, b.y1)]
        rf = [to_robot_frame(state.robot, cx, cy) for cx, cy in corners]
        depth = sum(c[0] for c in rf) / 4.0
        color = BOX_COLOR if b.lidar_visible else HIDDEN_BOX_COLOR
        items.append((depth, "poly", rf, b.height, color))
    for s in state.scenario.segments:
        a = to_robot_frame(state.robot, s.x0, s.y0)
        bb = to_robot_frame(state.robot, s.x1, s.y1)
        depth = 0.5 * (a[0] + bb[0])
        items.append((depth, "fence", [a, bb], 0.8, FENCE_COLOR))
    for idx, p in enumerate(state.pedestrians):
        rf = to_robot_frame(state.robot, p.x, p.y)
        items.append((rf[0], "ped", [rf], 0.0, PED_PALETTE[idx % len(PED_PALETTE)]))

    for depth, kind, pts, height, color in sorted(items, key=lambda it: -it[0]):
        if kind in ("poly", "fence"):
            base = [_project_unclipped(cam, x, y, 0.0) for (x, y) in pts]
            top = [_project_unclipped(cam, x, y, height) for (x, y) in pts]
            if any(p is None for p in base + top):
                continue
            poly = [(p[0], p[1]) for p in base] + [(p[0], p[1]) for p in reversed(top)]
            draw.polygon(poly, fill=color)
        else:
            (x, y) = pts[0]
            proj = _project_unclipped(cam, x, y, 0.0)
            if proj is None:
                continue
            u, v, depth_c = proj
            r_px = max(2.0, cam.focal * PED_RADIUS / depth_c)
            draw.ellipse([u - r_px, v - r_px, u + r_px, v + r_px], fill=color)

    out = np.asarray(im, dtype=np.float64)
    factor = state.scenario.lighting if lighting is None else lighting
    if factor != 1.0:
        out = np.clip(out * factor, 0.0, 255.0)
    return ImageFrame(out.astype(np.uint8), timestamp=state.t,
                      sequence_id=int(round(state.t * 1000)))


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class EpisodeResult:
    status: EpisodeStatus
    trajectory: list  # rows (t, x, y, theta, v, omega)
    time_to_goal: float | None
    min_clearance: float
    scenario: str
    policy: str
    seed: int
    tick_times: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "trajectory": [list(r) for r in self.trajectory],
            "time_to_goal": self.time_to_goal,
            "min_clearance": None if math.isinf(self.min_clearance) else self.min_clearance,
            "scenario": self.scenario,
            "policy": self.policy,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeResult":
        mc = d.get("min_clearance")
        return EpisodeResult(
            status=EpisodeStatus(d["status"]),
            trajectory=[tuple(r) for r in d["trajectory"]],
            time_to_goal=d.get("time_to_goal"),
            min_clearance=math.inf if mc is None else mc,
            scenario=d.get("scenario", ""),
            policy=d.get("policy", ""),
            seed=d.get("seed", 0),
        )

    def write_trajectory_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "x", "y", "theta", "v", "omega"])
            for row in self.trajectory:
                w.writerow([f"{val:.9f}" for val in row])

    def xy_polyline(self):
        return [(r[1], r[2]) for r in self.trajectory]


def read_trajectory_csv(path):
    """Rows of (t, x, y, theta, v, omega) from a simulator/teleop CSV."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for rec in reader:
            rows.append((float(rec["t"]), float(rec["x"]), float(rec["y"]),
                         float(rec["theta"]), float(rec["v"]), float(rec["omega"])))
    return rows


def _build_policy_map(policy: str, state: WorldState, cam: CameraModel,
                      model, frame_buffer):
    """Attention map for one control tick, or None for map-free policies."""
    if policy == "goal_only":
        return None
    if policy.startswith("synth:"):
        return synth_attention(state, cam, AttentionMode(policy.split(":", 1)[1]))
    if policy.startswith("vilad:"):
        frame = render_frame(state, cam)
        frame_buffer.append(frame)
        need = model.config.n_history + 1
        while len(frame_buffer) < need:
            frame_buffer.insert(0, frame_buffer[0])
        del frame_buffer[:-need]
        return model.forward(frame_buffer[-need:])
    raise ValueError(f"unknown policy {policy!r}")


def run_episode(scenario: ScenarioSpec, policy: str, cfg: PlannerConfig | None = None,
                seed: int = 0, teleop_source=None, jitter: bool = True) -> EpisodeResult:
    """Closed loop of sense -> attention map -> plan -> step until termination.

    policy: goal_only | synth:pretrained_like | synth:ground_truth_social |
    vilad:<model.vlad> | teleop (with teleop_source(t) -> (v, omega)).
    """
    cfg = cfg or PlannerConfig(social_threshold=EPISODE_SOCIAL_THRESHOLD)
    scen = jitter_scenario(scenario, seed) if jitter and scenario.pedestrians else scenario
    model = None
    if policy.startswith("vilad:"):
        from .distill import load_model

        model = load_model(policy.split(":", 1)[1])
    if policy == "goal_only":
        cfg = replace_planner_beta2(cfg, 0.0)
    occupancy = OccupancyGrid.from_scenario(scen)
    cam = default_camera()
    state = initial_state(scen)
    cmd = VelocityCommand(0.0, 0.0)
    trajectory = [(0.0, *state.robot, 0.0, 0.0)]
    min_clear = pedestrian_clearance(state)
    frame_buffer: list = []
    tick_times = []
    while state.status == EpisodeStatus.RUNNING:
        tick_start = time.perf_counter()
        if policy == "teleop":
            v, w = teleop_source(state.t)
            cmd = VelocityCommand(min(max(v, -cfg.v_max), cfg.v_max),
                                  min(max(w, -cfg.omega_max), cfg.omega_max))
        else:
            amap = _build_policy_map(policy, state, cam, model, frame_buffer)
            goal_rf = to_robot_frame(state.robot, *scen.goal)
            cmd, _ = plan(cmd, goal_rf, occupancy, amap, cam, cfg,
                          robot_pose=state.robot)
        tick_times.append(time.perf_counter() - tick_start)
        state = step(state, cmd, cfg.dt)
        trajectory.append((state.t, *state.robot, cmd.v, cmd.omega))
        min_clear = min(min_clear, pedestrian_clearance(state))
    ttg = state.t if state.status == EpisodeStatus.REACHED_GOAL else None
    return EpisodeResult(state.status, trajectory, ttg, min_clear,
                         scenario=scen.name, policy=policy, seed=seed,
                         tick_times=tick_times)


def replace_planner_beta2(cfg: PlannerConfig, beta2: float) -> PlannerConfig:
    import dataclasses

    return dataclasses.replace(cfg, beta2=beta2)
