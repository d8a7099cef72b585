"""Dynamic-window velocity planner: sample (v, w) commands reachable within one
control period, roll out unicycle arcs, and pick the command minimizing a
weighted blend of goal progress and attention-map social cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .costmap import (
    AttentionMap,
    CameraModel,
    Frame,
    ground_point_to_cell,
    sample_max_along,
)

ARC_OMEGA_EPS = 1e-6


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    omega: float


@dataclass(frozen=True)
class VelocityWindow:
    v_lo: float
    v_hi: float
    omega_lo: float
    omega_hi: float
    n_v: int
    n_omega: int

    def samples(self):
        out = []
        for a in range(self.n_v):
            v = self.v_lo if self.n_v == 1 else self.v_lo + (self.v_hi - self.v_lo) * a / (self.n_v - 1)
            for b in range(self.n_omega):
                w = (self.omega_lo if self.n_omega == 1
                     else self.omega_lo + (self.omega_hi - self.omega_lo) * b / (self.n_omega - 1))
                out.append(VelocityCommand(v, w))
        return out


@dataclass
class PlannerConfig:
    beta1: float = 1.0
    beta2: float = 2.0
    horizon: float = 2.0
    dt: float = 0.1
    v_max: float = 1.0
    omega_max: float = 1.5
    a_v: float = 1.0
    a_omega: float = 2.0
    robot_radius: float = 0.35
    goal_tolerance: float = 0.3
    n_v: int = 11
    n_omega: int = 21
    # candidates whose social cost reaches this value are treated as
    # collision-prone (the attention map is the only sensor that sees some
    # obstacles); None disables the filter
    social_threshold: float | None = None

    def __post_init__(self):
        if self.beta1 + self.beta2 <= 0:
            raise ValueError("beta1 + beta2 must be positive")
        if not (self.horizon >= self.dt > 0):
            raise ValueError("require horizon >= dt > 0")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float
    t: float


@dataclass
class Candidate:
    cmd: VelocityCommand
    trajectory: list
    goal_cost: float = 0.0
    social_cost: float = 0.0
    objective: float = 0.0


@dataclass
class PlanDiagnostics:
    candidates: list
    feasible_count: int
    recovery: bool


def wrap_angle(a: float) -> float:
    while a > math.pi:
        a -= 2.0 * math.pi
    while a < -math.pi:
        a += 2.0 * math.pi
    return a


def admissible_window(current: VelocityCommand, cfg: PlannerConfig) -> VelocityWindow:
    """Platform limits intersected with one-control-period reachability."""
    return VelocityWindow(
        v_lo=max(0.0, current.v - cfg.a_v * cfg.dt),
        v_hi=min(cfg.v_max, current.v + cfg.a_v * cfg.dt),
        omega_lo=max(-cfg.omega_max, current.omega - cfg.a_omega * cfg.dt),
        omega_hi=min(cfg.omega_max, current.omega + cfg.a_omega * cfg.dt),
        n_v=cfg.n_v,
        n_omega=cfg.n_omega,
    )


def arc_pose(v: float, omega: float, t: float):
    """Exact unicycle arc from the origin after time t."""
    if abs(omega) > ARC_OMEGA_EPS:
        r = v / omega
        return (r * math.sin(omega * t), r * (1.0 - math.cos(omega * t)), omega * t)
    return (v * t, 0.0, omega * t)


def rollout(cmd: VelocityCommand, cfg: PlannerConfig):
    """Robot-frame trajectory over the planning horizon, starting at the origin."""
    steps = max(1, int(round(cfg.horizon / cfg.dt)))
    dt = cfg.dt
    v, omega = cmd.v, cmd.omega
    poses = [Pose(0.0, 0.0, 0.0, 0.0)]
    append = poses.append
    # arc_pose unrolled with the arc/straight branch hoisted out of the loop;
    # the arithmetic is identical
    if abs(omega) > ARC_OMEGA_EPS:
        r = v / omega
        for k in range(1, steps + 1):
            t = k * dt
            th = omega * t
            append(Pose(r * math.sin(th), r * (1.0 - math.cos(th)), th, t))
    else:
        for k in range(1, steps + 1):
            t = k * dt
            append(Pose(v * t, 0.0, omega * t, t))
    return poses


def transform_to_world(poses, robot_pose):
    """Robot-frame poses -> world frame given the robot's world pose."""
    rx, ry, rth = robot_pose
    c, s = math.cos(rth), math.sin(rth)
    return [Pose(rx + c * p.x - s * p.y, ry + s * p.x + c * p.y,
                 wrap_angle(rth + p.theta), p.t) for p in poses]


def trajectory_collides(poses, occupancy, robot_pose, radius: float) -> bool:
    if occupancy is None:
        return False
    rx, ry, rth = robot_pose
    c, s = math.cos(rth), math.sin(rth)
    # same transform as transform_to_world, but headings are irrelevant to a
    # disc test so the poses are never materialized
    return occupancy.path_collides(
        ((rx + c * p.x - s * p.y, ry + s * p.x + c * p.y) for p in poses), radius)


def feasible_set(window: VelocityWindow, occupancy, cfg: PlannerConfig,
                 robot_pose=(0.0, 0.0, 0.0)):
    """Collision-free (command, trajectory) pairs over the sampled window."""
    out = []
    for cmd in window.samples():
        traj = rollout(cmd, cfg)
        if not trajectory_collides(traj, occupancy, robot_pose, cfg.robot_radius):
            out.append(Candidate(cmd, traj))
    return out


def goal_cost(traj, goal, cfg: PlannerConfig) -> float:
    """Blend of endpoint-heading misalignment and normalized remaining distance."""
    gx, gy = goal
    start_dist = math.hypot(gx, gy)
    if start_dist <= 1e-12:
        return 0.0
    end = traj[-1]
    end_dist = math.hypot(gx - end.x, gy - end.y)
    if end_dist <= 1e-9:
        return 0.0
    bearing = math.atan2(gy - end.y, gx - end.x)
    heading_term = abs(wrap_angle(bearing - end.theta)) / math.pi
    progress_term = min(max(end_dist / start_dist, 0.0), 1.0)
    return 0.5 * heading_term + 0.5 * progress_term


def trajectory_cells(traj, amap: AttentionMap, cam: CameraModel | None):
    """Project trajectory poses into map cells; out-of-view poses are skipped."""
    cells = []
    if amap.frame == Frame.IMAGE:
        if cam is None:
            raise ValueError("an image-frame attention map requires a camera model")
        project = cam.project_ground_near_clamped
        to_cell = cam.pixel_to_cell
        h, w = amap.height, amap.width
        for p in traj:
            # near-field poses below the image clamp to the bottom row so the
            # camera's blind strip inherits the nearest observed cost instead
            # of reading as free space
            px = project(p.x, p.y)
            if px is not None:
                cells.append(to_cell(px[0], px[1], h, w))
    else:
        for p in traj:
            cell = ground_point_to_cell(amap, p.x, p.y)
            if cell is not None:
                cells.append(cell)
    return cells


def social_cost(traj, amap: AttentionMap | None, cam: CameraModel | None) -> float:
    """Max attention value under the projected trajectory; 0 if nothing is in view."""
    if amap is None:
        return 0.0
    cells = trajectory_cells(traj, amap, cam)
    if not cells:
        return 0.0
    return sample_max_along(amap, cells)


def _better(challenger: Candidate, best: Candidate) -> bool:
    """Strict-improvement test with the deterministic tie-break chain:
    lower J, then smaller |omega|, then larger v, then smaller signed omega."""
    if challenger.objective != best.objective:
        return challenger.objective < best.objective
    ca, cb = challenger.cmd, best.cmd
    if abs(ca.omega) != abs(cb.omega):
        return abs(ca.omega) < abs(cb.omega)
    if ca.v != cb.v:
        return ca.v > cb.v
    return ca.omega < cb.omega


def _recovery(window: VelocityWindow, goal) -> VelocityCommand:
    """Rotate in place toward the goal bearing, decelerating as fast as allowed."""
    bearing = math.atan2(goal[1], goal[0])
    sign = 1.0 if bearing >= 0.0 else -1.0
    omega = min(max(sign * 1e9, window.omega_lo), window.omega_hi)
    return VelocityCommand(window.v_lo, omega)


def plan(current: VelocityCommand, goal, occupancy, amap, cam, cfg: PlannerConfig,
         robot_pose=(0.0, 0.0, 0.0)):
    """Argmin of J = beta1 * goal + beta2 * soc over the feasible set.

    goal is in the robot frame; occupancy (if any) is in the world frame with
    robot_pose giving the robot's world pose. Returns (command, diagnostics).
    """
    window = admissible_window(current, cfg)
    candidates = feasible_set(window, occupancy, cfg, robot_pose)
    if not candidates:
        return _recovery(window, goal), PlanDiagnostics([], 0, recovery=True)
    best = None
    for cand in candidates:
        cand.goal_cost = goal_cost(cand.trajectory, goal, cfg)
        cand.social_cost = social_cost(cand.trajectory, amap, cam)
        cand.objective = cfg.beta1 * cand.goal_cost + cfg.beta2 * cand.social_cost
        if cfg.social_threshold is not None and cand.social_cost >= cfg.social_threshold:
            continue
        if best is None or _better(cand, best):
            best = cand
    if best is None:
        return _recovery(window, goal), PlanDiagnostics(candidates, 0, recovery=True)
    return best.cmd, PlanDiagnostics(candidates, len(candidates), recovery=False)


def plan_brute_oracle(current: VelocityCommand, goal, occupancy, amap, cam,
                      cfg: PlannerConfig, robot_pose=(0.0, 0.0, 0.0)) -> VelocityCommand:
    """Exhaustive re-derivation of plan() with naive scans (test oracle)."""
    v_lo = max(0.0, current.v - cfg.a_v * cfg.dt)
    v_hi = min(cfg.v_max, current.v + cfg.a_v * cfg.dt)
    w_lo = max(-cfg.omega_max, current.omega - cfg.a_omega * cfg.dt)
    w_hi = min(cfg.omega_max, current.omega + cfg.a_omega * cfg.dt)
    steps = max(1, int(round(cfg.horizon / cfg.dt)))

    scored = []
    for a in range(cfg.n_v):
        v = v_lo if cfg.n_v == 1 else v_lo + (v_hi - v_lo) * a / (cfg.n_v - 1)
        for b in range(cfg.n_omega):
            w = w_lo if cfg.n_omega == 1 else w_lo + (w_hi - w_lo) * b / (cfg.n_omega - 1)
            poses = [(0.0, 0.0, 0.0, 0.0)]
            for k in range(1, steps + 1):
                t = k * cfg.dt
                if abs(w) > ARC_OMEGA_EPS:
                    r = v / w
                    poses.append((r * math.sin(w * t), r * (1.0 - math.cos(w * t)), w * t, t))
                else:
                    poses.append((v * t, 0.0, w * t, t))
            # collision scan
            collides = False
            if occupancy is not None:
                rx, ry, rth = robot_pose
                cth, sth = math.cos(rth), math.sin(rth)
                for (px, py, pth, pt) in poses:
                    wx = rx + cth * px - sth * py
                    wy = ry + sth * px + cth * py
                    if occupancy.disc_collides(wx, wy, cfg.robot_radius):
                        collides = True
                        break
            if collides:
                continue
            # goal cost
            gx, gy = goal
            start_dist = math.hypot(gx, gy)
            ex, ey, eth, _ = poses[-1]
            if start_dist <= 1e-12:
                g_cost = 0.0
            else:
                end_dist = math.hypot(gx - ex, gy - ey)
                if end_dist <= 1e-9:
                    g_cost = 0.0
                else:
                    bearing = math.atan2(gy - ey, gx - ex)
                    g_cost = (0.5 * abs(wrap_angle(bearing - eth)) / math.pi
                              + 0.5 * min(max(end_dist / start_dist, 0.0), 1.0))
            # social cost
            s_cost = 0.0
            if amap is not None:
                seen = False
                for (px, py, pth, pt) in poses:
                    if amap.frame == Frame.IMAGE:
                        hit = cam.project_ground_near_clamped(px, py)
                        cell = (None if hit is None
                                else cam.pixel_to_cell(hit[0], hit[1], amap.height, amap.width))
                    else:
                        cell = ground_point_to_cell(amap, px, py)
                    if cell is None:
                        continue
                    seen = True
                    s_cost = max(s_cost, amap.at(cell))
                if not seen:
                    s_cost = 0.0
            if cfg.social_threshold is not None and s_cost >= cfg.social_threshold:
                continue
            scored.append((cfg.beta1 * g_cost + cfg.beta2 * s_cost, v, w))

    if not scored:
        bearing = math.atan2(goal[1], goal[0])
        sign = 1.0 if bearing >= 0.0 else -1.0
        return VelocityCommand(v_lo, min(max(sign * 1e9, w_lo), w_hi))
    best = None
    for (j, v, w) in scored:
        if best is None:
            best = (j, v, w)
            continue
        bj, bv, bw = best
        if j < bj or (j == bj and (abs(w) < abs(bw)
                                   or (abs(w) == abs(bw) and (v > bv or (v == bv and w < bw))))):
            best = (j, v, w)
    return VelocityCommand(best[1], best[2])
