"""Evaluation metrics: success rate, time to goal, discrete Fréchet distance
against a human reference trajectory, and tabulated reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sim import EpisodeResult, EpisodeStatus

RESAMPLE_SPACING = 0.1


@dataclass(frozen=True)
class ReferenceTrajectory:
    points: tuple  # ((x, y), ...) in world frame
    timestamps: tuple
    provenance: str = "scripted"  # or "teleop_recording"

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("reference trajectory needs at least 2 points")
        ts = self.timestamps
        if any(b <= a for a, b in zip(ts[:-1], ts[1:])):
            raise ValueError("reference timestamps must be strictly increasing")

    @staticmethod
    def from_csv(path, provenance: str = "scripted") -> "ReferenceTrajectory":
        from .sim import read_trajectory_csv

        rows = read_trajectory_csv(path)
        return ReferenceTrajectory(
            points=tuple((r[1], r[2]) for r in rows),
            timestamps=tuple(r[0] for r in rows),
            provenance=provenance,
        )


@dataclass
class TrialSet:
    scenario_id: str
    policy_id: str
    trials: list

    def __post_init__(self):
        for t in self.trials:
            if t.scenario != self.scenario_id or t.policy != self.policy_id:
                raise ValueError(
                    f"trial ({t.scenario}, {t.policy}) does not belong to "
                    f"set ({self.scenario_id}, {self.policy_id})"
                )


def success_rate(trials) -> float:
    """Percentage of trials that reached the goal."""
    trials = list(trials)
    if not trials:
        raise ValueError("success rate of an empty trial set is undefined")
    good = sum(1 for t in trials if t.status == EpisodeStatus.REACHED_GOAL)
    return 100.0 * good / len(trials)


def time_to_goal(trials):
    """Mean completion time over successful trials; None if nothing succeeded."""
    trials = list(trials)
    if not trials:
        raise ValueError("time to goal of an empty trial set is undefined")
    times = [t.time_to_goal for t in trials if t.status == EpisodeStatus.REACHED_GOAL]
    if not times:
        return None
    return sum(times) / len(times)


def frechet(a, b) -> float:
    """Discrete Fréchet distance between two 2D polylines (Euclidean metric)."""
    p = np.asarray(a, dtype=np.float64)
    q = np.asarray(b, dtype=np.float64)
    if p.ndim != 2 or q.ndim != 2 or len(p) < 2 or len(q) < 2:
        raise ValueError("both polylines need at least 2 points")
    dist = np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(axis=2))
    n, m = dist.shape
    ca = np.empty((n, m))
    ca[0, 0] = dist[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], dist[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], dist[i, 0])
        row_prev = ca[i - 1]
        row = ca[i]
        for j in range(1, m):
            row[j] = max(min(row_prev[j], row_prev[j - 1], row[j - 1]), dist[i, j])
    return float(ca[n - 1, m - 1])


def resample_polyline(points, spacing: float = RESAMPLE_SPACING):
    """Arc-length resampling at the given spacing (endpoints preserved)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("polyline needs at least 2 points")
    seg = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return pts[:2].copy()
    n = max(2, int(math.ceil(total / spacing)) + 1)
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, cum, pts[:, 0])
    out[:, 1] = np.interp(targets, cum, pts[:, 1])
    return out


def trajectory_similarity(trial_xy, reference: ReferenceTrajectory,
                          spacing: float = RESAMPLE_SPACING) -> float:
    """Discrete Fréchet after resampling both curves to a common arc spacing."""
    a = resample_polyline(trial_xy, spacing)
    b = resample_polyline(reference.points, spacing)
    return frechet(a, b)


def frechet_brute(a, b) -> float:
    """Exhaustive minimax over all monotone couplings (test oracle, tiny inputs)."""
    p = np.asarray(a, dtype=np.float64)
    q = np.asarray(b, dtype=np.float64)

    def d(i, j):
        return float(np.hypot(*(p[i] - q[j])))

    best = [math.inf]

    def walk(i, j, worst):
        worst = max(worst, d(i, j))
        if worst >= best[0]:
            return
        if i == len(p) - 1 and j == len(q) - 1:
            best[0] = worst
            return
        if i + 1 < len(p):
            walk(i + 1, j, worst)
        if j + 1 < len(q):
            walk(i, j + 1, worst)
        if i + 1 < len(p) and j + 1 < len(q):
            walk(i + 1, j + 1, worst)

    walk(0, 0, 0.0)
    return best[0]


# ---------------------------------------------------------------------------
# Reporting


@dataclass
class ReportRow:
    scenario: str
    policy: str
    success_rate: float
    time_to_goal: float | None
    frechet: float | None


def compute_report(sets, references) -> list:
    """One ReportRow per (scenario, policy). Fréchet is averaged over ALL
    trials, successful or not; a missing reference yields an empty cell."""
    rows = []
    for ts in sets:
        ref = references.get(ts.scenario_id)
        fr = None
        if ref is not None and ts.trials:
            vals = [trajectory_similarity(t.xy_polyline(), ref) for t in ts.trials]
            fr = sum(vals) / len(vals)
        rows.append(ReportRow(ts.scenario_id, ts.policy_id,
                              success_rate(ts.trials), time_to_goal(ts.trials), fr))
    return rows


def write_report_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "policy", "success_rate_pct", "time_to_goal_s",
                    "frechet_m"])
        for r in rows:
            w.writerow([
                r.scenario, r.policy, f"{r.success_rate:.9f}",
                "" if r.time_to_goal is None else f"{r.time_to_goal:.9f}",
                "" if r.frechet is None else f"{r.frechet:.9f}",
            ])


def read_report_csv(path) -> list:
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(ReportRow(
                rec["scenario"], rec["policy"], float(rec["success_rate_pct"]),
                float(rec["time_to_goal_s"]) if rec["time_to_goal_s"] else None,
                float(rec["frechet_m"]) if rec["frechet_m"] else None,
            ))
    return rows


def format_report_table(rows) -> str:
    header = ["Scenario", "Policy", "Success Rate (%) ^", "Time to Goal (s) v",
              "Frechet (m) v"]
    table = [header]
    for r in rows:
        table.append([
            r.scenario, r.policy, f"{r.success_rate:.1f}",
            "-" if r.time_to_goal is None else f"{r.time_to_goal:.1f}",
            "-" if r.frechet is None else f"{r.frechet:.3f}",
        ])
    widths = [max(len(row[k]) for row in table) for k in range(len(header))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def load_trial_sets(runs_dir) -> list:
    """Group EpisodeResult JSON files under runs_dir by (scenario, policy)."""
    import json

    groups: dict = {}
    order = []
    for path in sorted(Path(runs_dir).rglob("*.json")):
        with open(path) as f:
            d = json.load(f)
        if "status" not in d or "trajectory" not in d:
            continue
        res = EpisodeResult.from_dict(d)
        key = (res.scenario, res.policy)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(res)
    return [TrialSet(s, p, groups[(s, p)]) for (s, p) in order]
