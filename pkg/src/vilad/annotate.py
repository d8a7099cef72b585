"""Frontier-based scene annotation: mark left/center/right frontiers, score their
crowding likelihood with a pluggable oracle, and build supervision datasets."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costmap import AttentionMap, Frame, Role, grid_to_bytes, save_grid

FRONTIERS = ("left", "center", "right")
FRONTIER_COLORS = {"left": (220, 60, 60), "center": (60, 200, 60), "right": (60, 90, 220)}


class OracleError(RuntimeError):
    """Oracle reply could not be parsed; carries the raw reply text."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ImageFrame:
    """RGB frame as an H x W x 3 uint8 buffer with timing metadata."""

    pixels: np.ndarray
    timestamp: float = 0.0
    sequence_id: int = 0

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.uint8))
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"expected H x W x 3 RGB buffer, got shape {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FrontierAnnotation:
    """Independent crowding likelihoods per frontier (no sum-to-one constraint)."""

    p_left: float
    p_center: float
    p_right: float
    rationale: str = ""

    def __post_init__(self):
        for name, p in zip(FRONTIERS, self.as_tuple()):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"likelihood for {name} frontier must be in [0, 1], got {p}")

    def as_tuple(self):
        return (self.p_left, self.p_center, self.p_right)


DEFAULT_SYSTEM_TEXT = (
    "You are assisting a ground robot navigating among pedestrians. "
    "Reason step by step about where people are and where they are heading "
    "before giving your final answer."
)
DEFAULT_USER_TEXT = (
    "The image shows the robot's forward camera view with three highlighted "
    "regions: the left frontier (red), the center frontier (green), and the "
    "right frontier (blue). {context}"
    "For each frontier, estimate the likelihood (0 to 1) that it will become "
    "crowded with people within the next few seconds."
)
DEFAULT_SCHEMA_TEXT = (
    'Answer with a JSON object of the form {"left": <0..1>, "center": <0..1>, "right": <0..1>}.'
)


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str = DEFAULT_SYSTEM_TEXT
    user_text: str = DEFAULT_USER_TEXT
    schema_text: str = DEFAULT_SCHEMA_TEXT

    def render(self, context: str = "") -> str:
        if context and not context.endswith(" "):
            context += " "
        prompt = self.user_text.format(context=context) + "\n" + self.schema_text
        # one reference per frontier in the instruction body (the schema line
        # restates the keys, which is excluded from the count)
        body = self.user_text.format(context=context)
        refs = sum(body.count(f"{name} frontier") for name in FRONTIERS)
        if refs != 3:
            raise ValueError(f"rendered prompt must reference each frontier exactly once, found {refs}")
        return prompt


def frontier_bands(width: int, height: int):
    """Three vertical bands over the lower image half, left to right.

    Returns [(col_start, col_end, row_start, row_end)]. Columns partition
    [0, width) exactly; the leftmost bands absorb the division remainder.
    """
    if width < 3 or height < 2:
        raise ValueError(f"image too small to mark frontiers: {width}x{height}")
    base, rem = divmod(width, 3)
    widths = [base + (1 if k < rem else 0) for k in range(3)]
    row0, row1 = height // 2, height
    bands = []
    col = 0
    for w in widths:
        bands.append((col, col + w, row0, row1))
        col += w
    return bands


def mark_frontiers(frame: ImageFrame):
    """Overlay colored frontier rectangles; returns (annotated frame, bands)."""
    bands = frontier_bands(frame.width, frame.height)
    pixels = frame.pixels.copy()
    thickness = max(1, min(frame.width, frame.height) // 100)
    for (c0, c1, r0, r1), name in zip(bands, FRONTIERS):
        color = FRONTIER_COLORS[name]
        pixels[r0:r0 + thickness, c0:c1] = color
        pixels[r1 - thickness:r1, c0:c1] = color
        pixels[r0:r1, c0:c0 + thickness] = color
        pixels[r0:r1, c1 - thickness:c1] = color
    return ImageFrame(pixels, frame.timestamp, frame.sequence_id), bands


def likelihood_to_map(ann: FrontierAnnotation, grid_width: int, grid_height: int) -> AttentionMap:
    """Paint per-frontier likelihoods into the lower half of a supervision grid."""
    if grid_width < 3:
        raise ValueError(f"grid width must be >= 3, got {grid_width}")
    values = np.zeros((grid_height, grid_width), dtype=np.float32)
    for (c0, c1, r0, r1), p in zip(frontier_bands(grid_width, grid_height), ann.as_tuple()):
        values[r0:r1, c0:c1] = p
    return AttentionMap(values, role=Role.VLM, frame=Frame.IMAGE)


# ---------------------------------------------------------------------------
# Oracles

MOCK_HORIZON = 3.0
MOCK_WEIGHT = 0.5


class MockOracle:
    """Deterministic stand-in scored from simulator ground truth.

    Each pedestrian is extrapolated at constant velocity over a fixed horizon;
    if the extrapolated position falls inside a frontier's ground wedge (an
    angular third of the camera's horizontal field of view), it contributes a
    fixed weight to that frontier's likelihood.
    """

    name = "mock"

    def __init__(self, horizon: float = MOCK_HORIZON, weight: float = MOCK_WEIGHT,
                 noise_sigma: float = 0.0, rng: np.random.Generator | None = None):
        self.horizon = horizon
        self.weight = weight
        self.noise_sigma = noise_sigma
        self.rng = rng

    def annotate(self, pedestrians, camera) -> FrontierAnnotation:
        """pedestrians: iterable of (x, y, vx, vy) in the robot frame."""
        half_fov = math.atan2(camera.image_width / 2.0, camera.focal)
        scores = {name: 0.0 for name in FRONTIERS}
        for (x, y, vx, vy) in pedestrians:
            fx = x + vx * self.horizon
            fy = y + vy * self.horizon
            if fx <= 0.0:
                continue
            bearing = math.atan2(fy, fx)
            if abs(bearing) > half_fov:
                continue
            if bearing > half_fov / 3.0:
                scores["left"] += self.weight
            elif bearing < -half_fov / 3.0:
                scores["right"] += self.weight
            else:
                scores["center"] += self.weight
        vals = [min(scores[n], 1.0) for n in FRONTIERS]
        if self.noise_sigma > 0.0 and self.rng is not None:
            vals = [min(max(v + self.rng.normal(0.0, self.noise_sigma), 0.0), 1.0) for v in vals]
        return FrontierAnnotation(*vals, rationale="mock constant-velocity extrapolation")


STRICT_REPROMPT = (
    "Your previous reply could not be parsed. Reply with ONLY the JSON object "
    '{"left": <0..1>, "center": <0..1>, "right": <0..1>} and nothing else.'
)


def parse_likelihood_reply(text: str) -> FrontierAnnotation:
    """Extract the {left, center, right} JSON block from a free-form reply."""
    for match in re.finditer(r"\{[^{}]*\}", text):
        try:
            obj = json.loads(match.group(0))
        except json.JSONDecodeError:
            continue
        if not all(k in obj for k in FRONTIERS):
            continue
        try:
            return FrontierAnnotation(
                float(obj["left"]), float(obj["center"]), float(obj["right"]),
                rationale=str(obj.get("rationale", "")),
            )
        except (TypeError, ValueError):
            continue
    raise OracleError("no parseable likelihood JSON block in reply", raw_reply=text)


class RemoteOracle:
    """Chat-completions-style HTTP oracle (OpenAI-compatible request shape)."""

    name = "remote"

    def __init__(self, endpoint: str, model: str, api_key: str,
                 template: PromptTemplate | None = None, max_retries: int = 3,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.template = template or PromptTemplate()
        self.max_retries = max_retries
        self.timeout = timeout

    def annotate_frame(self, frame: ImageFrame, context: str = "") -> FrontierAnnotation:
        import base64
        import io

        import requests
        from PIL import Image

        marked, _ = mark_frontiers(frame)
        buf = io.BytesIO()
        Image.fromarray(np.asarray(marked.pixels), mode="RGB").save(buf, format="PNG")
        image_b64 = base64.b64encode(buf.getvalue()).decode("ascii")

        prompt = self.template.render(context)
        last_reply = ""
        for attempt in range(self.max_retries):
            user_text = prompt if attempt == 0 else prompt + "\n" + STRICT_REPROMPT
            payload = {
                "model": self.model,
                "messages": [
                    {"role": "system", "content": self.template.system_text},
                    {"role": "user", "content": [
                        {"type": "text", "text": user_text},
                        {"type": "image_url",
                         "image_url": {"url": f"data:image/png;base64,{image_b64}"}},
                    ]},
                ],
            }
            try:
                resp = requests.post(
                    self.endpoint, json=payload, timeout=self.timeout,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                )
                resp.raise_for_status()
                last_reply = resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as e:
                raise TransportError(f"oracle endpoint failure: {e}") from e
            try:
                return parse_likelihood_reply(last_reply)
            except OracleError:
                continue
        raise OracleError(
            f"unparseable oracle reply after {self.max_retries} attempts", raw_reply=last_reply
        )


# ---------------------------------------------------------------------------
# Dataset builder


@dataclass
class DatasetRecord:
    record_id: str
    frame_path: str
    history_paths: list
    annotation: FrontierAnnotation
    map_path: str
    pretrained_map_path: str
    map_sha256: str
    pretrained_map_sha256: str


def _save_png(frame: ImageFrame, path: Path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(frame.pixels), mode="RGB").save(path, format="PNG")


def build_dataset(scenario, oracle, n_history: int, count: int, out_dir,
                  grid_width: int = 32, grid_height: int = 24,
                  control_dt: float = 0.1, stride: int = 2) -> dict:
    """Replay a scenario with a stationary robot and write a supervision dataset.

    Layout: <out>/index.json, <out>/frames/<id>.png, <out>/maps/<id>.agrid
    (VLM supervision) and <out>/maps/<id>_pre.agrid (pretrained-style target).
    """
    from . import sim

    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(parents=True, exist_ok=True)

    cam = sim.default_camera()
    state = sim.initial_state(scenario)
    frames: list[ImageFrame] = []
    records = []
    tick = 0
    while len(records) < count:
        frame = sim.render_frame(state, cam, lighting=scenario.lighting)
        frames.append(frame)
        if len(frames) > n_history and (len(frames) - n_history - 1) % stride == 0:
            rid = f"{tick:05d}"
            frame_path = out / "frames" / f"{rid}.png"
            _save_png(frame, frame_path)
            history_paths = []
            for k in range(n_history):
                h_frame = frames[-1 - n_history + k]
                h_path = out / "frames" / f"{rid}_h{k}.png"
                _save_png(h_frame, h_path)
                history_paths.append(str(h_path.relative_to(out)))

            peds = sim.pedestrians_in_robot_frame(state)
            ann = oracle.annotate(peds, cam)
            vlm_map = likelihood_to_map(ann, grid_width, grid_height)
            pre_map = sim.synth_attention(state, cam, mode=sim.AttentionMode.PRETRAINED_LIKE,
                                          grid_width=grid_width, grid_height=grid_height)
            map_path = out / "maps" / f"{rid}.agrid"
            pre_path = out / "maps" / f"{rid}_pre.agrid"
            save_grid(vlm_map, map_path)
            save_grid(pre_map, pre_path)
            records.append(DatasetRecord(
                record_id=rid,
                frame_path=str(frame_path.relative_to(out)),
                history_paths=history_paths,
                annotation=ann,
                map_path=str(map_path.relative_to(out)),
                pretrained_map_path=str(pre_path.relative_to(out)),
                map_sha256=hashlib.sha256(grid_to_bytes(vlm_map)).hexdigest(),
                pretrained_map_sha256=hashlib.sha256(grid_to_bytes(pre_map)).hexdigest(),
            ))
        # passive replay: the robot stays put and observes the scene evolve
        state = sim.step(state, sim.VelocityCommand(0.0, 0.0), control_dt,
                         check_goal=False, check_collision=False, check_timeout=False)
        tick += 1

    index = {
        "oracle": oracle.name,
        "n_history": n_history,
        "grid": [grid_height, grid_width],
        "scenario": scenario.name,
        "records": [
            {
                "id": r.record_id,
                "frame": r.frame_path,
                "history": r.history_paths,
                "annotation": {
                    "left": r.annotation.p_left,
                    "center": r.annotation.p_center,
                    "right": r.annotation.p_right,
                },
                "map": r.map_path,
                "pretrained_map": r.pretrained_map_path,
                "sha256": {"map": r.map_sha256, "pretrained_map": r.pretrained_map_sha256},
            }
            for r in records
        ],
    }
    with open(out / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return index


def build_dataset_from_dir(image_dir, oracle, n_history: int, count: int, out_dir,
                           grid_width: int = 32, grid_height: int = 24) -> dict:
    """Annotate an existing image directory (remote oracle only; the mock needs
    simulator ground truth)."""
    from PIL import Image

    if isinstance(oracle, MockOracle):
        raise ValueError("the mock oracle requires scenario ground truth; use --source <scenario.json>")

    paths = sorted(Path(image_dir).glob("*.png"))
    if len(paths) < count + n_history:
        raise ValueError(
            f"need at least {count + n_history} frames, directory holds {len(paths)}"
        )
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    records = []
    for m in range(count):
        idx = n_history + m
        frame = ImageFrame(np.asarray(Image.open(paths[idx]).convert("RGB")), timestamp=float(idx),
                           sequence_id=idx)
        rid = f"{idx:05d}"
        frame_path = out / "frames" / f"{rid}.png"
        _save_png(frame, frame_path)
        history_paths = []
        for k in range(n_history):
            h = ImageFrame(np.asarray(Image.open(paths[idx - n_history + k]).convert("RGB")))
            h_path = out / "frames" / f"{rid}_h{k}.png"
            _save_png(h, h_path)
            history_paths.append(str(h_path.relative_to(out)))
        ann = oracle.annotate_frame(frame)
        vlm_map = likelihood_to_map(ann, grid_width, grid_height)
        map_path = out / "maps" / f"{rid}.agrid"
        save_grid(vlm_map, map_path)
        records.append({
            "id": rid,
            "frame": str(frame_path.relative_to(out)),
            "history": history_paths,
            "annotation": {"left": ann.p_left, "center": ann.p_center, "right": ann.p_right},
            "map": str(map_path.relative_to(out)),
            "sha256": {"map": hashlib.sha256(grid_to_bytes(vlm_map)).hexdigest()},
        })
    index = {
        "oracle": oracle.name,
        "n_history": n_history,
        "grid": [grid_height, grid_width],
        "scenario": str(image_dir),
        "records": records,
    }
    with open(out / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return index
