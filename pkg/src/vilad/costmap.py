"""Attention/cost grids: normalization, camera projection, sampling, serialization."""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

AGRID_MAGIC = b"AGRD"
AGRID_VERSION = 1
AGRID_HEADER_SIZE = 4 + 2 + 1 + 1 + 4 + 4  # magic, version, role, frame, width, height


class GridFormatError(ValueError):
    """Malformed .agrid payload; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EmptyTrajectoryError(ValueError):
    pass


class Role(enum.IntEnum):
    PRETRAINED = 0
    VLM = 1
    DISTILLED = 2
    SYNTHETIC = 3


class Frame(enum.IntEnum):
    IMAGE = 0
    GROUND = 1


@dataclass(frozen=True)
class CostmapIndex:
    i: int  # row
    j: int  # column


@dataclass(frozen=True)
class AttentionMap:
    """Immutable H x W grid of values in [0, 1].

    Values are stored as float32 so that .agrid serialization round-trips
    bit-exactly.
    """

    values: np.ndarray
    role: Role = Role.SYNTHETIC
    frame: Frame = Frame.IMAGE

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"attention map must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("attention map values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("attention map values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def at(self, idx: CostmapIndex) -> float:
        if not (0 <= idx.i < self.height and 0 <= idx.j < self.width):
            raise IndexError(f"cell ({idx.i}, {idx.j}) out of bounds for {self.height}x{self.width} map")
        return float(self.values[idx.i, idx.j])

    def with_role(self, role: Role) -> "AttentionMap":
        return AttentionMap(self.values, role=role, frame=self.frame)


def normalize(raw, role: Role = Role.SYNTHETIC, frame: Frame = Frame.IMAGE) -> AttentionMap:
    """Min-max normalize an unbounded real grid into [0, 1].

    Constant grids (no spread) map to all-zeros: uniform attention carries
    no preference and must not inflate trajectory costs.
    """
    g = np.asarray(raw, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {g.shape}")
    lo = g.min()
    hi = g.max()
    if hi - lo == 0.0:
        out = np.zeros_like(g)
    else:
        out = (g - lo) / (hi - lo)
    # float32 rounding can nudge values a hair past 1.0; clip before construction
    return AttentionMap(np.clip(out, 0.0, 1.0), role=role, frame=frame)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera on the robot: at height h over flat ground, pitched down.

    Robot frame: x forward, y left, z up. Camera sits at (0, 0, height),
    zero roll and yaw, optical axis pitched down by `pitch` radians.
    Image u grows rightward, v grows downward.
    """

    focal: float
    u0: float
    v0: float
    height: float
    pitch: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        if self.height <= 0:
            raise ValueError("camera height must be positive")
        if not (0.0 < self.pitch < math.pi / 2):
            raise ValueError("pitch must lie in (0, pi/2) so the ground plane is visible")

    @cached_property
    def _pitch_trig(self):
        # the planner projects thousands of poses per tick; the model is frozen
        # so sin/cos of the pitch never change
        return (math.sin(self.pitch), math.cos(self.pitch))

    def project_ground_to_image(self, x: float, y: float):
        """Project ground point (x, y, 0) to pixel (u, v), or None if out of view."""
        st, ct = self._pitch_trig
        # camera-frame coordinates of the ray to (x, y, 0) from (0, 0, h)
        xc = -y
        yc = -x * st + self.height * ct
        zc = x * ct + self.height * st
        if zc <= 1e-9:
            return None
        u = self.u0 + self.focal * xc / zc
        v = self.v0 + self.focal * yc / zc
        if not (0.0 <= u < self.image_width and 0.0 <= v < self.image_height):
            return None
        return (u, v)

    def unproject_image_to_ground(self, u: float, v: float):
        """Cast pixel (u, v) onto the ground plane; None if the ray never lands."""
        st, ct = self._pitch_trig
        # ray direction in camera frame
        xc = (u - self.u0) / self.focal
        yc = (v - self.v0) / self.focal
        # rotate to robot frame: columns are camera axes expressed in robot frame
        dx = -yc * st + ct
        dy = -xc
        dz = -yc * ct - st
        if dz >= -1e-12:
            return None  # ray parallel to or away from the ground
        t = self.height / -dz
        return (t * dx, t * dy)

    def project_ground_near_clamped(self, x: float, y: float):
        """Like project_ground_to_image, but ground points that fall below the
        bottom image edge (too close to the robot to be seen) clamp to the
        bottom row instead of dropping out of view. Lateral and beyond-horizon
        misses still return None."""
        st, ct = self._pitch_trig
        xc = -y
        yc = -x * st + self.height * ct
        zc = x * ct + self.height * st
        if zc <= 1e-9:
            return None
        u = self.u0 + self.focal * xc / zc
        v = self.v0 + self.focal * yc / zc
        if not (0.0 <= u < self.image_width) or v < 0.0:
            return None
        return (u, min(v, self.image_height - 1e-6))

    def pixel_to_cell(self, u: float, v: float, map_height: int, map_width: int) -> CostmapIndex:
        j = min(int(u / self.image_width * map_width), map_width - 1)
        i = min(int(v / self.image_height * map_height), map_height - 1)
        return CostmapIndex(i, j)

    def project_ground_to_cell(self, x: float, y: float, map_height: int, map_width: int):
        px = self.project_ground_to_image(x, y)
        if px is None:
            return None
        return self.pixel_to_cell(px[0], px[1], map_height, map_width)


# Metric extent convention for Frame.GROUND maps: rows span x in [0, GROUND_X_MAX]
# forward (row 0 = far edge), columns span y in [-GROUND_Y_HALF, GROUND_Y_HALF]
# (column 0 = left edge, y = +GROUND_Y_HALF).
GROUND_X_MAX = 10.0
GROUND_Y_HALF = 5.0


def ground_point_to_cell(m: AttentionMap, x: float, y: float):
    """Map a robot-frame ground point into a Frame.GROUND map cell, or None."""
    if not (0.0 <= x < GROUND_X_MAX) or not (-GROUND_Y_HALF <= y < GROUND_Y_HALF):
        return None
    i = min(int((GROUND_X_MAX - x) / GROUND_X_MAX * m.height), m.height - 1)
    j = min(int((GROUND_Y_HALF - y) / (2 * GROUND_Y_HALF) * m.width), m.width - 1)
    return CostmapIndex(i, j)


def sample_max_along(m: AttentionMap, cells) -> float:
    """Max map value over a list of cells (the trajectory social-cost kernel)."""
    cells = list(cells)
    if not cells:
        raise EmptyTrajectoryError("cannot sample along an empty cell list")
    vals = m.values
    h, w = vals.shape
    best = 0.0
    for c in cells:
        if not (0 <= c.i < h and 0 <= c.j < w):
            raise IndexError(f"cell ({c.i}, {c.j}) out of bounds for {h}x{w} map")
        v = vals[c.i, c.j]
        if v > best:
            best = v
    return float(best)


def save_grid(m: AttentionMap, path) -> None:
    with open(path, "wb") as f:
        f.write(grid_to_bytes(m))


def grid_to_bytes(m: AttentionMap) -> bytes:
    header = AGRID_MAGIC + struct.pack(
        "<HBBII", AGRID_VERSION, int(m.role), int(m.frame), m.width, m.height
    )
    return header + m.values.astype("<f4").tobytes(order="C")


def load_grid(path) -> AttentionMap:
    with open(path, "rb") as f:
        return grid_from_bytes(f.read())


def grid_from_bytes(data: bytes) -> AttentionMap:
    if len(data) < AGRID_HEADER_SIZE:
        raise GridFormatError("truncated header", len(data))
    if data[:4] != AGRID_MAGIC:
        raise GridFormatError("bad magic bytes", 0)
    version, role, frame, width, height = struct.unpack("<HBBII", data[4:AGRID_HEADER_SIZE])
    if version != AGRID_VERSION:
        raise GridFormatError(f"unsupported format version {version}", 4)
    try:
        role = Role(role)
    except ValueError:
        raise GridFormatError(f"unknown role {role}", 6) from None
    try:
        frame = Frame(frame)
    except ValueError:
        raise GridFormatError(f"unknown frame {frame}", 7) from None
    if width < 1 or height < 1:
        raise GridFormatError("degenerate dimensions", 8)
    expected = AGRID_HEADER_SIZE + 4 * width * height
    if len(data) != expected:
        raise GridFormatError(
            f"payload length {len(data)} != expected {expected}", min(len(data), expected)
        )
    values = np.frombuffer(data[AGRID_HEADER_SIZE:], dtype="<f4").reshape(height, width)
    bad = np.flatnonzero(~((values >= 0.0) & (values <= 1.0)))
    if bad.size:
        raise GridFormatError(
            f"value {values.flat[bad[0]]} outside [0, 1]", AGRID_HEADER_SIZE + 4 * int(bad[0])
        )
    return AttentionMap(values, role=role, frame=frame)


def jet_color(v: float):
    """Classic jet colormap (piecewise-linear ramps), v in [0, 1] -> RGB floats."""

    def ramp(x):
        return min(max(x, 0.0), 1.0)

    r = ramp(1.5 - abs(4.0 * v - 3.0))
    g = ramp(1.5 - abs(4.0 * v - 2.0))
    b = ramp(1.5 - abs(4.0 * v - 1.0))
    return (r, g, b)


def render_jet(m: AttentionMap) -> np.ndarray:
    """Render a map to an H x W x 3 uint8 buffer with the jet colormap."""
    v = m.values.astype(np.float64)
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    img = np.stack([r, g, b], axis=-1)
    return np.round(img * 255.0).astype(np.uint8)


def save_jet_png(m: AttentionMap, path) -> None:
    from PIL import Image

    Image.fromarray(render_jet(m), mode="RGB").save(path, format="PNG")
