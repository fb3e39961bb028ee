"""Choose reference waypoints along the planned path and size crops around them.

Crop ``j`` (1-based) is ``alpha / j`` of the image in each dimension, is
centred horizontally on the projected waypoint and is lifted upward by
``v_lift`` half-heights so that vehicles standing on the road surface fall
inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from foveadet.errors import BehindCameraError, PathError
from foveadet.frames import (
    CameraModel,
    PixelPoint,
    RigidTransform,
    WorldPoint,
    camera_origin_in_world,
    chain_transform,
    project_to_image,
    world_to_camera,
)
from foveadet.records import FrameRecord

# absorbs float error in alpha * size (0.6 * 1280 is not exactly 768.0 in binary)
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class Path:
    waypoints: tuple[WorldPoint, ...]
    nominal_spacing: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise PathError(f"a path needs at least 2 waypoints, got {len(self.waypoints)}")
        if self.nominal_spacing <= 0:
            raise PathError("nominal spacing must be positive")
        gaps = self.segment_lengths()
        lo, hi = 0.8 * self.nominal_spacing, 1.2 * self.nominal_spacing
        bad = np.flatnonzero((gaps < lo) | (gaps > hi))
        if bad.size:
            i = int(bad[0])
            raise PathError(
                f"waypoint gap {gaps[i]:.3f} m between #{i} and #{i + 1} is outside "
                f"{self.nominal_spacing} m +/- 20%"
            )

    def as_array(self) -> np.ndarray:
        return np.array([[w.x, w.y, w.z] for w in self.waypoints], dtype=np.float64)

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.as_array(), axis=0), axis=1)


@dataclass(frozen=True)
class CropPlanConfig:
    n: int = 5
    d: float = 25.0
    alpha: float = 0.6
    v_lift: float = 1.5
    min_crop_px: int = 16

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not self.d > 0:
            raise ValueError("d must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.v_lift < 1:
            raise ValueError("v_lift must be >= 1")
        if self.min_crop_px < 1:
            raise ValueError("min_crop_px must be >= 1")


@dataclass(frozen=True)
class CropSpec:
    """Crop rectangle ``j`` with top-left ``(c_u, c_v)`` and size ``(c_w, c_h)``.

    Coordinates are fractional straight out of :func:`place_crop` and integral
    after :func:`clamp_crop`. ``j == 0`` denotes the whole image.
    """

    j: int
    c_u: float
    c_v: float
    c_w: float
    c_h: float
    anchor: PixelPoint | None = None

    def __post_init__(self) -> None:
        if self.j < 0:
            raise ValueError("crop index must be >= 0")
        if self.c_w < 1 or self.c_h < 1:
            raise ValueError(f"crop sides must be >= 1, got {self.c_w}x{self.c_h}")

    @classmethod
    def whole_image(cls, cam: CameraModel) -> CropSpec:
        return cls(0, 0, 0, cam.width_px, cam.height_px)

    def to_dict(self) -> dict:
        anchor = self.anchor
        return {
            "j": self.j,
            "u": self.c_u,
            "v": self.c_v,
            "w": self.c_w,
            "h": self.c_h,
            "anchor_u": None if anchor is None else anchor.u,
            "anchor_v": None if anchor is None else anchor.v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CropSpec:
        anchor = None
        if d.get("anchor_u") is not None:
            anchor = PixelPoint(d["anchor_u"], d["anchor_v"])
        return cls(d["j"], d["u"], d["v"], d["w"], d["h"], anchor)


def _nearest_index(pts: np.ndarray, origin: WorldPoint) -> int:
    return int(np.argmin(np.linalg.norm(pts - origin.as_array(), axis=1)))


def select_reference_waypoints(path: Path, cfg: CropPlanConfig, cam_origin: WorldPoint) -> list[WorldPoint]:
    """Waypoints at arc length ``d, 2d, ..., n*d`` past the one nearest the camera.

    Arc length is accumulated along the waypoint chain. Fewer than ``n``
    points come back when the path ends early.
    """
    if path is None or not path.waypoints:
        raise PathError("empty path")
    if cfg.n == 0:
        return []
    pts = path.as_array()
    start = _nearest_index(pts, cam_origin)
    arc = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(pts[start:], axis=0), axis=1))))
    picked = []
    for j in range(1, cfg.n + 1):
        target = j * cfg.d
        k = int(np.searchsorted(arc, target - 1e-9, side="left"))
        if k >= len(arc):
            break
        picked.append(path.waypoints[start + k])
    return picked


def crop_size(j: int, cam: CameraModel, cfg: CropPlanConfig) -> tuple[int, int]:
    if j < 1:
        raise ValueError("crop index starts at 1")
    w = math.floor(cfg.alpha * cam.width_px / j + _FLOOR_EPS)
    h = math.floor(cfg.alpha * cam.height_px / j + _FLOOR_EPS)
    return max(w, 1), max(h, 1)


def place_crop(anchor: PixelPoint, size: tuple[float, float], cfg: CropPlanConfig, j: int = 1) -> CropSpec:
    c_w, c_h = size
    return CropSpec(j, anchor.u - c_w / 2, anchor.v - (c_h / 2) * cfg.v_lift, c_w, c_h, anchor)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def clamp_crop(c: CropSpec, cam: CameraModel, min_crop_px: int = 16) -> CropSpec | None:
    """Slide the crop fully inside the image without rescaling it.

    Sides larger than the image are clipped to it. Returns None when a side
    ends up below ``min_crop_px``.
    """
    w = min(int(math.floor(c.c_w)), cam.width_px)
    h = min(int(math.floor(c.c_h)), cam.height_px)
    if w < min_crop_px or h < min_crop_px:
        return None
    u = min(max(_round_half_up(c.c_u), 0), cam.width_px - w)
    v = min(max(_round_half_up(c.c_v), 0), cam.height_px - h)
    return CropSpec(c.j, u, v, w, h, c.anchor)


def plan_crops(
    frame: FrameRecord | Path,
    cam: CameraModel,
    chain: Sequence[RigidTransform] | RigidTransform,
    cfg: CropPlanConfig,
) -> list[CropSpec]:
    """Crop rectangles for one frame, largest (nearest) first.

    A waypoint that projects behind the camera or outside the image loses
    its crop; the surviving crops keep their original index ``j``.
    """
    if cfg.n == 0:
        return []
    path = frame if isinstance(frame, Path) else Path(frame.waypoints)
    w2c = chain if isinstance(chain, RigidTransform) else chain_transform(chain)
    origin = camera_origin_in_world(w2c)
    plan = []
    for j, wp in enumerate(select_reference_waypoints(path, cfg, origin), start=1):
        try:
            anchor = project_to_image(world_to_camera(w2c, wp), cam)
        except BehindCameraError:
            continue
        if not cam.contains(anchor):
            continue
        crop = clamp_crop(place_crop(anchor, crop_size(j, cam, cfg), cfg, j), cam, cfg.min_crop_px)
        if crop is not None:
            plan.append(crop)
    return plan
