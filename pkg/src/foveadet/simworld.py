"""Synthetic scenes: a planned path, parked cars and their ground-truth boxes.

No pixels are rendered. Each frame carries the vehicle pose, the next
``path_length`` metres of waypoints and the projected 2D boxes of every
visible car, which is all the synthetic detector needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from foveadet.boxes import Box2D
from foveadet.errors import ConfigError
from foveadet.frames import (
    BOARD,
    CAMERA,
    POSE,
    Calibration,
    CameraModel,
    RigidTransform,
    WorldPoint,
    chain_transform,
    project_points,
)
from foveadet.records import FrameRecord, GroundTruthBox, Pose

WAYPOINT_SPACING = 0.5
_NEAR_PLANE = 1e-3


def default_camera() -> CameraModel:
    """1280x768 pinhole camera with a 1000 px focal length."""
    return CameraModel(
        fx_m=3.75e-3, fy_m=3.75e-3, pixel_size_m=3.75e-6,
        ku_px=640.0, kv_px=384.0, width_px=1280, height_px=768,
    )


def default_calibration() -> Calibration:
    """Roof-mounted camera about 1.75 m above the ground."""
    return Calibration(
        camera=default_camera(),
        pose_to_board=RigidTransform.from_rpy((0, 0, 0), (-0.5, 0.0, -1.7), POSE, BOARD),
        board_to_camera=RigidTransform.from_rpy((0, 0, 0), (-0.2, 0.0, -0.05), BOARD, CAMERA),
    )


@dataclass(frozen=True)
class SceneCar:
    center: WorldPoint
    yaw: float = 0.0
    dims: tuple[float, float, float] = (4.5, 1.8, 1.5)

    def __post_init__(self) -> None:
        if any(not d > 0 for d in self.dims):
            raise ValueError("car dimensions must be positive")

    def corners(self) -> np.ndarray:
        """The 8 cuboid corners in world coordinates; ``center`` is the ground contact point."""
        length, width, height = self.dims
        xs = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * length / 2
        ys = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * width / 2
        zs = np.array([0, 1, 0, 1, 0, 1, 0, 1]) * height
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        wx = self.center.x + c * xs - s * ys
        wy = self.center.y + s * xs + c * ys
        wz = self.center.z + zs
        return np.stack([wx, wy, wz], axis=1)


@dataclass(frozen=True)
class SceneConfig:
    """Scene layout.

    ``car_ranges`` are arc lengths along the path from its start;
    ``lateral_offsets`` (metres, positive = left) are cycled over the cars.
    The vehicle advances ``step_m`` along the path per frame.
    """

    path_shape: str = "straight"
    arc_radius: float = 200.0
    path_length: float = 150.0
    car_ranges: tuple[float, ...] = (30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0)
    lateral_offsets: tuple[float, ...] = (0.0, 3.5, -3.5)
    frames: int = 200
    seed: int = 0
    step_m: float = 0.05
    range_jitter: float = 1.0
    lateral_jitter: float = 0.2
    yaw_jitter: float = 0.05
    car_dims: tuple[float, float, float] = (4.5, 1.8, 1.5)

    def __post_init__(self) -> None:
        object.__setattr__(self, "car_ranges", tuple(float(r) for r in self.car_ranges))
        object.__setattr__(self, "lateral_offsets", tuple(float(o) for o in self.lateral_offsets))
        object.__setattr__(self, "car_dims", tuple(float(d) for d in self.car_dims))
        if self.path_shape not in ("straight", "arc"):
            raise ConfigError(f"unknown path shape {self.path_shape!r}")
        if self.path_shape == "arc" and not self.arc_radius > 0:
            raise ConfigError("arc radius must be positive")
        if not self.path_length > 0:
            raise ConfigError("path_length must be positive")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.step_m < 0:
            raise ConfigError("step_m must be >= 0")
        if any(not 0 < r <= self.path_length for r in self.car_ranges):
            raise ConfigError("car ranges must lie in (0, path_length]")
        if self.car_ranges and not self.lateral_offsets:
            raise ConfigError("need at least one lateral offset")
        if min(self.range_jitter, self.lateral_jitter, self.yaw_jitter) < 0:
            raise ConfigError("jitter magnitudes must be >= 0")


@dataclass(frozen=True)
class Scene:
    cfg: SceneConfig
    cars: tuple[SceneCar, ...]
    calibration: Calibration = field(default_factory=default_calibration)

    def path_point(self, s: float) -> tuple[WorldPoint, float]:
        """Position and heading at arc length ``s`` from the path start."""
        return path_point(self.cfg, s)

    def path_points(self, s0: float, length: float) -> tuple[WorldPoint, ...]:
        n = int(math.floor(length / WAYPOINT_SPACING + 1e-9))
        return tuple(path_point(self.cfg, s0 + k * WAYPOINT_SPACING)[0] for k in range(n + 1))


def path_point(cfg: SceneConfig, s: float) -> tuple[WorldPoint, float]:
    if cfg.path_shape == "straight":
        return WorldPoint(s, 0.0, 0.0), 0.0
    r = cfg.arc_radius
    theta = s / r
    # arc bends to the left (positive y) when seen from the start pose
    return WorldPoint(r * math.sin(theta), r * (1.0 - math.cos(theta)), 0.0), theta


def generate_scene(cfg: SceneConfig, calibration: Calibration | None = None) -> Scene:
    rng = np.random.default_rng(cfg.seed)
    cars = []
    for i, rng_m in enumerate(cfg.car_ranges):
        offset = cfg.lateral_offsets[i % len(cfg.lateral_offsets)]
        s = rng_m + (rng.uniform(-cfg.range_jitter, cfg.range_jitter) if cfg.range_jitter else 0.0)
        lat = offset + (rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter) if cfg.lateral_jitter else 0.0)
        dyaw = rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter) if cfg.yaw_jitter else 0.0
        base, heading = path_point(cfg, s)
        center = WorldPoint(base.x - math.sin(heading) * lat, base.y + math.cos(heading) * lat, base.z)
        cars.append(SceneCar(center, heading + dyaw, cfg.car_dims))
    return Scene(cfg, tuple(cars), calibration or default_calibration())


def gt_bbox(car: SceneCar, chain, cam: CameraModel) -> Box2D | None:
    """Image-space hull of the car's cuboid, clipped to the image.

    Returns None when any corner is at or behind the camera plane (the hull
    of a car straddling the camera is unbounded), when the hull misses the
    image, or when the clipped area is below 4 px^2.
    """
    w2c = chain if isinstance(chain, RigidTransform) else chain_transform(chain)
    pts_c = w2c.apply(car.corners())
    if np.any(pts_c[:, 0] <= _NEAR_PLANE):
        return None
    uv = project_points(pts_c, cam)
    u1, v1 = max(uv[:, 0].min(), 0.0), max(uv[:, 1].min(), 0.0)
    u2, v2 = min(uv[:, 0].max(), float(cam.width_px)), min(uv[:, 1].max(), float(cam.height_px))
    if u2 <= u1 or v2 <= v1 or (u2 - u1) * (v2 - v1) < 4.0:
        return None
    return Box2D(float(u1), float(v1), float(u2 - u1), float(v2 - v1))


def frame_pose(scene: Scene, frame_index: int) -> Pose:
    pos, heading = scene.path_point(frame_index * scene.cfg.step_m)
    return Pose(pos.x, pos.y, pos.z, 0.0, 0.0, heading)


def render_frame(scene: Scene, frame_index: int) -> FrameRecord:
    if not 0 <= frame_index < scene.cfg.frames:
        raise IndexError(f"frame {frame_index} outside 0..{scene.cfg.frames - 1}")
    s0 = frame_index * scene.cfg.step_m
    pose = frame_pose(scene, frame_index)
    chain = scene.calibration.chain(pose)
    gts = []
    for car in scene.cars:
        box = gt_bbox(car, chain, scene.calibration.camera)
        if box is not None:
            gts.append(GroundTruthBox(frame_index, box, "car"))
    return FrameRecord(frame_index, pose, scene.path_points(s0, scene.cfg.path_length), tuple(gts))


def render_all(scene: Scene) -> list[FrameRecord]:
    return [render_frame(scene, i) for i in range(scene.cfg.frames)]
