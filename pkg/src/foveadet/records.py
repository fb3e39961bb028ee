"""Per-timestep records shared by the simulator, the pipeline and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable

from foveadet.boxes import Box2D
from foveadet.frames import WorldPoint

FrameId = Hashable


@dataclass(frozen=True)
class Pose:
    """Vehicle pose in the world frame; angles in radians, yaw-pitch-roll order."""

    x: float
    y: float
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "roll", "pitch", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Pose.{name} must be finite")

    @property
    def position(self) -> WorldPoint:
        return WorldPoint(self.x, self.y, self.z)


@dataclass(frozen=True)
class GroundTruthBox:
    frame_id: FrameId
    box: Box2D
    class_label: str = "car"


@dataclass(frozen=True)
class FrameRecord:
    """One timestep: pose, planned path ahead, annotations and an optional image path."""

    frame_id: FrameId
    pose: Pose
    waypoints: tuple[WorldPoint, ...]
    gt: tuple[GroundTruthBox, ...] = ()
    image: str | None = None
    extra: dict = field(default_factory=dict, compare=False)
