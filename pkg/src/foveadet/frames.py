"""Coordinate frames, rigid transforms and pinhole projection.

All frames share the vehicle convention x = forward, y = left, z = up.
A :class:`RigidTransform` labelled ``from_frame -> to_frame`` maps a point
expressed in ``from_frame`` to the same point expressed in ``to_frame``::

    p_to = R @ p_from + t

The extrinsic chain used for projection is ``[world->pose, pose->board,
board->camera]``; :func:`world_to_camera` composes it right to left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from foveadet.errors import BehindCameraError, FrameMismatchError

WORLD = "world"
POSE = "pose"
BOARD = "board"
CAMERA = "camera"

_ORTHO_TOL = 1e-9
_EYE3 = np.eye(3)


def _check_finite(obj, names: Sequence[str]) -> None:
    for name in names:
        if not math.isfinite(getattr(obj, name)):
            raise ValueError(f"{type(obj).__name__}.{name} must be finite")


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _check_finite(self, "xyz")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class CameraPoint:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _check_finite(self, "xyz")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class PixelPoint:
    """Continuous pixel position; u grows rightward, v downward.

    May lie outside the image; bounds are enforced by later stages.
    """

    u: float
    v: float

    def __post_init__(self) -> None:
        _check_finite(self, "uv")


def rotation_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation built yaw first, then pitch, then roll: ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def rpy_from_rotation(rotation: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_from_rpy` (pitch kept in [-pi/2, pi/2])."""
    r = np.asarray(rotation, dtype=np.float64)
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    if abs(math.cos(pitch)) < 1e-12:
        # gimbal lock: roll and yaw share an axis, fold everything into yaw
        roll = 0.0
        yaw = math.atan2(-r[0, 1], r[1, 1])
    else:
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
    return roll, pitch, yaw


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion between two named frames."""

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: str = WORLD
    to_frame: str = WORLD

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise ValueError("rigid transform entries must be finite")
        if np.abs(rot.T @ rot - _EYE3).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls, from_frame: str = WORLD, to_frame: str | None = None) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3), from_frame, from_frame if to_frame is None else to_frame)

    @classmethod
    def from_rpy(
        cls,
        rpy: Sequence[float],
        translation: Sequence[float],
        from_frame: str,
        to_frame: str,
    ) -> RigidTransform:
        roll, pitch, yaw = rpy
        return cls(rotation_from_rpy(roll, pitch, yaw), np.asarray(translation, float), from_frame, to_frame)

    def apply(self, p):
        """Map a point (any xyz dataclass or a length-3 array) into ``to_frame``.

        Arrays of shape (N, 3) are mapped row-wise.
        """
        if isinstance(p, (WorldPoint, CameraPoint)):
            x, y, z = self.rotation @ p.as_array() + self.translation
            return WorldPoint(x, y, z) if self.to_frame == WORLD else CameraPoint(x, y, z)
        arr = np.asarray(p, dtype=np.float64)
        return arr @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def rpy(self) -> tuple[float, float, float]:
        return rpy_from_rotation(self.rotation)

    def allclose(self, other: RigidTransform, atol: float = 1e-9) -> bool:
        return (
            self.from_frame == other.from_frame
            and self.to_frame == other.to_frame
            and np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return (
            f"RigidTransform({self.from_frame}->{self.to_frame}, "
            f"rpy={tuple(round(a, 6) for a in self.rpy())}, t={self.translation.tolist()})"
        )


def _reorthonormalize(rot: np.ndarray) -> np.ndarray:
    # long chains drift; snap back to the nearest rotation
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first and then ``a``."""
    if a.from_frame != b.to_frame:
        raise FrameMismatchError(
            f"cannot compose {a.from_frame}->{a.to_frame} after {b.from_frame}->{b.to_frame}"
        )
    rot = a.rotation @ b.rotation
    if np.abs(rot.T @ rot - _EYE3).max() > _ORTHO_TOL / 10:
        rot = _reorthonormalize(rot)
    return RigidTransform(rot, a.rotation @ b.translation + a.translation, b.from_frame, a.to_frame)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation, t.to_frame, t.from_frame)


def pose_to_world(x: float, y: float, z: float, roll: float, pitch: float, yaw: float) -> RigidTransform:
    """Vehicle pose as a pose->world transform."""
    return RigidTransform.from_rpy((roll, pitch, yaw), (x, y, z), POSE, WORLD)


def world_to_pose(x: float, y: float, z: float, roll: float, pitch: float, yaw: float) -> RigidTransform:
    """The world->pose transform that opens the extrinsic chain."""
    return invert(pose_to_world(x, y, z, roll, pitch, yaw))


def chain_transform(chain: Sequence[RigidTransform]) -> RigidTransform:
    """Collapse ``[world->pose, pose->board, board->camera]`` into world->camera."""
    if not chain:
        raise FrameMismatchError("empty transform chain")
    if chain[0].from_frame != WORLD or chain[-1].to_frame != CAMERA:
        raise FrameMismatchError(
            f"chain must run {WORLD}->{CAMERA}, got {chain[0].from_frame}->{chain[-1].to_frame}"
        )
    total = chain[0]
    for t in chain[1:]:
        total = compose(t, total)
    return total


def world_to_camera(chain: Sequence[RigidTransform] | RigidTransform, w: WorldPoint) -> CameraPoint:
    t = chain if isinstance(chain, RigidTransform) else chain_transform(chain)
    if t.from_frame != WORLD or t.to_frame != CAMERA:
        raise FrameMismatchError(f"expected a world->camera transform, got {t.from_frame}->{t.to_frame}")
    x, y, z = t.rotation @ w.as_array() + t.translation
    return CameraPoint(x, y, z)


def camera_origin_in_world(chain: Sequence[RigidTransform] | RigidTransform) -> WorldPoint:
    """Position of the camera centre expressed in world coordinates."""
    t = chain if isinstance(chain, RigidTransform) else chain_transform(chain)
    inv = invert(t)
    x, y, z = inv.translation
    return WorldPoint(x, y, z)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus image size.

    ``axis_sign_u``/``axis_sign_v`` flip the image axes so that a calibration
    whose handedness differs from the x-forward/y-left/z-up convention can be
    absorbed without touching the extrinsics.
    """

    fx_m: float
    fy_m: float
    pixel_size_m: float
    ku_px: float
    kv_px: float
    width_px: int
    height_px: int
    axis_sign_u: int = 1
    axis_sign_v: int = 1

    def __post_init__(self) -> None:
        _check_finite(self, ("fx_m", "fy_m", "pixel_size_m", "ku_px", "kv_px"))
        if self.fx_m <= 0 or self.fy_m <= 0 or self.pixel_size_m <= 0:
            raise ValueError("focal lengths and pixel size must be positive")
        if int(self.width_px) != self.width_px or int(self.height_px) != self.height_px:
            raise ValueError("image size must be integral")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image size must be positive")
        if not (0 < self.ku_px < self.width_px and 0 < self.kv_px < self.height_px):
            raise ValueError("principal point must lie inside the image")
        if self.axis_sign_u not in (1, -1) or self.axis_sign_v not in (1, -1):
            raise ValueError("axis signs must be +1 or -1")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))

    @property
    def focal_u_px(self) -> float:
        return self.fx_m / self.pixel_size_m

    @property
    def focal_v_px(self) -> float:
        return self.fy_m / self.pixel_size_m

    @property
    def size(self) -> tuple[int, int]:
        return self.width_px, self.height_px

    def contains(self, p: PixelPoint) -> bool:
        return 0 <= p.u < self.width_px and 0 <= p.v < self.height_px


def project_to_image(c: CameraPoint, cam: CameraModel) -> PixelPoint:
    if not c.x > 0:
        raise BehindCameraError(f"point with forward coordinate {c.x} is not in front of the camera")
    u = cam.axis_sign_u * (cam.fx_m / cam.pixel_size_m) * (c.y / c.x) + cam.ku_px
    v = cam.axis_sign_v * (cam.fy_m / cam.pixel_size_m) * (-c.z / c.x) + cam.kv_px
    return PixelPoint(u, v)


def project_points(points_c: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Vectorised :func:`project_to_image` for an (N, 3) camera-frame array.

    Rows with a non-positive forward coordinate come back as NaN.
    """
    pts = np.asarray(points_c, dtype=np.float64).reshape(-1, 3)
    out = np.full((len(pts), 2), np.nan)
    ok = pts[:, 0] > 0
    x, y, z = pts[ok, 0], pts[ok, 1], pts[ok, 2]
    out[ok, 0] = cam.axis_sign_u * cam.focal_u_px * (y / x) + cam.ku_px
    out[ok, 1] = cam.axis_sign_v * cam.focal_v_px * (-z / x) + cam.kv_px
    return out


@dataclass(frozen=True)
class Calibration:
    """Camera intrinsics together with the fixed part of the extrinsic chain."""

    camera: CameraModel
    pose_to_board: RigidTransform = field(default_factory=lambda: RigidTransform.identity(POSE, BOARD))
    board_to_camera: RigidTransform = field(default_factory=lambda: RigidTransform.identity(BOARD, CAMERA))

    def __post_init__(self) -> None:
        if (self.pose_to_board.from_frame, self.pose_to_board.to_frame) != (POSE, BOARD):
            raise FrameMismatchError("pose_to_board must map pose->board")
        if (self.board_to_camera.from_frame, self.board_to_camera.to_frame) != (BOARD, CAMERA):
            raise FrameMismatchError("board_to_camera must map board->camera")

    def chain(self, pose) -> list[RigidTransform]:
        """Full world->camera chain for a vehicle pose (anything with x..yaw attributes)."""
        w2p = world_to_pose(pose.x, pose.y, pose.z, pose.roll, pose.pitch, pose.yaw)
        return [w2p, self.pose_to_board, self.board_to_camera]
