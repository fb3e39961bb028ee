"""Readers and writers for every on-disk format.

All writers emit keys in a fixed order and floats via ``repr`` so that a
read -> write cycle reproduces the file byte for byte.

Formats:

calibration (JSON)
    ``{intrinsics: {fx_m, fy_m, pixel_size_m, ku_px, kv_px, width_px,
    height_px, axis_sign_u, axis_sign_v}, extrinsics: {board_to_camera,
    pose_to_board}}``, each transform ``{rotation_rpy_rad: [r, p, y],
    translation_m: [x, y, z]}`` mapping points of the first frame into the
    second.
frame log (JSON Lines)
    ``{frame_id, pose: {x, y, z, roll, pitch, yaw}, waypoints: [[x, y, z], ...],
    gt: [{class, x, y, w, h}], image?}`` per line.
replay (JSON)
    ``{frames: [{frame_id, sources: [{source_j, detections: [{class, score,
    x, y, w, h}]}]}]}`` with region-local boxes.
crop plan (JSON)
    ``[{j, u, v, w, h, anchor_u, anchor_v}, ...]``.
fused detections (JSON Lines)
    ``{frame_id, detections: [{class, score, x, y, w, h, source}]}`` per line.
ground truth (JSON)
    ``{frames: [{frame_id, boxes: [{class, x, y, w, h}]}]}``.
PR curve (CSV)
    ``score,recall,precision``.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from foveadet.boxes import Box2D
from foveadet.detector import Detection
from foveadet.errors import ConfigError, ReplayFormatError
from foveadet.frames import BOARD, CAMERA, POSE, Calibration, CameraModel, RigidTransform, WorldPoint
from foveadet.fuse import FusedDetections
from foveadet.metrics import PRCurve
from foveadet.pathcrop import CropSpec
from foveadet.records import FrameId, FrameRecord, GroundTruthBox, Pose


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def _read_json(path, error=ConfigError):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise error(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise error(f"{path}: invalid JSON ({exc})") from exc


def _box_dict(label: str, box: Box2D) -> dict:
    return {"class": label, "x": box.x, "y": box.y, "w": box.w, "h": box.h}


# calibration


def _transform_to_dict(t: RigidTransform) -> dict:
    return {"rotation_rpy_rad": list(t.rpy()), "translation_m": t.translation.tolist()}


def _transform_from_dict(d: Mapping, from_frame: str, to_frame: str) -> RigidTransform:
    try:
        rpy = [float(a) for a in d.get("rotation_rpy_rad", (0.0, 0.0, 0.0))]
        trans = [float(a) for a in d.get("translation_m", (0.0, 0.0, 0.0))]
        if len(rpy) != 3 or len(trans) != 3:
            raise ValueError("need three angles and three translation components")
        return RigidTransform.from_rpy(rpy, trans, from_frame, to_frame)
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"bad {from_frame}->{to_frame} transform: {exc}") from exc


def calibration_to_dict(cal: Calibration) -> dict:
    cam = cal.camera
    return {
        "intrinsics": {
            "fx_m": cam.fx_m,
            "fy_m": cam.fy_m,
            "pixel_size_m": cam.pixel_size_m,
            "ku_px": cam.ku_px,
            "kv_px": cam.kv_px,
            "width_px": cam.width_px,
            "height_px": cam.height_px,
            "axis_sign_u": cam.axis_sign_u,
            "axis_sign_v": cam.axis_sign_v,
        },
        "extrinsics": {
            "board_to_camera": _transform_to_dict(cal.board_to_camera),
            "pose_to_board": _transform_to_dict(cal.pose_to_board),
        },
    }


def calibration_from_dict(d: Mapping) -> Calibration:
    try:
        intr = d["intrinsics"]
        cam = CameraModel(
            fx_m=float(intr["fx_m"]),
            fy_m=float(intr["fy_m"]),
            pixel_size_m=float(intr["pixel_size_m"]),
            ku_px=float(intr["ku_px"]),
            kv_px=float(intr["kv_px"]),
            width_px=int(intr["width_px"]),
            height_px=int(intr["height_px"]),
            axis_sign_u=int(intr.get("axis_sign_u", 1)),
            axis_sign_v=int(intr.get("axis_sign_v", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad intrinsics: {exc}") from exc
    ext = d.get("extrinsics", {})
    return Calibration(
        camera=cam,
        pose_to_board=_transform_from_dict(ext.get("pose_to_board", {}), POSE, BOARD),
        board_to_camera=_transform_from_dict(ext.get("board_to_camera", {}), BOARD, CAMERA),
    )


def read_calibration(path) -> Calibration:
    return calibration_from_dict(_read_json(path))


def write_calibration(path, cal: Calibration) -> None:
    Path(path).write_text(_dump(calibration_to_dict(cal)), encoding="utf-8")


# frame log


def frame_to_dict(fr: FrameRecord) -> dict:
    p = fr.pose
    d = {
        "frame_id": fr.frame_id,
        "pose": {"x": p.x, "y": p.y, "z": p.z, "roll": p.roll, "pitch": p.pitch, "yaw": p.yaw},
        "waypoints": [[w.x, w.y, w.z] for w in fr.waypoints],
        "gt": [_box_dict(g.class_label, g.box) for g in fr.gt],
    }
    if fr.image is not None:
        d["image"] = fr.image
    return d


def frame_from_dict(d: Mapping) -> FrameRecord:
    try:
        fid = d["frame_id"]
        p = d["pose"]
        pose = Pose(*(float(p.get(k, 0.0)) for k in ("x", "y", "z", "roll", "pitch", "yaw")))
        wps = tuple(WorldPoint(float(x), float(y), float(z)) for x, y, z in d["waypoints"])
        gts = tuple(
            GroundTruthBox(fid, Box2D(g["x"], g["y"], g["w"], g["h"]), str(g.get("class", "car")))
            for g in d.get("gt", ())
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad frame record: {exc}") from exc
    return FrameRecord(fid, pose, wps, gts, d.get("image"))


def write_frame_log(path, frames: Iterable[FrameRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(_line(frame_to_dict(fr)))


def read_frame_log(path) -> list[FrameRecord]:
    frames = []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"frame log not found: {path}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                frames.append(frame_from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return frames


# replay


ReplayRecords = Mapping[tuple[FrameId, int], Sequence[Detection]]


def replay_to_dict(records: ReplayRecords) -> dict:
    grouped: dict = defaultdict(list)
    for (fid, j), dets in records.items():
        grouped[fid].append((j, dets))
    return {
        "frames": [
            {
                "frame_id": fid,
                "sources": [
                    {"source_j": j, "detections": [d.to_dict(with_source=False) for d in dets]}
                    for j, dets in sources
                ],
            }
            for fid, sources in grouped.items()
        ]
    }


def replay_from_dict(d: Mapping) -> dict[tuple[FrameId, int], list[Detection]]:
    out: dict[tuple[FrameId, int], list[Detection]] = {}
    try:
        for fr in d["frames"]:
            fid = fr["frame_id"]
            for src in fr.get("sources", ()):
                j = int(src["source_j"])
                if (fid, j) in out:
                    raise ReplayFormatError(f"frame {fid!r} lists source {j} twice")
                out[(fid, j)] = [Detection.from_dict(x, source=j) for x in src.get("detections", ())]
    except ReplayFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ReplayFormatError(f"malformed replay data: {exc!r}") from exc
    return out


def read_replay(path) -> dict[tuple[FrameId, int], list[Detection]]:
    return replay_from_dict(_read_json(path, ReplayFormatError))


def write_replay(path, records: ReplayRecords) -> None:
    Path(path).write_text(_dump(replay_to_dict(records)), encoding="utf-8")


# crop plans


def write_crop_plan(path, plan: Sequence[CropSpec]) -> None:
    Path(path).write_text(_dump([c.to_dict() for c in plan]), encoding="utf-8")


def read_crop_plan(path) -> list[CropSpec]:
    data = _read_json(path)
    try:
        return [CropSpec.from_dict(c) for c in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad crop plan: {exc}") from exc


# fused detections


def write_fused(path, frames: Iterable[tuple[FrameId, FusedDetections | Sequence[Detection]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fid, fused in frames:
            fh.write(_line({"frame_id": fid, "detections": [d.to_dict() for d in fused]}))


def read_fused(path) -> list[tuple[FrameId, FusedDetections]]:
    out = []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"fused detections not found: {path}") from exc
    with fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                dets = tuple(Detection.from_dict(x) for x in rec["detections"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad fused record: {exc!r}") from exc
            out.append((rec["frame_id"], FusedDetections(dets)))
    return out


# ground truth


def gt_to_dict(frames: Iterable[tuple[FrameId, Sequence[GroundTruthBox]]]) -> dict:
    return {
        "frames": [
            {"frame_id": fid, "boxes": [_box_dict(g.class_label, g.box) for g in boxes]}
            for fid, boxes in frames
        ]
    }


def write_ground_truth(path, frames: Iterable[tuple[FrameId, Sequence[GroundTruthBox]]]) -> None:
    Path(path).write_text(_dump(gt_to_dict(frames)), encoding="utf-8")


def read_ground_truth(path) -> list[tuple[FrameId, list[GroundTruthBox]]]:
    data = _read_json(path)
    try:
        return [
            (
                fr["frame_id"],
                [
                    GroundTruthBox(fr["frame_id"], Box2D(b["x"], b["y"], b["w"], b["h"]), str(b.get("class", "car")))
                    for b in fr.get("boxes", ())
                ],
            )
            for fr in data["frames"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad ground truth: {exc!r}") from exc


def write_pr_csv(path, curve: PRCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["score", "recall", "precision"])
        for score, (rec, prec) in zip(curve.scores, curve.points):
            w.writerow([repr(score), repr(rec), repr(prec)])


def read_pr_csv(path) -> list[tuple[float, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [(float(r["score"]), float(r["recall"]), float(r["precision"])) for r in csv.DictReader(fh)]
