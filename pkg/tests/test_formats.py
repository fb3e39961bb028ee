import json

import numpy as np
import pytest

from foveadet import formats
from foveadet.boxes import Box2D
from foveadet.detector import Detection
from foveadet.errors import ConfigError, ReplayFormatError
from foveadet.fuse import FusedDetections
from foveadet.metrics import pr_curve
from foveadet.pathcrop import CropPlanConfig, plan_crops
from foveadet.simworld import SceneConfig, default_calibration, generate_scene, render_all


@pytest.fixture(scope="module")
def frames():
    return render_all(generate_scene(SceneConfig(frames=4, seed=3, path_shape="arc", arc_radius=300.0)))


def rewrite(tmp_path, write, read, obj, name):
    a, b = tmp_path / f"a_{name}", tmp_path / f"b_{name}"
    write(a, obj)
    write(b, read(a))
    return a.read_bytes(), b.read_bytes()


def test_frame_log_round_trip(tmp_path, frames):
    a, b = rewrite(tmp_path, formats.write_frame_log, formats.read_frame_log, frames, "frames.jsonl")
    assert a == b
    assert formats.read_frame_log(tmp_path / "a_frames.jsonl") == frames


def test_frame_log_keeps_string_ids_and_image(tmp_path, frames):
    from dataclasses import replace

    fr = [replace(frames[0], frame_id="log7/000123", image="img/000123.png")]
    a, b = rewrite(tmp_path, formats.write_frame_log, formats.read_frame_log, fr, "s.jsonl")
    assert a == b
    line = json.loads(a.decode())
    assert line["frame_id"] == "log7/000123" and line["image"] == "img/000123.png"
    assert set(line) == {"frame_id", "pose", "waypoints", "gt", "image"}
    assert set(line["pose"]) == {"x", "y", "z", "roll", "pitch", "yaw"}


def test_replay_round_trip(tmp_path):
    records = {
        (0, 0): [Detection("car", 0.91, Box2D(10.5, 20.25, 30.125, 40.0), 0)],
        (0, 2): [],
        ("f1", 1): [Detection("car", 0.3, Box2D(1, 2, 3, 4), 1), Detection("person", 0.7, Box2D(5, 6, 7, 8), 1)],
    }
    a, b = rewrite(tmp_path, formats.write_replay, formats.read_replay, records, "replay.json")
    assert a == b
    assert formats.read_replay(tmp_path / "a_replay.json") == records
    data = json.loads(a)
    assert data["frames"][0]["sources"][0] == {
        "source_j": 0,
        "detections": [{"class": "car", "score": 0.91, "x": 10.5, "y": 20.25, "w": 30.125, "h": 40.0}],
    }


@pytest.mark.parametrize(
    "payload",
    [
        "not json",
        '{"nope": []}',
        '{"frames": [{"frame_id": 0, "sources": [{"source_j": 0, "detections": [{"class": "car"}]}]}]}',
        '{"frames": [{"frame_id": 0, "sources": [{"source_j": 0}, {"source_j": 0}]}]}',
        '{"frames": [{"frame_id": 0, "sources": [{"source_j": 0, "detections": '
        '[{"class": "car", "score": 2, "x": 0, "y": 0, "w": 1, "h": 1}]}]}]}',
    ],
)
def test_replay_malformed(tmp_path, payload):
    p = tmp_path / "bad.json"
    p.write_text(payload)
    with pytest.raises(ReplayFormatError):
        formats.read_replay(p)


def test_crop_plan_round_trip(tmp_path, frames):
    cal = default_calibration()
    plan = plan_crops(frames[2], cal.camera, cal.chain(frames[2].pose), CropPlanConfig())
    assert plan
    a, b = rewrite(tmp_path, formats.write_crop_plan, formats.read_crop_plan, plan, "plan.json")
    assert a == b
    assert formats.read_crop_plan(tmp_path / "a_plan.json") == plan
    assert set(json.loads(a)[0]) == {"j", "u", "v", "w", "h", "anchor_u", "anchor_v"}


def test_fused_round_trip(tmp_path):
    fused = [
        (0, FusedDetections((Detection("car", 0.5, Box2D(266.0, 65.0, 50.0, 30.0), 1),))),
        (1, FusedDetections(())),
        (2, FusedDetections(tuple(Detection("car", s, Box2D(s * 100, 1, 2, 3), 0) for s in (0.1, 0.2)))),
    ]
    a, b = rewrite(tmp_path, formats.write_fused, formats.read_fused, fused, "fused.jsonl")
    assert a == b
    assert formats.read_fused(tmp_path / "a_fused.jsonl") == fused
    first = json.loads(a.decode().splitlines()[0])
    assert first["detections"][0] == {"class": "car", "score": 0.5, "x": 266.0, "y": 65.0, "w": 50.0, "h": 30.0, "source": 1}


def test_ground_truth_round_trip(tmp_path, frames):
    gt = [(f.frame_id, list(f.gt)) for f in frames]
    a, b = rewrite(tmp_path, formats.write_ground_truth, formats.read_ground_truth, gt, "gt.json")
    assert a == b
    assert formats.read_ground_truth(tmp_path / "a_gt.json") == gt


def test_calibration_round_trip(tmp_path):
    cal = default_calibration()
    formats.write_calibration(tmp_path / "cal.json", cal)
    back = formats.read_calibration(tmp_path / "cal.json")
    assert back.camera == cal.camera
    assert back.pose_to_board.allclose(cal.pose_to_board, atol=1e-12)
    assert back.board_to_camera.allclose(cal.board_to_camera, atol=1e-12)
    data = json.loads((tmp_path / "cal.json").read_text())
    assert set(data["intrinsics"]) == {
        "fx_m", "fy_m", "pixel_size_m", "ku_px", "kv_px", "width_px", "height_px", "axis_sign_u", "axis_sign_v"
    }
    assert set(data["extrinsics"]["pose_to_board"]) == {"rotation_rpy_rad", "translation_m"}


def test_calibration_with_rotation(tmp_path):
    data = {
        "intrinsics": {"fx_m": 0.004, "fy_m": 0.004, "pixel_size_m": 4e-6, "ku_px": 640, "kv_px": 384,
                       "width_px": 1280, "height_px": 768, "axis_sign_u": -1, "axis_sign_v": 1},
        "extrinsics": {"board_to_camera": {"rotation_rpy_rad": [0.01, -0.02, 0.03], "translation_m": [0.1, 0, 0]},
                       "pose_to_board": {"rotation_rpy_rad": [0, 0, 0], "translation_m": [0, 0, -1.7]}},
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    cal = formats.read_calibration(p)
    assert cal.camera.axis_sign_u == -1
    np.testing.assert_allclose(cal.board_to_camera.rpy(), [0.01, -0.02, 0.03], atol=1e-12)


def test_calibration_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"intrinsics": {"fx_m": 1}}')
    with pytest.raises(ConfigError):
        formats.read_calibration(p)
    with pytest.raises(ConfigError):
        formats.read_calibration(tmp_path / "missing.json")


def test_pr_csv(tmp_path):
    dets = [(Detection("car", s, Box2D(0, 0, 1, 1)), t) for s, t in ((0.9, True), (0.5, False), (0.2, True))]
    curve = pr_curve(dets, 2)
    formats.write_pr_csv(tmp_path / "pr.csv", curve)
    text = (tmp_path / "pr.csv").read_text()
    assert text.splitlines()[0] == "score,recall,precision"
    rows = formats.read_pr_csv(tmp_path / "pr.csv")
    assert rows == [(0.9, 0.5, 1.0), (0.5, 0.5, 0.5), (0.2, 1.0, 2 / 3)]
