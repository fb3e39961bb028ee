import math

import numpy as np
import pytest

from foveadet.detector import DetectorInput, SyntheticBackend, letterbox
from foveadet.errors import ConfigError
from foveadet.frames import WorldPoint
from foveadet.pathcrop import CropPlanConfig, CropSpec, plan_crops
from foveadet.records import Pose
from foveadet.simworld import (
    SceneCar,
    SceneConfig,
    frame_pose,
    generate_scene,
    gt_bbox,
    render_all,
    render_frame,
)


def quiet(**kw):
    base = dict(range_jitter=0.0, lateral_jitter=0.0, yaw_jitter=0.0, frames=3)
    base.update(kw)
    return SceneConfig(**base)


def test_straight_scene_places_cars_on_axis():
    scene = generate_scene(quiet(car_ranges=(30, 140), lateral_offsets=(0,)))
    assert [(c.center.x, c.center.y) for c in scene.cars] == [(30, 0), (140, 0)]


def test_same_seed_same_scene():
    a = generate_scene(SceneConfig(seed=7))
    b = generate_scene(SceneConfig(seed=7))
    c = generate_scene(SceneConfig(seed=8))
    assert a.cars == b.cars
    assert a.cars != c.cars


def test_arc_path_spacing():
    cfg = SceneConfig(path_shape="arc", arc_radius=200.0, path_length=150.0, frames=1)
    scene = generate_scene(cfg)
    fr = render_frame(scene, 0)
    pts = np.array([[w.x, w.y, w.z] for w in fr.waypoints])
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.all(np.abs(chords - 0.5) <= 1e-6)
    assert len(pts) == 301


def test_config_validation():
    with pytest.raises(ConfigError):
        SceneConfig(car_ranges=(160,))
    with pytest.raises(ConfigError):
        SceneConfig(frames=0)
    with pytest.raises(ConfigError):
        SceneConfig(path_shape="spiral")


def test_gt_bbox_behind_camera(calibration):
    chain = calibration.chain(Pose(0, 0))
    assert gt_bbox(SceneCar(WorldPoint(-20, 0, 0)), chain, calibration.camera) is None


def test_gt_bbox_halves_with_double_range(calibration):
    chain = calibration.chain(Pose(0, 0))
    cam = calibration.camera
    for r in (60, 70):
        near = gt_bbox(SceneCar(WorldPoint(r, 0, 0)), chain, cam)
        far = gt_bbox(SceneCar(WorldPoint(2 * r, 0, 0)), chain, cam)
        assert far.h / near.h == pytest.approx(0.5, rel=0.05)


def hand_height(r):
    # bottom edge from the near face, top edge from the far face; camera at x=0.7, z=1.75
    near, far = r - 0.7 - 2.25, r - 0.7 + 2.25
    return 1000 * 1.75 / near - 1000 * (1.75 - 1.5) / far


def test_gt_bbox_height_close_range_matches_hand_formula(calibration):
    # at 30 m the car's own length breaks the 1/range rule by more than 5 %
    chain = calibration.chain(Pose(0, 0))
    for r in (30, 60):
        b = gt_bbox(SceneCar(WorldPoint(r, 0, 0)), chain, calibration.camera)
        assert b.h == pytest.approx(hand_height(r), rel=1e-12)


def test_gt_bbox_centered_on_axis(calibration):
    chain = calibration.chain(Pose(0, 0))
    cam = calibration.camera
    b = gt_bbox(SceneCar(WorldPoint(50, 0, 0)), chain, cam)
    assert b.x + b.w / 2 == pytest.approx(cam.ku_px, abs=1.0)


def test_gt_bbox_matches_hand_projection(calibration):
    # camera 0.7 m ahead of and 1.75 m above the ground contact point
    chain = calibration.chain(Pose(0, 0))
    b = gt_bbox(SceneCar(WorldPoint(50.7, 0, 0), 0.0, (4.5, 1.8, 1.5)), chain, calibration.camera)
    near, far = 50 - 2.25, 50 + 2.25
    assert b.w == pytest.approx(2 * 1000 * 0.9 / near)
    assert b.y == pytest.approx(384 + 1000 * (1.75 - 1.5) / far)
    assert b.y2 == pytest.approx(384 + 1000 * 1.75 / near)


def test_gt_bbox_outside_image(calibration):
    chain = calibration.chain(Pose(0, 0))
    assert gt_bbox(SceneCar(WorldPoint(10, 40, 0)), chain, calibration.camera) is None


def test_render_frame_zero():
    scene = generate_scene(SceneConfig(frames=2))
    fr = render_frame(scene, 0)
    assert fr.pose == Pose(0, 0, 0, 0, 0, 0)
    assert len(fr.waypoints) == 301
    assert fr.waypoints[-1].x == 150.0
    with pytest.raises(IndexError):
        render_frame(scene, 2)


def test_gt_boxes_grow_when_pose_advances():
    scene = generate_scene(quiet(step_m=10.0, frames=2))
    a, b = render_frame(scene, 0), render_frame(scene, 1)
    assert len(a.gt) == len(b.gt) == len(scene.cars)
    for ga, gb in zip(a.gt, b.gt):
        assert gb.box.h > ga.box.h


def test_gt_shrinks_with_range(calibration):
    chain = calibration.chain(Pose(0, 0))
    hs = [gt_bbox(SceneCar(WorldPoint(r, 0, 0)), chain, calibration.camera).h for r in range(10, 150, 5)]
    assert all(a > b for a, b in zip(hs, hs[1:]))


def test_far_car_only_visible_in_small_crops(calibration):
    cam = calibration.camera
    chain = calibration.chain(Pose(0, 0))
    box = gt_bbox(SceneCar(WorldPoint(140.7, 0, 0)), chain, cam)
    assert 9.5 < box.h < 12.5  # roughly 1.5 m * 1000 px / 140 m
    full_scale = letterbox(1280, 768).scale
    assert box.h * full_scale < 20
    j4 = letterbox(192, 115).scale * box.h
    j5 = letterbox(153, 92).scale * box.h
    assert j4 >= 20 and j5 >= 20
    assert 2 <= j4 / box.h <= 4.5 and 2 <= j5 / box.h <= 4.5


def test_far_car_detected_by_crop_pipeline():
    scene = generate_scene(quiet(car_ranges=(140,), lateral_offsets=(0,), frames=1))
    fr = render_frame(scene, 0)
    cal = scene.calibration
    be = SyntheticBackend({0: fr.gt}, sigma=0, score_sigma=0)
    assert be.detect(DetectorInput(0, CropSpec.whole_image(cal.camera))) == []
    plan = plan_crops(fr, cal.camera, cal.chain(fr.pose), CropPlanConfig())
    hits = [c.j for c in plan if be.detect(DetectorInput(0, c))]
    assert hits and min(hits) <= 4


def test_render_all_deterministic():
    cfg = SceneConfig(frames=5, seed=11)
    assert render_all(generate_scene(cfg)) == render_all(generate_scene(cfg))


def test_pose_follows_arc():
    scene = generate_scene(SceneConfig(path_shape="arc", arc_radius=100.0, step_m=math.pi * 50 / 4, frames=3))
    p = frame_pose(scene, 2)
    assert p.yaw == pytest.approx(math.pi / 4)
    assert p.x == pytest.approx(100 * math.sin(math.pi / 4))
