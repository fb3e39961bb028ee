import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import identity_chain
from foveadet.errors import PathError
from foveadet.frames import CameraModel, PixelPoint, WorldPoint
from foveadet.pathcrop import (
    CropPlanConfig,
    CropSpec,
    Path,
    clamp_crop,
    crop_size,
    place_crop,
    plan_crops,
    select_reference_waypoints,
)
from foveadet.records import FrameRecord, Pose


def straight_path(length=150.0, spacing=0.5, start=0.0):
    n = int(round(length / spacing))
    return Path(tuple(WorldPoint(start + k * spacing, 0.0, 0.0) for k in range(n + 1)))


def test_path_validation():
    with pytest.raises(PathError):
        Path((WorldPoint(0, 0, 0),))
    with pytest.raises(PathError):
        Path((WorldPoint(0, 0, 0), WorldPoint(0.5, 0, 0), WorldPoint(1.2, 0, 0)))
    Path((WorldPoint(0, 0, 0), WorldPoint(0.45, 0, 0), WorldPoint(1.0, 0, 0)))


def test_select_waypoints_straight():
    path = straight_path()
    got = select_reference_waypoints(path, CropPlanConfig(n=5, d=25), WorldPoint(0, 0, 0))
    assert got == [path.waypoints[i] for i in (50, 100, 150, 200, 250)]


def test_select_waypoints_from_nearest_index():
    path = straight_path()
    got = select_reference_waypoints(path, CropPlanConfig(n=2, d=25), WorldPoint(10.1, 0.3, 1.7))
    assert [w.x for w in got] == [35.0, 60.0]


def test_select_waypoints_zero_and_truncated():
    path = straight_path()
    assert select_reference_waypoints(path, CropPlanConfig(n=0), WorldPoint(0, 0, 0)) == []
    short = straight_path(60.0)
    got = select_reference_waypoints(short, CropPlanConfig(n=5, d=25), WorldPoint(0, 0, 0))
    assert [w.x for w in got] == [25.0, 50.0]


def test_select_waypoints_measures_arc_length_not_distance():
    # quarter circle of radius 40 m, 0.5 m arc spacing
    r = 40.0
    n = int(r * math.pi / 2 / 0.5)
    pts = tuple(WorldPoint(r * math.sin(k * 0.5 / r), r * (1 - math.cos(k * 0.5 / r)), 0) for k in range(n + 1))
    got = select_reference_waypoints(Path(pts), CropPlanConfig(n=2, d=25), WorldPoint(0, 0, 0))
    # chord lengths are slightly short, so the 25 m mark lands one waypoint later at most
    assert [pts.index(w) for w in got] in ([50, 100], [51, 101], [50, 101])


def test_crop_size_reference_values(cam):
    cfg = CropPlanConfig()
    assert crop_size(4, cam, cfg) == (192, 115)
    assert crop_size(5, cam, cfg) == (153, 92)
    assert crop_size(1, cam, cfg) == (768, 460)


def test_crop_sizes_strictly_decrease(cam):
    # floor() merges neighbours once alpha*m/(j*(j+1)) < 1 px (j > 20 for 768 rows)
    cfg = CropPlanConfig()
    sizes = [crop_size(j, cam, cfg) for j in range(1, 21)]
    for a, b in zip(sizes, sizes[1:]):
        assert b[0] < a[0] and b[1] < a[1]


@given(j=st.integers(1, 40), w=st.integers(64, 4096), h=st.integers(64, 4096), alpha=st.floats(0.05, 1.0))
def test_crop_aspect_matches_image(j, w, h, alpha):
    cam = CameraModel(1e-3, 1e-3, 1e-6, w / 2, h / 2, w, h)
    cw, ch = crop_size(j, cam, CropPlanConfig(alpha=alpha))
    exact_w, exact_h = alpha * w / j, alpha * h / j
    # floor loses < 1 px per side
    assert exact_w - 1 < cw <= exact_w + 1e-6 or cw == 1
    assert exact_h - 1 < ch <= exact_h + 1e-6 or ch == 1


def test_place_crop_examples():
    cfg = CropPlanConfig()
    c = place_crop(PixelPoint(640, 400), (768, 460), cfg)
    assert (c.c_u, c.c_v) == (256, 55)
    c = place_crop(PixelPoint(100, 50), (192, 115), cfg)
    assert (c.c_u, c.c_v) == (4, -36.25)


def test_place_crop_centered_without_lift():
    c = place_crop(PixelPoint(640, 384), (200, 100), CropPlanConfig(v_lift=1.0))
    assert (c.c_u, c.c_v) == (540, 334)
    assert c.c_u + c.c_w / 2 == 640 and c.c_v + c.c_h / 2 == 384


def test_clamp_crop(cam):
    inside = CropSpec(1, 100, 100, 200, 100)
    assert clamp_crop(inside, cam) == inside
    left = clamp_crop(CropSpec(1, -10, 5, 100, 100), cam)
    assert (left.c_u, left.c_w) == (0, 100)
    right = clamp_crop(CropSpec(1, 1250, 0, 100, 100), cam)
    assert right.c_u == 1180
    up = clamp_crop(place_crop(PixelPoint(100, 50), (192, 115), CropPlanConfig()), cam)
    assert (up.c_u, up.c_v, up.c_w, up.c_h) == (4, 0, 192, 115)


def test_clamp_crop_oversize_and_reject(cam):
    big = clamp_crop(CropSpec(1, -50, -50, 2000, 1000), cam)
    assert (big.c_u, big.c_v, big.c_w, big.c_h) == (0, 0, 1280, 768)
    assert clamp_crop(CropSpec(9, 10, 10, 15, 40), cam) is None
    assert clamp_crop(CropSpec(9, 10, 10, 15, 40), cam, min_crop_px=8) is not None


def test_clamp_rounds_half_up(cam):
    c = clamp_crop(CropSpec(1, 10.5, 20.49, 100, 100), cam)
    assert (c.c_u, c.c_v) == (11, 20)


@given(
    u=st.floats(-3000, 3000),
    v=st.floats(-3000, 3000),
    w=st.floats(1, 3000),
    h=st.floats(1, 3000),
)
def test_clamped_crops_lie_inside(u, v, w, h):
    cam = CameraModel(1e-3, 1e-3, 1e-6, 640, 384, 1280, 768)
    c = clamp_crop(CropSpec(1, u, v, w, h), cam)
    if c is None:
        assert min(w, 1280) < 16 or min(h, 768) < 16
        return
    assert 0 <= c.c_u and c.c_u + c.c_w <= 1280
    assert 0 <= c.c_v and c.c_v + c.c_h <= 768
    assert c.c_w >= 16 and c.c_h >= 16
    assert all(float(x).is_integer() for x in (c.c_u, c.c_v, c.c_w, c.c_h))


def _frame(path: Path) -> FrameRecord:
    return FrameRecord(0, Pose(0, 0), path.waypoints)


def test_plan_straight_path_centered(calibration):
    cam = calibration.camera
    frame = _frame(straight_path())
    cfg = CropPlanConfig()
    plan = plan_crops(frame, cam, calibration.chain(frame.pose), cfg)
    assert [c.j for c in plan] == [1, 2, 3, 4, 5]
    for c in plan:
        assert c.anchor.u == pytest.approx(cam.ku_px, abs=1e-9)
        assert (c.c_w, c.c_h) == crop_size(c.j, cam, cfg)
        assert c.c_u + c.c_w / 2 == pytest.approx(cam.ku_px, abs=0.5)


def test_plan_zero_crops(calibration):
    frame = _frame(straight_path())
    assert plan_crops(frame, calibration.camera, calibration.chain(frame.pose), CropPlanConfig(n=0)) == []


def test_plan_drops_waypoints_leaving_view():
    # straight for 80 m, then a hard left turn; narrow field of view
    cam = CameraModel(3e-3, 3e-3, 1e-6, 640, 384, 1280, 768)
    pts = [WorldPoint(0.5 * k, 0, 0) for k in range(161)]
    pts += [WorldPoint(80.0, 0.5 * k, 0) for k in range(1, 141)]
    path = Path(tuple(pts))
    cfg = CropPlanConfig(n=5, d=25)
    expected = []
    for j, wp in enumerate(select_reference_waypoints(path, cfg, WorldPoint(0, 0, 0)), start=1):
        u = 3000 * wp.y / wp.x + 640
        if 0 <= u < 1280:
            expected.append(j)
    assert expected == [1, 2, 3]
    plan = plan_crops(path, cam, identity_chain(), cfg)
    assert [c.j for c in plan] == expected
    assert [(c.c_w, c.c_h) for c in plan] == [crop_size(j, cam, cfg) for j in expected]


def test_plan_skips_points_behind_camera():
    cam = CameraModel(1e-3, 1e-3, 1e-6, 640, 384, 1280, 768)
    path = Path(tuple(WorldPoint(-0.5 * k, 0, 0) for k in range(301)))
    assert plan_crops(path, cam, identity_chain(), CropPlanConfig()) == []


def test_plan_is_deterministic(calibration):
    frame = _frame(straight_path())
    chain = calibration.chain(frame.pose)
    a = plan_crops(frame, calibration.camera, chain, CropPlanConfig())
    b = plan_crops(frame, calibration.camera, chain, CropPlanConfig())
    assert a == b


def test_crop_plan_invariants_on_random_poses(calibration, rng):
    cam = calibration.camera
    path = straight_path(200)
    for _ in range(50):
        pose = Pose(rng.uniform(0, 20), rng.uniform(-2, 2), 0.0, 0.0, 0.0, rng.uniform(-0.4, 0.4))
        plan = plan_crops(path, cam, calibration.chain(pose), CropPlanConfig())
        js = [c.j for c in plan]
        assert js == sorted(set(js))
        for c in plan:
            assert 0 <= c.c_u and c.c_u + c.c_w <= cam.width_px
            assert 0 <= c.c_v and c.c_v + c.c_h <= cam.height_px
            assert min(c.c_w, c.c_h) >= 16


def test_config_validation():
    for kw in (dict(n=-1), dict(d=0), dict(alpha=0), dict(alpha=1.5), dict(v_lift=0.5)):
        with pytest.raises(ValueError):
            CropPlanConfig(**kw)


def test_cropspec_dict_round_trip():
    c = CropSpec(2, 10, 20, 384, 230, PixelPoint(202.0, 250.5))
    assert CropSpec.from_dict(c.to_dict()) == c
    assert np.isclose(c.to_dict()["anchor_v"], 250.5)
