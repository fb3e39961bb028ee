import numpy as np
import pytest

from foveadet.frames import BOARD, CAMERA, POSE, WORLD, CameraModel, RigidTransform
from foveadet.simworld import default_calibration, default_camera


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_transform(rng, from_frame=WORLD, to_frame=WORLD, scale=10.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3), from_frame, to_frame)


def random_chain(rng):
    return [
        random_transform(rng, WORLD, POSE, 100.0),
        random_transform(rng, POSE, BOARD, 2.0),
        random_transform(rng, BOARD, CAMERA, 1.0),
    ]


def identity_chain():
    return [
        RigidTransform.identity(WORLD, POSE),
        RigidTransform.identity(POSE, BOARD),
        RigidTransform.identity(BOARD, CAMERA),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cam() -> CameraModel:
    return default_camera()


@pytest.fixture
def calibration():
    return default_calibration()
