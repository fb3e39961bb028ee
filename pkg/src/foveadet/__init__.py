"""Path-guided foveated object detection.

Projects a vehicle's planned path into the camera image, cuts magnified crops
around far-away waypoints, runs a detector on the full image and every crop,
fuses the duplicates and scores the result with VOC-style average precision.
"""

from foveadet.boxes import Box2D, iou
from foveadet.errors import (
    BackendUnavailableError,
    BehindCameraError,
    ConfigError,
    DuplicateSourceError,
    FoveaError,
    FrameMismatchError,
    OutOfCropError,
    PathError,
    ReplayFormatError,
)

__version__ = "0.1.0"

__all__ = [
    "Box2D",
    "iou",
    "BackendUnavailableError",
    "BehindCameraError",
    "ConfigError",
    "DuplicateSourceError",
    "FoveaError",
    "FrameMismatchError",
    "OutOfCropError",
    "PathError",
    "ReplayFormatError",
]
