"""Detector backends and region <-> full-image coordinate mapping.

Every backend answers :meth:`DetectorBackend.detect` for one image region
(the whole image, ``j == 0``, or a crop) and returns boxes relative to the
region's top-left corner, before any resize. Three backends ship here:

* :class:`ReplayBackend` serves detections recorded in a replay file.
* :class:`SyntheticBackend` derives detections from ground-truth geometry
  with a simple resolution model, standing in for a CNN.
* :class:`ExternalProcessBackend` pipes each region to a user command.
"""

from __future__ import annotations

import json
import subprocess
import zlib
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from foveadet.boxes import Box2D, intersection_area
from foveadet.errors import BackendUnavailableError, OutOfCropError, ReplayFormatError
from foveadet.pathcrop import CropSpec
from foveadet.records import FrameId, GroundTruthBox

DEFAULT_INPUT_SIDE = 608
_EDGE_TOL = 1e-6


@dataclass(frozen=True)
class Detection:
    class_label: str
    score: float
    box: Box2D
    source: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.source < 0:
            raise ValueError("source must be >= 0")

    def to_dict(self, with_source: bool = True) -> dict:
        b = self.box
        d = {"class": self.class_label, "score": self.score, "x": b.x, "y": b.y, "w": b.w, "h": b.h}
        if with_source:
            d["source"] = self.source
        return d

    @classmethod
    def from_dict(cls, d: Mapping, source: int | None = None) -> Detection:
        src = d.get("source", 0) if source is None else source
        return cls(str(d["class"]), float(d["score"]), Box2D(d["x"], d["y"], d["w"], d["h"]), int(src))


@dataclass(frozen=True)
class DetectorInput:
    frame_id: FrameId
    region: CropSpec
    image: str | None = None
    input_side: int = DEFAULT_INPUT_SIDE


@dataclass(frozen=True)
class ResizeMeta:
    """Letterbox parameters taking region pixels to detector-input pixels."""

    scale: float
    pad_u: float
    pad_v: float

    def to_input(self, box: Box2D) -> Box2D:
        return Box2D(box.x * self.scale + self.pad_u, box.y * self.scale + self.pad_v,
                     box.w * self.scale, box.h * self.scale)

    def from_input(self, box: Box2D) -> Box2D:
        return Box2D((box.x - self.pad_u) / self.scale, (box.y - self.pad_v) / self.scale,
                     box.w / self.scale, box.h / self.scale)


def letterbox(region_w: float, region_h: float, side: int = DEFAULT_INPUT_SIDE) -> ResizeMeta:
    """Aspect-preserving fit of a ``region_w x region_h`` region into a square input."""
    scale = min(side / region_w, side / region_h)
    return ResizeMeta(scale, (side - region_w * scale) / 2.0, (side - region_h * scale) / 2.0)


def _check_inside(box: Box2D, crop: CropSpec) -> None:
    if (box.x < -_EDGE_TOL or box.y < -_EDGE_TOL
            or box.x2 > crop.c_w + _EDGE_TOL or box.y2 > crop.c_h + _EDGE_TOL):
        raise OutOfCropError(f"box {box.as_tuple()} exceeds crop {crop.j} of size {crop.c_w}x{crop.c_h}")


def to_full_image(d: Detection, crop: CropSpec) -> Detection:
    """Shift a region-local detection into full-image pixels and tag its source."""
    _check_inside(d.box, crop)
    return replace(d, box=d.box.translate(crop.c_u, crop.c_v), source=crop.j)


def to_local(d: Detection, crop: CropSpec) -> Detection:
    local = replace(d, box=d.box.translate(-crop.c_u, -crop.c_v), source=crop.j)
    _check_inside(local.box, crop)
    return local


def class_filter(ds: Iterable[Detection], whitelist: Iterable[str] = ("car",)) -> list[Detection]:
    keep = set(whitelist)
    return [d for d in ds if d.class_label in keep]


class DetectorBackend:
    """Interface every backend implements.

    ``concurrent_safe`` tells the pipeline whether :meth:`detect` may be
    called from several worker threads at once.
    """

    name = "base"
    concurrent_safe = False

    def detect(self, inp: DetectorInput) -> list[Detection]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ReplayBackend(DetectorBackend):
    """Serves detections stored per ``(frame_id, source)``.

    A missing frame or source means "nothing detected".
    """

    name = "replay"
    concurrent_safe = True

    def __init__(self, records: Mapping[tuple[FrameId, int], Sequence[Detection]]):
        self._records = {k: tuple(v) for k, v in records.items()}

    @classmethod
    def from_file(cls, path) -> ReplayBackend:
        from foveadet.formats import read_replay

        return cls(read_replay(path))

    @property
    def records(self) -> dict[tuple[FrameId, int], tuple[Detection, ...]]:
        return dict(self._records)

    def detect(self, inp: DetectorInput) -> list[Detection]:
        return list(self._records.get((inp.frame_id, inp.region.j), ()))


def derive_seed(global_seed: int, frame_id: FrameId, source: int) -> np.random.SeedSequence:
    """Per-call RNG seed, stable across processes (no use of ``hash``)."""
    return np.random.SeedSequence([global_seed & 0xFFFFFFFF, zlib.crc32(repr(frame_id).encode()), source])


class SyntheticBackend(DetectorBackend):
    """Resolution-limited detector driven by ground-truth boxes.

    A ground-truth car is reported for a region when at least ``min_visible``
    of its area lies inside the region and its clipped height, after
    letterboxing the region to ``input_side``, reaches ``h_min`` pixels. The
    reported box is the clipped ground truth with optional corner jitter of
    ``sigma`` pixels (full-image scale); the score grows with apparent height.
    """

    name = "synthetic"
    concurrent_safe = True

    def __init__(
        self,
        ground_truth: Mapping[FrameId, Sequence[GroundTruthBox]],
        h_min: float = 20.0,
        sigma: float = 1.5,
        score_sigma: float = 0.05,
        seed: int = 0,
        min_visible: float = 0.5,
    ):
        if h_min <= 0 or sigma < 0 or score_sigma < 0:
            raise ValueError("h_min must be positive and noise levels non-negative")
        self._gt = {k: tuple(v) for k, v in ground_truth.items()}
        self.h_min = h_min
        self.sigma = sigma
        self.score_sigma = score_sigma
        self.seed = seed
        self.min_visible = min_visible

    def detect(self, inp: DetectorInput) -> list[Detection]:
        region = inp.region
        rbox = Box2D(region.c_u, region.c_v, region.c_w, region.c_h)
        meta = letterbox(region.c_w, region.c_h, inp.input_side)
        rng = np.random.default_rng(derive_seed(self.seed, inp.frame_id, region.j))
        out = []
        for gt in self._gt.get(inp.frame_id, ()):
            clipped = gt.box.intersect(rbox)
            if clipped is None or intersection_area(gt.box, rbox) < self.min_visible * gt.box.area:
                continue
            apparent_h = clipped.h * meta.scale
            if apparent_h < self.h_min:
                continue
            jitter = rng.normal(0.0, self.sigma, 4) if self.sigma > 0 else np.zeros(4)
            score_noise = rng.normal(0.0, self.score_sigma) if self.score_sigma > 0 else 0.0
            box = _jittered_local(clipped, rbox, jitter)
            if box is None:
                continue
            score = min(1.0, apparent_h / (3.0 * self.h_min)) + score_noise
            out.append(Detection(gt.class_label, float(min(1.0, max(0.0, score))), box, region.j))
        return out


def _jittered_local(clipped: Box2D, region: Box2D, jitter: np.ndarray) -> Box2D | None:
    x1 = clipped.x + jitter[0] - region.x
    y1 = clipped.y + jitter[1] - region.y
    x2 = clipped.x2 + jitter[2] - region.x
    y2 = clipped.y2 + jitter[3] - region.y
    x1, x2 = max(0.0, x1), min(float(region.w), x2)
    y1, y2 = max(0.0, y1), min(float(region.h), y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return Box2D(x1, y1, x2 - x1, y2 - y1)


class ExternalProcessBackend(DetectorBackend):
    """Runs ``cmd`` once per region.

    The region is written to the command's stdin as one JSON object
    (``frame_id``, ``source_j``, ``image``, ``crop`` and ``input_side``); the
    command must print a JSON list of ``{class, score, x, y, w, h}`` in
    region-local pixels.
    """

    name = "external"
    concurrent_safe = False

    def __init__(self, cmd: Sequence[str] | str, timeout: float = 60.0):
        self.cmd = cmd
        self.timeout = timeout

    @staticmethod
    def request_payload(inp: DetectorInput) -> dict:
        return {
            "frame_id": inp.frame_id,
            "source_j": inp.region.j,
            "image": inp.image,
            "crop": inp.region.to_dict(),
            "input_side": inp.input_side,
        }

    def detect(self, inp: DetectorInput) -> list[Detection]:
        payload = json.dumps(self.request_payload(inp))
        try:
            proc = subprocess.run(
                self.cmd,
                input=payload,
                capture_output=True,
                text=True,
                timeout=self.timeout,
                shell=isinstance(self.cmd, str),
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailableError(f"external detector failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise BackendUnavailableError(
                f"external detector exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return parse_detection_list(proc.stdout, inp.region.j)


def parse_detection_list(text: str, source: int) -> list[Detection]:
    try:
        items = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReplayFormatError(f"detector output is not JSON: {exc}") from exc
    if not isinstance(items, list):
        raise ReplayFormatError("detector output must be a JSON list")
    try:
        return [Detection.from_dict(it, source=source) for it in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise ReplayFormatError(f"malformed detection entry: {exc}") from exc


def apparent_height(box: Box2D, region: CropSpec, input_side: int = DEFAULT_INPUT_SIDE) -> float:
    """Height in detector-input pixels of a full-image box seen through ``region``."""
    return box.h * letterbox(region.c_w, region.c_h, input_side).scale

