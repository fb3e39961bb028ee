"""Batch orchestration: per-frame crop planning, detection, fusion and scoring."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from foveadet.detector import (
    DEFAULT_INPUT_SIDE,
    Detection,
    DetectorBackend,
    DetectorInput,
    ExternalProcessBackend,
    ReplayBackend,
    SyntheticBackend,
    class_filter,
    to_full_image,
)
from foveadet.errors import ConfigError, FoveaError
from foveadet.frames import Calibration
from foveadet.fuse import FusedDetections, build_matrix, overlap_filter
from foveadet.metrics import APResult, evaluate
from foveadet.pathcrop import CropPlanConfig, CropSpec, plan_crops
from foveadet.records import FrameId, FrameRecord, GroundTruthBox

log = logging.getLogger(__name__)

BACKENDS = ("replay", "synthetic", "external")


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "synthetic"
    h_min: float = 20.0
    sigma: float = 1.5
    score_sigma: float = 0.05
    seed: int = 0
    replay_path: str | None = None
    cmd: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BACKENDS:
            raise ConfigError(f"unknown backend {self.kind!r}; choose from {', '.join(BACKENDS)}")


@dataclass(frozen=True)
class PipelineConfig:
    calibration: str | None = None
    frame_log: str | None = None
    ground_truth: str | None = None
    backend: BackendSpec = field(default_factory=BackendSpec)
    crops: CropPlanConfig = field(default_factory=CropPlanConfig)
    classes: tuple[str, ...] = ("car",)
    fusion_iou: float = 0.5
    eval_iou: float = 0.5
    input_side: int = DEFAULT_INPUT_SIDE
    out_dir: str = "out"
    jobs: int = 1
    max_failed_fraction: float = 0.0

    def __post_init__(self) -> None:
        for name in ("fusion_iou", "eval_iou"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.input_side < 1:
            raise ConfigError("input_side must be positive")
        if not 0 <= self.max_failed_fraction <= 1:
            raise ConfigError("max_failed_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path = ".") -> PipelineConfig:
        base = Path(base_dir)

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() else base / p)

        try:
            b = dict(d.get("backend", {}))
            kind = b.pop("kind", "synthetic")
            if "path" in b:
                b["replay_path"] = b.pop("path")
            if b.get("replay_path"):
                b["replay_path"] = resolve(b["replay_path"])
            backend = BackendSpec(kind=kind, **b)
            crops = CropPlanConfig(**d.get("crops", {}))
            return cls(
                calibration=resolve(d.get("calibration")),
                frame_log=resolve(d.get("frame_log")),
                ground_truth=resolve(d.get("ground_truth")),
                backend=backend,
                crops=crops,
                classes=tuple(d.get("classes", ("car",))),
                fusion_iou=float(d.get("fusion_iou", 0.5)),
                eval_iou=float(d.get("eval_iou", 0.5)),
                input_side=int(d.get("input_side", DEFAULT_INPUT_SIDE)),
                out_dir=resolve(d.get("out_dir", "out")),
                jobs=int(d.get("jobs", 1)),
                max_failed_fraction=float(d.get("max_failed_fraction", 0.0)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc

    @classmethod
    def load(cls, path) -> PipelineConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, Path(path).parent)

    def to_dict(self) -> dict:
        b = self.backend
        backend = {"kind": b.kind}
        if b.kind == "synthetic":
            backend.update(h_min=b.h_min, sigma=b.sigma, score_sigma=b.score_sigma, seed=b.seed)
        elif b.kind == "replay":
            backend["path"] = b.replay_path
        else:
            backend["cmd"] = b.cmd
        c = self.crops
        return {
            "calibration": self.calibration,
            "frame_log": self.frame_log,
            "ground_truth": self.ground_truth,
            "backend": backend,
            "crops": {"n": c.n, "d": c.d, "alpha": c.alpha, "v_lift": c.v_lift, "min_crop_px": c.min_crop_px},
            "classes": list(self.classes),
            "fusion_iou": self.fusion_iou,
            "eval_iou": self.eval_iou,
            "input_side": self.input_side,
            "out_dir": self.out_dir,
            "jobs": self.jobs,
            "max_failed_fraction": self.max_failed_fraction,
        }

    def with_crops(self, n: int) -> PipelineConfig:
        return replace(self, crops=replace(self.crops, n=n))


def make_backend(spec: BackendSpec, frames: Sequence[FrameRecord]) -> DetectorBackend:
    if spec.kind == "synthetic":
        gt = {fr.frame_id: fr.gt for fr in frames}
        return SyntheticBackend(gt, h_min=spec.h_min, sigma=spec.sigma, score_sigma=spec.score_sigma, seed=spec.seed)
    if spec.kind == "replay":
        if not spec.replay_path:
            raise ConfigError("replay backend needs a replay file path")
        return ReplayBackend.from_file(spec.replay_path)
    if not spec.cmd:
        raise ConfigError("external backend needs a command")
    return ExternalProcessBackend(spec.cmd)


@dataclass(frozen=True)
class FrameOutput:
    frame_id: FrameId
    regions: tuple[CropSpec, ...]
    local: tuple[tuple[int, tuple[Detection, ...]], ...]
    fused: FusedDetections


@dataclass
class PipelineResult:
    frames: list[FrameOutput]
    ap: APResult
    n_frames: int
    failed: list[tuple[FrameId, str]]
    wall_time_s: float = 0.0

    @property
    def n_failed(self) -> int:
        return len(self.failed)

    @property
    def fused(self) -> list[tuple[FrameId, FusedDetections]]:
        return [(f.frame_id, f.fused) for f in self.frames]

    @property
    def n_detections(self) -> int:
        return sum(len(f.fused) for f in self.frames)


def process_frame(
    frame: FrameRecord,
    calibration: Calibration,
    backend: DetectorBackend,
    cfg: PipelineConfig,
) -> FrameOutput:
    cam = calibration.camera
    regions = [CropSpec.whole_image(cam)]
    regions += plan_crops(frame, cam, calibration.chain(frame.pose), cfg.crops)
    local, rows = [], []
    for region in regions:
        dets = backend.detect(DetectorInput(frame.frame_id, region, frame.image, cfg.input_side))
        local.append((region.j, tuple(dets)))
        full = [to_full_image(d, region) for d in dets]
        rows.append((region.j, class_filter(full, cfg.classes)))
    fused = overlap_filter(build_matrix(rows), cfg.fusion_iou)
    return FrameOutput(frame.frame_id, tuple(regions), tuple(local), fused)


def run_pipeline(
    cfg: PipelineConfig,
    frames: Sequence[FrameRecord] | None = None,
    calibration: Calibration | None = None,
    backend: DetectorBackend | None = None,
    ground_truth: Sequence[GroundTruthBox] | None = None,
) -> PipelineResult:
    """Run every frame through plan -> detect -> remap -> filter -> fuse, then score.

    Frames, calibration, backend and ground truth are loaded from the paths in
    ``cfg`` unless passed in. Frames that raise are logged and skipped; their
    ground truth is left out of the evaluation.
    """
    from foveadet import formats

    t0 = time.perf_counter()
    if frames is None:
        if not cfg.frame_log:
            raise ConfigError("no frame log given")
        frames = formats.read_frame_log(cfg.frame_log)
    if calibration is None:
        if not cfg.calibration:
            raise ConfigError("no calibration given")
        calibration = formats.read_calibration(cfg.calibration)
    if backend is None:
        backend = make_backend(cfg.backend, frames)
    if ground_truth is None and cfg.ground_truth:
        ground_truth = [g for _, boxes in formats.read_ground_truth(cfg.ground_truth) for g in boxes]

    def work(fr: FrameRecord):
        try:
            return process_frame(fr, calibration, backend, cfg)
        except (FoveaError, ValueError) as exc:
            log.warning("frame %r skipped: %s", fr.frame_id, exc)
            return exc

    jobs = cfg.jobs if backend.concurrent_safe else 1
    if jobs > 1 and len(frames) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, frames))
    else:
        results = [work(fr) for fr in frames]

    outputs, failed = [], []
    for fr, res in zip(frames, results):
        if isinstance(res, Exception):
            failed.append((fr.frame_id, str(res)))
        else:
            outputs.append(res)

    ok_ids = {o.frame_id for o in outputs}
    if ground_truth is None:
        gts = [g for fr in frames if fr.frame_id in ok_ids for g in fr.gt]
    else:
        gts = [g for g in ground_truth if g.frame_id in ok_ids]
    gts = [g for g in gts if g.class_label in cfg.classes]
    dets = [(o.frame_id, d) for o in outputs for d in o.fused]
    ap = evaluate(dets, gts, cfg.eval_iou)
    return PipelineResult(outputs, ap, len(frames), failed, time.perf_counter() - t0)


@dataclass(frozen=True)
class SweepRow:
    crops: int
    ap: float
    ap_defined: bool
    tp: int
    fp: int
    n_gt: int
    n_detections: int
    n_frames: int
    n_failed: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    seed: int
    wall_times_s: list[float] = field(default_factory=list)
    results: list[PipelineResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        """Machine-readable report; timings are left out so reruns compare equal."""
        return {
            "seed": self.seed,
            "rows": [
                {
                    "crops": r.crops,
                    "ap": r.ap,
                    "ap_defined": r.ap_defined,
                    "tp": r.tp,
                    "fp": r.fp,
                    "n_gt": r.n_gt,
                    "n_detections": r.n_detections,
                    "n_frames": r.n_frames,
                    "n_failed": r.n_failed,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        header = f"{'crops':>5}  {'AP %':>7}  {'TP':>6}  {'FP':>6}  {'GT':>6}  {'dets':>6}  {'failed':>6}  {'time s':>7}"
        lines = [header, "-" * len(header)]
        times = self.wall_times_s or [float("nan")] * len(self.rows)
        for r, t in zip(self.rows, times):
            ap = f"{100 * r.ap:7.2f}" if r.ap_defined else f"{'n/a':>7}"
            lines.append(
                f"{r.crops:>5}  {ap}  {r.tp:>6}  {r.fp:>6}  {r.n_gt:>6}  {r.n_detections:>6}  {r.n_failed:>6}  {t:7.3f}"
            )
        return "\n".join(lines) + "\n"


def sweep_crops(
    cfg: PipelineConfig,
    counts: Sequence[int] = range(6),
    frames: Sequence[FrameRecord] | None = None,
    calibration: Calibration | None = None,
    backend: DetectorBackend | None = None,
) -> SweepReport:
    """One pipeline run per crop count, everything else held fixed."""
    from foveadet import formats

    if frames is None:
        if not cfg.frame_log:
            raise ConfigError("no frame log given")
        frames = formats.read_frame_log(cfg.frame_log)
    if calibration is None:
        if not cfg.calibration:
            raise ConfigError("no calibration given")
        calibration = formats.read_calibration(cfg.calibration)
    if backend is None:
        backend = make_backend(cfg.backend, frames)

    rows, times, results = [], [], []
    for n in counts:
        res = run_pipeline(cfg.with_crops(int(n)), frames, calibration, backend)
        a = res.ap
        rows.append(SweepRow(int(n), a.ap, a.defined, a.tp, a.fp, a.n_gt, res.n_detections, res.n_frames, res.n_failed))
        times.append(res.wall_time_s)
        results.append(res)
    return SweepReport(rows, cfg.backend.seed, times, results)
