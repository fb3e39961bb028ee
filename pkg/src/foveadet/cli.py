"""Command line entry point (``foveadet``).

Subcommands mirror the pipeline stages so each one can be run and checked
on its own:

    simulate   write a synthetic frame log, calibration, ground truth and config
    plan       crop rectangles for one frame
    detect     per-region detections for every frame (replay-file layout)
    fuse       detect + overlap filter, fused detections per frame
    eval       AP and PR curve of fused detections against ground truth
    pipeline   everything above in one run
    sweep      pipeline once per crop count, table + JSON + PR CSVs + figures

Exit codes: 0 success, 1 configuration error, 2 too many frames failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from foveadet import formats
from foveadet.errors import ConfigError, FoveaError
from foveadet.metrics import evaluate
from foveadet.pathcrop import plan_crops
from foveadet.pipeline import BACKENDS, BackendSpec, PipelineConfig, run_pipeline, sweep_crops
from foveadet.simworld import SceneConfig, generate_scene, render_all

log = logging.getLogger("foveadet")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="pipeline config (JSON)")
    p.add_argument("--crops", type=int, help="number of crops n")
    p.add_argument("--spacing-m", type=float, help="distance d between crop waypoints, metres")
    p.add_argument("--seed", type=int, help="seed for every random draw")
    p.add_argument("--backend", choices=BACKENDS, help="detector backend")
    p.add_argument("--replay", type=Path, help="replay file for --backend replay")
    p.add_argument("--cmd", help="command for --backend external")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foveadet", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic frame log")
    p.add_argument("--scene", type=Path, help="scene config (JSON, SceneConfig fields)")
    p.add_argument("--frames", type=int, help="number of frames")
    p.add_argument("--path-shape", choices=("straight", "arc"))
    p.add_argument("--arc-radius", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("plan", help="crop rectangles for one frame")
    _common(p)
    p.add_argument("--frame", help="frame id (default: first frame)")
    p.add_argument("--figure", action="store_true", help="also draw the plan as PNG")

    for name, helptext in (
        ("detect", "per-region detections for every frame"),
        ("fuse", "detect and fuse, write fused detections"),
        ("pipeline", "full run with evaluation"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)

    p = sub.add_parser("eval", help="score fused detections")
    _common(p)
    p.add_argument("--detections", type=Path, required=True, help="fused detections (JSON Lines)")
    p.add_argument("--gt", type=Path, help="ground truth JSON (default: frame log annotations)")

    p = sub.add_parser("sweep", help="AP for a range of crop counts")
    _common(p)
    p.add_argument("--counts", default="0,1,2,3,4,5", help="comma separated crop counts, or A..B")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return parser


def parse_counts(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    crops = cfg.crops
    if args.crops is not None:
        crops = replace(crops, n=args.crops)
    if args.spacing_m is not None:
        crops = replace(crops, d=args.spacing_m)
    backend = cfg.backend
    if args.backend is not None:
        backend = replace(backend, kind=args.backend)
    if args.seed is not None:
        backend = replace(backend, seed=args.seed)
    if args.replay is not None:
        backend = replace(backend, replay_path=str(args.replay))
    if args.cmd is not None:
        backend = replace(backend, cmd=args.cmd)
    updates = {"crops": crops, "backend": backend}
    if args.out is not None:
        updates["out_dir"] = str(args.out)
    if args.jobs is not None:
        updates["jobs"] = args.jobs
    return replace(cfg, **updates)


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_failures(cfg: PipelineConfig, n_failed: int, n_frames: int) -> int:
    if n_failed:
        log.warning("%d of %d frames failed", n_failed, n_frames)
    if n_frames and n_failed / n_frames > cfg.max_failed_fraction:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    fields = {}
    if args.scene:
        try:
            fields = json.loads(args.scene.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scene config: {exc}") from exc
    for key, val in (("frames", args.frames), ("path_shape", args.path_shape), ("arc_radius", args.arc_radius)):
        if val is not None:
            fields[key] = val
    fields["seed"] = args.seed
    try:
        scene_cfg = SceneConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"bad scene config: {exc}") from exc
    scene = generate_scene(scene_cfg)
    frames = render_all(scene)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    formats.write_frame_log(out / "frames.jsonl", frames)
    formats.write_calibration(out / "calibration.json", scene.calibration)
    formats.write_ground_truth(out / "ground_truth.json", [(f.frame_id, f.gt) for f in frames])
    cfg = PipelineConfig(
        calibration="calibration.json",
        frame_log="frames.jsonl",
        backend=BackendSpec(seed=args.seed),
        out_dir="out",
    )
    (out / "pipeline.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args)
    if not cfg.frame_log or not cfg.calibration:
        raise ConfigError("plan needs a config naming a frame log and a calibration")
    frames = formats.read_frame_log(cfg.frame_log)
    cal = formats.read_calibration(cfg.calibration)
    if not frames:
        raise ConfigError("frame log is empty")
    if args.frame is None:
        frame = frames[0]
    else:
        matches = [f for f in frames if str(f.frame_id) == args.frame]
        if not matches:
            raise ConfigError(f"no frame {args.frame!r} in {cfg.frame_log}")
        frame = matches[0]
    plan = plan_crops(frame, cal.camera, cal.chain(frame.pose), cfg.crops)
    text = json.dumps([c.to_dict() for c in plan], indent=2) + "\n"
    if args.out is not None:
        out = _out_dir(cfg)
        formats.write_crop_plan(out / f"plan_{frame.frame_id}.json", plan)
        if args.figure:
            from foveadet.plotting import plot_crop_plan

            plot_crop_plan(cal.camera.width_px, cal.camera.height_px, plan,
                           out / f"plan_{frame.frame_id}.png", boxes=[g.box for g in frame.gt])
    sys.stdout.write(text)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = load_config(args)
    res = run_pipeline(cfg)
    records = {(f.frame_id, j): dets for f in res.frames for j, dets in f.local}
    out = _out_dir(cfg)
    formats.write_replay(out / "detections.json", records)
    print(f"{sum(len(v) for v in records.values())} region detections over {len(res.frames)} frames -> "
          f"{out / 'detections.json'}")
    return _check_failures(cfg, res.n_failed, res.n_frames)


def cmd_fuse(args) -> int:
    cfg = load_config(args)
    res = run_pipeline(cfg)
    out = _out_dir(cfg)
    formats.write_fused(out / "fused.jsonl", res.fused)
    print(f"{res.n_detections} fused detections over {len(res.frames)} frames -> {out / 'fused.jsonl'}")
    return _check_failures(cfg, res.n_failed, res.n_frames)


def _ap_summary(ap) -> dict:
    return {"ap": ap.ap, "ap_defined": ap.defined, "tp": ap.tp, "fp": ap.fp, "n_gt": ap.n_gt}


def cmd_eval(args) -> int:
    cfg = load_config(args)
    fused = formats.read_fused(args.detections)
    if args.gt is not None:
        gts = [g for _, boxes in formats.read_ground_truth(args.gt) for g in boxes]
    elif cfg.ground_truth:
        gts = [g for _, boxes in formats.read_ground_truth(cfg.ground_truth) for g in boxes]
    elif cfg.frame_log:
        gts = [g for f in formats.read_frame_log(cfg.frame_log) for g in f.gt]
    else:
        raise ConfigError("no ground truth: pass --gt or a config with a frame log")
    gts = [g for g in gts if g.class_label in cfg.classes]
    dets = [(fid, d) for fid, fd in fused for d in fd if d.class_label in cfg.classes]
    ap = evaluate(dets, gts, cfg.eval_iou)
    out = _out_dir(cfg)
    formats.write_pr_csv(out / "pr.csv", ap.curve)
    (out / "ap.json").write_text(json.dumps(_ap_summary(ap), indent=2) + "\n", encoding="utf-8")
    print(f"AP {100 * ap.ap:.2f}%  (TP {ap.tp}, FP {ap.fp}, GT {ap.n_gt})" if ap.defined else "AP undefined (no ground truth)")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args)
    res = run_pipeline(cfg)
    out = _out_dir(cfg)
    formats.write_fused(out / "fused.jsonl", res.fused)
    formats.write_pr_csv(out / "pr.csv", res.ap.curve)
    report = {
        "crops": cfg.crops.n,
        "seed": cfg.backend.seed,
        **_ap_summary(res.ap),
        "n_detections": res.n_detections,
        "n_frames": res.n_frames,
        "n_failed": res.n_failed,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    ap_txt = f"{100 * res.ap.ap:.2f}%" if res.ap.defined else "undefined (no ground truth)"
    print(f"crops {cfg.crops.n}: AP {ap_txt}, {res.n_detections} detections, "
          f"{res.n_frames} frames ({res.n_failed} failed) in {res.wall_time_s:.2f} s")
    return _check_failures(cfg, res.n_failed, res.n_frames)


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    counts = parse_counts(args.counts)
    if not counts or min(counts) < 0:
        raise ConfigError(f"bad crop counts {args.counts!r}")
    report = sweep_crops(cfg, counts)
    out = _out_dir(cfg)
    (out / "sweep.json").write_text(report.to_json(), encoding="utf-8")
    (out / "sweep.txt").write_text(report.table(), encoding="utf-8")
    (out / "timing.json").write_text(
        json.dumps({"wall_time_s": dict(zip(map(str, counts), report.wall_times_s))}, indent=2) + "\n",
        encoding="utf-8",
    )
    for row, res in zip(report.rows, report.results):
        formats.write_pr_csv(out / f"pr_crops{row.crops}.csv", res.ap.curve)
    if not args.no_figures:
        from foveadet.plotting import plot_ap_vs_crops, plot_pr_curves

        plot_ap_vs_crops(report, out / "ap_vs_crops.png")
        plot_pr_curves(
            [(f"{r.crops} crops", res.ap.curve, r.ap) for r, res in zip(report.rows, report.results)],
            out / "pr_curves.png",
        )
    sys.stdout.write(report.table())
    worst = max((r.n_failed / r.n_frames for r in report.rows if r.n_frames), default=0.0)
    return EXIT_PARTIAL if worst > cfg.max_failed_fraction else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "plan": cmd_plan,
    "detect": cmd_detect,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FoveaError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
