"""Command-line front end: simulate, calibrate, track, evaluate, ablate.

Every command writes into the ``--out`` directory and leaves a
``<command>.manifest.json`` next to its outputs.  Exit status is 0 on
success, 2 on usage or configuration errors and 1 on data errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .conformal import apply_quantiles, calibrate
from .core import ConfigError, UQTrackError
from .formats import (
    DataError,
    gt_frame_range,
    read_config,
    read_detections,
    read_gt,
    read_quantiles,
    read_timings,
    read_tracks,
    write_detections,
    write_gt,
    write_json,
    write_manifest,
    write_quantiles,
    write_text,
    write_timings,
    write_tracks,
)
from .metrics import UNCERTAINTY_THRESHOLDS, EvalReport, evaluate_detections, evaluate_tracks, hota
from .simgen import ScenarioConfig, generate_scene
from .tracker import BASES, TrackerConfig, run_scene

TIMINGS_NAME = "timings.jsonl"

# Table rows of the toggle grid as (cp, sdkf, nllai); CP alone only rescales
# sigma and leaves boxes and ids unchanged, so that row is left out.
ABLATION_ROWS = (
    (False, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)


class UsageError(UQTrackError):
    pass


def _section(path, name: str) -> dict:
    if path is None:
        return {}
    doc = read_config(path)
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{path}: [{name}] must be a table")
    return sec


def _tracker_config(args) -> TrackerConfig:
    kw = dict(_section(args.config, "tracker"))
    for flag, key in (("tracker", "base"), ("cp", "use_cp"), ("sdkf", "use_sdkf"), ("nllai", "use_nllai"),
                      ("tau", "tau"), ("iou", "iou_threshold")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    return TrackerConfig.from_mapping(kw)


def _finish(args, command: str, out: Path, inputs: dict, outputs: dict, t0: float, seed=None, settings=None):
    manifest = out / f"{command}.manifest.json"
    write_manifest(manifest, command, args.config, inputs, outputs, seed, time.perf_counter() - t0, args.argv,
                   __version__)
    if settings is not None:
        write_json(out / f"{command}.settings.json", settings)


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    kw = dict(_section(args.config, "scenario"))
    if args.seed is not None:
        kw["seed"] = args.seed
    cfg = ScenarioConfig.from_mapping(kw)
    gt, scene = generate_scene(cfg)
    out = Path(args.out)
    gt_path, det_path = out / "gt.jsonl", out / "detections.jsonl"
    write_gt(gt_path, gt)
    write_detections(det_path, scene.frames)
    _finish(args, "simulate", out, {}, {"gt": gt_path, "detections": det_path}, t0, cfg.seed, cfg.to_dict())
    print(f"simulate: {len(gt)} ground-truth boxes, "
          f"{sum(len(d) for _, d in scene.frames)} detections over {cfg.n_frames} frames -> {out}")
    return 0


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    _require(args, "detections", "gt")
    if not 0 < args.alpha < 1:
        raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
    gt = read_gt(args.gt)
    scene = read_detections(args.detections, gt_frame_range(gt))
    q = calibrate(scene, gt, args.alpha, match_iou=0.5 if args.iou is None else args.iou)
    out = Path(args.out)
    path = out / "quantiles.json"
    write_quantiles(path, q)
    _finish(args, "calibrate", out, {"detections": args.detections, "gt": args.gt}, {"quantiles": path}, t0, args.seed)
    print(f"calibrate: alpha={q.alpha:g} M={q.calibration_count} q=" + ", ".join(f"{v:.4g}" for v in q.quantiles))
    return 0


def cmd_track(args) -> int:
    t0 = time.perf_counter()
    _require(args, "detections")
    cfg = _tracker_config(args)
    q = _quantiles_for(cfg, args)
    scene = read_detections(args.detections)
    records, timings = run_scene(scene, cfg, q)
    out = Path(args.out)
    tracks, tpath = out / "tracks.jsonl", out / TIMINGS_NAME
    write_tracks(tracks, records)
    write_timings(tpath, [f for f, _ in scene.frames], timings)
    _finish(args, "track", out, {"detections": args.detections, "quantiles": args.quantiles},
            {"tracks": tracks, "timings": tpath}, t0, args.seed, cfg.to_dict())
    print(f"track: {len(records)} records, {len({r.track_id for r in records})} tracks -> {tracks}")
    return 0


def _report_row(rep: EvalReport) -> dict:
    d = rep.to_dict()
    row = {k: d[k] for k in ("hota", "deta", "assa", "mota", "motp", "id_switches", "false_positives",
                             "false_negatives")}
    for thr in UNCERTAINTY_THRESHOLDS:
        key = f"{thr:g}"
        row[f"nll@{key}"] = d["nll_at"].get(key)
        row[f"crps@{key}"] = d["crps_at"].get(key)
    return row


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    from .plotting import plot_hota_alpha

    t0 = time.perf_counter()
    _require(args, "gt")
    gt = read_gt(args.gt)
    out = Path(args.out)
    outputs = {"report": out / "report.json", "table": out / "report.csv"}
    if args.detections_mode:
        _require(args, "detections")
        scene = read_detections(args.detections, gt_frame_range(gt))
        frames = scene.frames
        if args.quantiles:
            q = read_quantiles(args.quantiles)
            frames = [(f, tuple(apply_quantiles(d, q) for d in dets)) for f, dets in frames]
        rep = evaluate_detections(gt, frames)
        inputs = {"gt": args.gt, "detections": args.detections, "quantiles": args.quantiles}
    else:
        _require(args, "tracks")
        records = read_tracks(args.tracks)
        sibling = Path(args.tracks).with_name(TIMINGS_NAME)
        timings = read_timings(sibling) if sibling.exists() else None
        rep = evaluate_tracks(gt, records, timings)
        h = hota(gt, records)
        outputs["hota_alpha"] = out / "hota_alpha.png"
        plot_hota_alpha(h.alphas, h.hota_alpha, h.deta_alpha, h.assa_alpha, outputs["hota_alpha"],
                        title=f"HOTA {h.hota:.3f}")
        inputs = {"gt": args.gt, "tracks": args.tracks, "timings": sibling if timings else None}
    write_json(outputs["report"], rep.to_dict())
    row = _report_row(rep)
    row["fps"] = rep.fps
    write_text(outputs["table"], _csv([row]))
    _finish(args, "evaluate", out, inputs, outputs, t0, args.seed)
    sys.stdout.write(_csv([row]))
    return 0


def cmd_ablate(args) -> int:
    from .plotting import plot_ablation

    t0 = time.perf_counter()
    _require(args, "detections", "gt", "quantiles")
    gt = read_gt(args.gt)
    scene = read_detections(args.detections, gt_frame_range(gt))
    q = read_quantiles(args.quantiles)
    base_cfg = _tracker_config(argparse.Namespace(**{**vars(args), "cp": None, "sdkf": None, "nllai": None}))
    rows, fps_rows, labels = [], [], []
    for cp, sdkf, nllai in ABLATION_ROWS:
        cfg = replace(base_cfg, use_cp=cp, use_sdkf=sdkf, use_nllai=nllai)
        records, timings = run_scene(scene, cfg, q if cp else None)
        rep = evaluate_tracks(gt, records, timings)
        flags = {"base": cfg.base, "cp": int(cp), "sdkf": int(sdkf), "nllai": int(nllai)}
        rows.append({**flags, **_report_row(rep)})
        fps_rows.append({**flags, "fps": rep.fps})
        labels.append("+".join(n for n, on in (("CP", cp), ("SDKF", sdkf), ("NLLAI", nllai)) if on) or "base")
    out = Path(args.out)
    outputs = {"table": out / "ablation.csv", "fps": out / "ablation_fps.csv", "figure": out / "ablation.png"}
    write_text(outputs["table"], _csv(rows))
    write_text(outputs["fps"], _csv(fps_rows))
    plot_ablation(labels, {k: [r[k] for r in rows] for k in ("hota", "mota", "motp")}, outputs["figure"],
                  title=f"ablation, {base_cfg.base} base")
    _finish(args, "ablate", out, {"detections": args.detections, "gt": args.gt, "quantiles": args.quantiles},
            outputs, t0, args.seed, base_cfg.to_dict())
    sys.stdout.write(_csv(rows))
    return 0


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required flag(s) " + ", ".join("--" + m for m in missing))


def _quantiles_for(cfg: TrackerConfig, args):
    if cfg.use_cp:
        if args.quantiles is None:
            raise UsageError("--cp needs --quantiles")
        return read_quantiles(args.quantiles)
    return None


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uqtrack", description="Uncertainty-aware multi-object tracking toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        if config:
            sp.add_argument("--config", default=None, help="TOML config with [scenario] and/or [tracker] tables")

    def tracker_flags(sp, toggles=True):
        sp.add_argument("--tracker", choices=BASES, default=None)
        if toggles:
            for name in ("cp", "sdkf", "nllai"):
                sp.add_argument(f"--{name}", action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--tau", type=float, default=None)
        sp.add_argument("--iou", type=float, default=None, help="association IoU threshold")

    sp = sub.add_parser("simulate", help="generate a synthetic scene")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="fit conformal quantiles")
    common(sp, config=False)
    sp.add_argument("--detections")
    sp.add_argument("--gt")
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--iou", type=float, default=None, help="IoU for pairing detections with ground truth")
    sp.set_defaults(func=cmd_calibrate, config=None)

    sp = sub.add_parser("track", help="run the tracker over a detection file")
    common(sp)
    sp.add_argument("--detections")
    sp.add_argument("--quantiles")
    tracker_flags(sp)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="score tracks or detections against ground truth")
    common(sp, config=False)
    sp.add_argument("--gt")
    sp.add_argument("--tracks")
    sp.add_argument("--detections")
    sp.add_argument("--quantiles", help="rectify detections first (with --detections-mode)")
    sp.add_argument("--detections-mode", action="store_true")
    sp.set_defaults(func=cmd_evaluate, config=None)

    sp = sub.add_parser("ablate", help="run the CP/SDKF/NLLAI toggle grid")
    common(sp)
    sp.add_argument("--detections")
    sp.add_argument("--gt")
    sp.add_argument("--quantiles")
    tracker_flags(sp, toggles=False)
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    args.argv = argv
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"uqtrack {args.command}: error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"uqtrack {args.command}: data error: {e}", file=sys.stderr)
        return 1
    except UQTrackError as e:
        print(f"uqtrack {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
