"""Command-line entry points.

    svcalib calibrate --input DIR --config FILE --out params.json
    svcalib stitch    --params params.json --input DIR --out mosaic.png
    svcalib synth     --scene FILE --out DIR
    svcalib evaluate  --est params.json --gt gt.json
    svcalib bench     --input DIR --config FILE --sweep-d -5..5

Exit codes: 0 success, 2 calibration failed, 3 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from .camera_model import ROLES, CameraExtrinsics
from .dataset import generate_sequence, heading_schedule, load_dataset
from .errors import CalibrationFailed, ConfigError, DatasetError
from .evaluate import disturbance_sweep, evaluate, parse_sweep
from .pipeline import PipelineConfig, run_calibration, stitch_surround, timing_report
from .sequence_agg import ParameterSet, write_candidates
from .synth import SceneSpec, default_rig

EXIT_OK, EXIT_FAILED, EXIT_BAD_INPUT = 0, 2, 3

log = logging.getLogger("svcalib")


class BadInput(Exception):
    pass


def _read_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise BadInput(f"{path}: no such file") from e
    except json.JSONDecodeError as e:
        raise BadInput(f"{path}: invalid JSON ({e.msg}, line {e.lineno})") from e


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def _read_params(path) -> ParameterSet:
    """A params.json file, or a dataset directory whose ground truth is used."""
    p = Path(path)
    if p.is_dir():
        g = load_dataset(p)[0]
        return ParameterSet(g.ground_truth())
    try:
        return ParameterSet.from_dict(_read_json(p))
    except (KeyError, TypeError, ValueError) as e:
        raise BadInput(f"{path}: not a parameter set ({e})") from e


def _load_config(path, group) -> PipelineConfig:
    cfg = PipelineConfig.from_dict(_read_json(path)) if path else PipelineConfig()
    if not cfg.intrinsics:
        # fall back to the intrinsics stored with the recording
        cfg.intrinsics = group.intrinsics()
    cfg.check_cameras()
    return cfg


def _group_frames(args):
    groups = load_dataset(args.input)
    if not 0 <= args.group < len(groups):
        raise BadInput(f"group index {args.group} out of range ({len(groups)} groups)")
    g = groups[args.group]
    if set(g.frame_paths) != set(ROLES):
        raise BadInput(f"{g.path}: need frame folders for all four cameras")
    return g, {r: g.frames(r) for r in ROLES}


def _windows(args, group):
    if getattr(args, "meta_windows", False):
        return group.meta.get("windows") or None
    return None


# --------------------------------------------------------------------------
# subcommands


def cmd_calibrate(args) -> int:
    g, frames = _group_frames(args)
    cfg = _load_config(args.config, g)
    if args.threads:
        cfg.threads = args.threads
    report: dict = {}
    ps = run_calibration(frames, cfg, _windows(args, g), report)
    _write_json(args.out, ps.to_dict())
    if args.candidates:
        write_candidates(args.candidates, report["candidates"])
    if args.report:
        rep = {k: v for k, v in report.items() if k != "candidates"}
        _write_json(args.report, rep)
    for stage, t in report["timing"].items():
        log.info("%-26s %9.1f ms  (%d calls)", stage, t["ms"], t["calls"])
    print(f"wrote {args.out} ({len(report['candidates'])} candidates, flags={ps.flags})")
    return EXIT_OK


def cmd_stitch(args) -> int:
    g, frames = _group_frames(args)
    ps = _read_params(args.params)
    n = min(len(v) for v in frames.values())
    if not 0 <= args.frame < n:
        raise BadInput(f"frame {args.frame} out of range (0..{n - 1})")
    intr = PipelineConfig.from_dict(_read_json(args.config)).intrinsics if args.config else g.intrinsics()
    mosaic = stitch_surround({r: frames[r][args.frame] for r in ROLES}, ps, intr, normalize=args.normalize)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(args.out), cv2.cvtColor(mosaic, cv2.COLOR_RGB2BGR))
    print(f"wrote {args.out}")
    return EXIT_OK


def perturbed_priors(gt: dict, angle_deg: float, offset_m: float, seed: int) -> dict:
    """Ground truth with uniform angle errors in +-angle_deg and a fixed position offset."""
    rng = np.random.default_rng(seed)
    out = {}
    for r in ROLES:
        e = gt[r]
        d = rng.uniform(-angle_deg, angle_deg, 3)
        out[r] = CameraExtrinsics(e.pitch + d[0], e.yaw + d[1], e.roll + d[2],
                                  e.x + offset_m, e.y + offset_m, e.z + offset_m)
    return out


def cmd_synth(args) -> int:
    scene = SceneSpec.from_dict(_read_json(args.scene)) if args.scene else SceneSpec()
    rig = default_rig()
    if args.headings:
        yaws = heading_schedule(args.frames, [float(v) for v in args.headings.split(",")])
    else:
        yaws = args.yaw
    out = generate_sequence(scene, rig, args.frames, args.out, speed=args.speed, fps=args.fps, yaw_deg=yaws,
                            supersample=args.supersample)
    priors = perturbed_priors(rig.extrinsics, args.prior_angle_deg, args.prior_offset_m, args.seed)
    cfg = PipelineConfig(intrinsics=rig.intrinsics, priors=priors)
    _write_json(Path(args.out) / "config.json", cfg.to_dict())
    _write_json(Path(args.out) / "gt.json", ParameterSet(rig.extrinsics).to_dict())
    print(f"wrote {out} with config.json and gt.json in {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    rep = evaluate(_read_params(args.est), _read_params(args.gt))
    if args.json:
        print(json.dumps(rep.to_dict(), indent=1))
    else:
        print(rep.table())
    return EXIT_OK


def cmd_bench(args) -> int:
    g, frames = _group_frames(args)
    cfg = _load_config(args.config, g)
    windows = _windows(args, g)
    if args.timing:
        for stage, t in timing_report(frames, cfg, windows).items():
            print(f"{stage:<26}{t['ms']:>10.1f} ms{t['calls']:>5} calls")
        return EXIT_OK
    gt = _read_params(args.gt) if args.gt else ParameterSet(g.ground_truth())
    try:
        ds = parse_sweep(args.sweep_d)
    except ValueError as e:
        raise BadInput(f"--sweep-d: {e}") from e
    rows = []
    for d, rep in disturbance_sweep(frames, cfg, gt, ds, windows):
        if rep is None:
            rows.append({"d": d, "status": "failed"})
        else:
            rows.append({"d": d, "status": "ok", "max_angle_deg": rep.max_angle, "mean_angle_deg": rep.mean_angle,
                         "max_position_m": rep.max_position,
                         **{f"{r.value}_angle_deg": v for r, v in rep.angle_deg.items()},
                         **{f"{r.value}_position_m": v for r, v in rep.position_m.items()}})
        print(f"d={d:+5.1f}  " + ("failed" if rep is None else
                                 f"mean angle {rep.mean_angle:.4f} deg  max position {rep.max_position:.4f} m"))
    if args.out:
        keys = list(dict.fromkeys(k for row in rows for k in row))
        with open(args.out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="svcalib", description="Surround-view extrinsic calibration from lane markings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage timings and window failures")
    sub = p.add_subparsers(dest="cmd", required=True)

    def data_args(sp, config=True):
        sp.add_argument("--input", required=True, help="dataset root or group_XX directory")
        sp.add_argument("--group", type=int, default=0, help="group index when --input holds several (default 0)")
        if config:
            sp.add_argument("--config", help="pipeline config JSON (priors required; intrinsics default "
                                             "to the recording's)")

    sp = sub.add_parser("calibrate", help="estimate all four extrinsics from a recording")
    data_args(sp)
    sp.add_argument("--out", required=True, help="output params.json")
    sp.add_argument("--report", help="optional JSON with diagnostics, weights and stage timings")
    sp.add_argument("--candidates", help="optional JSON-lines file with every per-window candidate")
    sp.add_argument("--meta-windows", action="store_true", help="use the windows listed in meta.json")
    sp.add_argument("--threads", type=int, default=0, help="worker threads (default: config value)")
    sp.set_defaults(fn=cmd_calibrate)

    sp = sub.add_parser("stitch", help="render the top-down mosaic for one frame")
    data_args(sp)
    sp.add_argument("--params", required=True, help="params.json (or a dataset directory for its ground truth)")
    sp.add_argument("--frame", type=int, default=0)
    sp.add_argument("--out", default="mosaic.png")
    sp.add_argument("--normalize", action="store_true", help="match side/rear brightness to the front camera")
    sp.set_defaults(fn=cmd_stitch)

    sp = sub.add_parser("synth", help="render a synthetic recording with ground truth")
    sp.add_argument("--scene", help="scene JSON (default: three lanes with solid markings)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=25)
    sp.add_argument("--speed", type=float, default=10.0, help="m/s")
    sp.add_argument("--fps", type=float, default=25.0)
    sp.add_argument("--yaw", type=float, default=0.0, help="vehicle heading relative to the lanes (deg)")
    sp.add_argument("--headings", help="comma list of headings split evenly over the frames, e.g. -2,-1,0,1,2")
    sp.add_argument("--supersample", type=int, default=2)
    sp.add_argument("--prior-angle-deg", type=float, default=5.0, help="max angle error of the written priors")
    sp.add_argument("--prior-offset-m", type=float, default=0.05, help="position offset of the written priors")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("evaluate", help="compare an estimate with ground truth")
    sp.add_argument("--est", required=True)
    sp.add_argument("--gt", required=True, help="params.json or a dataset directory")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("bench", help="intrinsic-disturbance sweep or stage timings")
    data_args(sp)
    sp.add_argument("--sweep-d", default="0", help="disturbances in px: 'a..b' (integers) or a comma list")
    sp.add_argument("--gt", help="ground truth (default: the recording's)")
    sp.add_argument("--out", help="CSV of the sweep")
    sp.add_argument("--timing", action="store_true", help="print per-stage milliseconds instead of sweeping")
    sp.add_argument("--meta-windows", action="store_true")
    sp.set_defaults(fn=cmd_bench)
    return p


def _join_negative(argv: list[str]) -> list[str]:
    # "--sweep-d -5..5" or "--headings -2,2" would otherwise be read as an unknown option
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--sweep-d", "--headings") and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = _join_negative(list(sys.argv[1:] if argv is None else argv))
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except CalibrationFailed as e:
        print(f"calibration failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (BadInput, ConfigError, DatasetError) as e:
        print(f"bad input: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
