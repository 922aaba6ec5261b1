"""Calibrate a rendered clean or dotted sequence and print the errors per camera."""

from __future__ import annotations

import argparse
import json
import time

from _scenes import clean, config, dotted
from svcalib.evaluate import evaluate
from svcalib.pipeline import run_calibration


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scene", choices=["clean", "dotted"])
    ap.add_argument("--seed", type=int, default=0, help="seed of the perturbed priors")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--report", help="write diagnostics JSON here")
    args = ap.parse_args()

    rig, frames, windows = clean() if args.scene == "clean" else dotted()
    cfg = config(rig, args.seed)
    cfg.threads = args.threads
    report: dict = {}
    t = time.perf_counter()
    ps = run_calibration(frames, cfg, windows, report)
    dt = time.perf_counter() - t
    rep = evaluate(ps, rig.extrinsics, scene=args.scene)
    print(rep.table())
    print(f"worst angle {rep.max_angle:.4f} deg, worst position {rep.max_position:.4f} m, {dt:.1f} s, "
          f"{len(report['candidates'])} candidates, flags {ps.flags}")
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"errors": rep.to_dict(), "seconds": dt, "timing": report["timing"],
                       "diagnostics": report["diagnostics"]}, f, indent=1, default=str)


if __name__ == "__main__":
    main()
