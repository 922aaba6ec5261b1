"""Intrinsic-disturbance sweep on the heading-0 window of the clean sequence."""

from __future__ import annotations

import argparse
import csv

import numpy as np

from _scenes import clean, config
from svcalib.evaluate import disturbance_sweep, parse_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", default="0,1,-1,3,-3,5,-5", help="disturbances in px ('a..b' or a comma list)")
    ap.add_argument("--all-windows", action="store_true", help="use every heading window, not just heading 0")
    ap.add_argument("--out", help="CSV with one row per d")
    args = ap.parse_args()

    rig, frames, windows = clean()
    if not args.all_windows:
        s, e = windows[len(windows) // 2]
        frames = {r: v[s:e] for r, v in frames.items()}
        windows = None
    rows = []
    for d, rep in disturbance_sweep(frames, config(rig), rig.extrinsics, parse_sweep(args.d), windows):
        if rep is None:
            print(f"d={d:+.1f}  failed")
            rows.append({"d": d})
            continue
        print(f"d={d:+.1f}  mean angle {rep.mean_angle:.4f} deg  worst angle {rep.max_angle:.4f} deg  "
              f"worst position {rep.max_position:.4f} m")
        rows.append({"d": d, "mean_angle_deg": rep.mean_angle, "max_angle_deg": rep.max_angle,
                     "max_position_m": rep.max_position})
    by = {r["d"]: r.get("mean_angle_deg", np.nan) for r in rows}
    mags = sorted({abs(d) for d in by})
    print("|d|  mean over signs: " + ", ".join(f"{m:g}: {np.nanmean([by.get(m, np.nan), by.get(-m, np.nan)]):.4f}"
                                               for m in mags))
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["d", "mean_angle_deg", "max_angle_deg", "max_position_m"])
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
