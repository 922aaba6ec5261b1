"""Detection time on four 1280x720 frames, and per-stage times of one window."""

from __future__ import annotations

import argparse
import time

import numpy as np

from _scenes import clean, config
from svcalib.camera_model import ROLES, FisheyeIntrinsics
from svcalib.pipeline import PipelineConfig, detect_camera, timing_report
from svcalib.synth import RigSpec, SceneSpec, render_fisheye_view


def detection_ms(repeats: int) -> list[float]:
    rig = clean(per_window=1)[0]
    s = 1280 / 960
    intr = {r: FisheyeIntrinsics(i.fx * s, i.fy * s, (i.cx + 0.5) * s - 0.5, (i.cy + 0.5) * s - 0.5, i.k, 1280, 720)
            for r, i in rig.intrinsics.items()}
    big = RigSpec(intr, rig.extrinsics)
    frames = {r: render_fisheye_view(SceneSpec(), r, big) for r in ROLES}
    cfg = PipelineConfig()
    out = []
    for k in range(repeats + 1):
        t = time.perf_counter()
        for r in ROLES:
            detect_camera([frames[r]], intr[r], r, cfg)
        if k:  # the first pass builds the undistortion maps
            out.append(1000.0 * (time.perf_counter() - t))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    ms = detection_ms(args.repeats)
    print(f"detection, four 1280x720 frames: min {min(ms):.1f} ms, median {np.median(ms):.1f} ms")
    rig, frames, windows = clean(per_window=2)
    s, e = windows[len(windows) // 2]
    rep = timing_report({r: v[s:e] for r, v in frames.items()}, config(rig))
    for stage, t in rep.items():
        print(f"{stage:<26}{t['ms']:>10.1f} ms{t['calls']:>5} calls")


if __name__ == "__main__":
    main()
