"""Shared synthetic sequences for the scripts (rendered in memory)."""

from __future__ import annotations

from svcalib.camera_model import ROLES
from svcalib.cli import perturbed_priors
from svcalib.dataset import heading_schedule
from svcalib.lane_types import LaneType
from svcalib.pipeline import PipelineConfig
from svcalib.synth import SceneSpec, default_rig, render_fisheye_view

HEADINGS = [-2.0, -1.0, 0.0, 1.0, 2.0]
STEP_M = 0.4  # 10 m/s at 25 fps


def render(scene, rig, poses):
    return {r: [render_fisheye_view(scene, r, rig, vehicle_pose=p) for p in poses] for r in ROLES}


def clean(per_window: int = 2):
    """Solid markings, one window per heading in HEADINGS."""
    rig = default_rig()
    n = per_window * len(HEADINGS)
    yaws = heading_schedule(n, HEADINGS)
    frames = render(SceneSpec(), rig, [(0.0, i * STEP_M, yaws[i]) for i in range(n)])
    windows = [(i * per_window, (i + 1) * per_window) for i in range(len(HEADINGS))]
    return rig, frames, windows


def dotted(n: int = 25):
    rig = default_rig()
    scene = SceneSpec(marking_types=[LaneType.SINGLE_WHITE_DOTTED] * 4)
    return rig, render(scene, rig, [(0.0, i * STEP_M, 0.0) for i in range(n)]), [(0, n)]


def config(rig, seed: int = 0) -> PipelineConfig:
    return PipelineConfig(intrinsics=rig.intrinsics, priors=perturbed_priors(rig.extrinsics, 5.0, 0.05, seed))
