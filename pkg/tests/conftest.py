from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import settings

from oracles import perturbed_priors

from svcalib.camera_model import ROLES, PinholeSpec
from svcalib.dataset import heading_schedule
from svcalib.lane_types import LaneType
from svcalib.pipeline import PipelineConfig, run_calibration
from svcalib.synth import SceneSpec, Wall, default_rig, render_fisheye_view

settings.register_profile("svcalib", deadline=None, max_examples=60)
settings.load_profile("svcalib")

HEADINGS = [-2.0, -1.0, 0.0, 1.0, 2.0]
PER_WINDOW = 2
STEP_M = 0.4  # 10 m/s at 25 fps


def render_frames(scene, rig, poses):
    return {r: [render_fisheye_view(scene, r, rig, vehicle_pose=p) for p in poses] for r in ROLES}


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def pinholes(rig):
    return {r: PinholeSpec.from_fisheye(rig.intrinsics[r]) for r in ROLES}


@pytest.fixture(scope="session")
def clean_sequence(rig):
    """Solid markings, five windows of two frames at headings -2..2 deg."""
    n = PER_WINDOW * len(HEADINGS)
    yaws = heading_schedule(n, HEADINGS)
    frames = render_frames(SceneSpec(), rig, [(0.0, i * STEP_M, yaws[i]) for i in range(n)])
    windows = [(i * PER_WINDOW, (i + 1) * PER_WINDOW) for i in range(len(HEADINGS))]
    return frames, windows


@pytest.fixture(scope="session")
def clean_config(rig):
    return PipelineConfig(intrinsics=rig.intrinsics, priors=perturbed_priors(rig, seed=0))


@pytest.fixture(scope="session")
def clean_run(clean_sequence, clean_config):
    """One full calibration of the clean sequence: (params, report, seconds)."""
    frames, windows = clean_sequence
    report: dict = {}
    t = time.perf_counter()
    ps = run_calibration(frames, clean_config, windows, report)
    return ps, report, time.perf_counter() - t


@pytest.fixture(scope="session")
def straight_window(clean_sequence):
    """The heading-0 window of the clean sequence."""
    frames, windows = clean_sequence
    s, e = windows[HEADINGS.index(0.0)]
    return {r: v[s:e] for r, v in frames.items()}


@pytest.fixture(scope="session")
def dotted_sequence(rig):
    scene = SceneSpec(marking_types=[LaneType.SINGLE_WHITE_DOTTED] * 4)
    return render_frames(scene, rig, [(0.0, i * STEP_M, 0.0) for i in range(25)])


@pytest.fixture(scope="session")
def uniform_window(rig):
    return render_frames(SceneSpec(texture="uniform"), rig, [(0.0, i * STEP_M, 0.0) for i in range(4, 6)])


@pytest.fixture(scope="session")
def wall_window(rig):
    # a wall just beyond the left marking, inside the left overlap RoIs
    scene = SceneSpec(distractors=[Wall((-2.1, -40.0), (-2.1, 40.0), height=1.5)])
    return render_frames(scene, rig, [(0.0, i * STEP_M, 0.0) for i in range(4, 6)])


@pytest.fixture(scope="session")
def single_frames(rig):
    """One heading-0 frame per camera of the default scene."""
    return {r: v[0] for r, v in render_frames(SceneSpec(), rig, [(0.0, 0.0, 0.0)]).items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ---------------------------------------------------------------

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a numbered acceptance result, print it, then assert it."""

    def check(n: int, ok: bool, detail: str) -> None:
        ok = bool(ok)
        _CRITERIA[n] = (ok, detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
