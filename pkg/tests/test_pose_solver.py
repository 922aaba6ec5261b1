from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import MARKING_W, analytic_lines, random_extrinsics
from svcalib.camera_model import ROLES, CameraExtrinsics, CameraRole, PinholeSpec, decompose_local_rotation
from svcalib.errors import DependencyOrderError, NoIntersectionError
from svcalib.pose_solver import (
    PlaneLaneSet,
    SolverConfig,
    apply_increment,
    cost_pitch,
    cost_pitch_side,
    cost_roll,
    cost_roll_side,
    cost_yaw,
    cost_yaw_side,
    grid_sweep,
    line_search,
    marking_width,
    plane_lanes,
    solve_pose_front_rear,
    solve_pose_side,
    substep,
)
from svcalib.synth import default_rig

RIG = default_rig()
PH = {r: PinholeSpec.from_fisheye(RIG.intrinsics[r]) for r in ROLES}
D_L = MARKING_W / SolverConfig().mpp  # marking width in plane pixels


def vertical_set(xs, y0=0.0, y1=-400.0):
    return PlaneLaneSet.from_points([[x, y0] for x in xs], [[x, y1] for x in xs])


# -- costs -------------------------------------------------------------------------


def test_front_costs_on_parallel_borders():
    ls = vertical_set([0, 15, 350, 365])
    assert cost_pitch(ls) == pytest.approx(4.0, abs=1e-12)
    assert cost_yaw(ls) == pytest.approx(0.0, abs=1e-12)
    assert cost_roll(ls) == pytest.approx(0.0, abs=1e-12)
    assert marking_width(ls) == pytest.approx(15.0)


def test_front_costs_on_splayed_borders():
    # left marking 15 px wide, right 20 px; the outer borders lean out by 45 deg
    a = [[0, 0], [15, 0], [350, 0], [370, 0]]
    b = [[-400, -400], [15, -400], [350, -400], [770, -400]]
    ls = PlaneLaneSet.from_points(a, b)
    assert cost_yaw(ls) == pytest.approx(5.0)
    assert cost_pitch(ls) == pytest.approx(2.0 + 2.0 * np.cos(np.pi / 4), abs=1e-12)
    assert cost_roll(ls) == pytest.approx(2.0 * np.sin(np.pi / 4), abs=1e-12)


def test_side_costs():
    ls = PlaneLaneSet.from_points([[0, 0], [0, 15]], [[200, 0], [200, 15]], CameraRole.LEFT)
    assert cost_roll_side(ls) == pytest.approx(2.0)
    assert cost_yaw_side(ls) == pytest.approx(0.0)
    assert cost_pitch_side(ls, 15.0) == pytest.approx(0.0)
    assert cost_pitch_side(ls, 12.0) == pytest.approx(3.0)
    wedge = PlaneLaneSet.from_points([[0, 0], [0, 15]], [[200, 0], [200, 25]], CameraRole.LEFT)
    assert cost_yaw_side(wedge) == pytest.approx(10.0)
    with pytest.raises(DependencyOrderError):
        cost_pitch_side(ls, None)


def test_side_stage_requires_marking_width():
    with pytest.raises(DependencyOrderError):
        solve_pose_side(RIG.extrinsics[CameraRole.LEFT], np.zeros((2, 3)), None, PH[CameraRole.LEFT])


def test_station_parallel_border_is_reported():
    role = CameraRole.FRONT
    ext = RIG.extrinsics[role]
    # an image line that maps to a plane row cannot cross the row stations
    from svcalib.camera_model import ground_homography, local_plane, transport_line_to_image

    plane = local_plane(role, ext)
    H = ground_homography(ext, role, PH[role], plane)
    row = transport_line_to_image(H, np.array([0.0, 1.0, -(plane.origin_px[1] - 300.0)]))
    with pytest.raises(NoIntersectionError):
        plane_lanes(np.array([row]), ext, role, PH[role])


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(initial_step=0.001, min_step=0.01)
    with pytest.raises(ValueError):
        SolverConfig(iter_max=0)
    with pytest.raises(ValueError):
        SolverConfig(near_m=5.0, far_m=2.0)


# -- increments and line search ------------------------------------------------------


def test_increment_composition():
    R = RIG.extrinsics[CameraRole.FRONT].local_rotation()
    p, w, r = decompose_local_rotation(R)
    np.testing.assert_allclose(decompose_local_rotation(apply_increment(R, "pitch", 1.5)), (p + 1.5, w, r), atol=1e-9)
    np.testing.assert_allclose(decompose_local_rotation(apply_increment(R, "roll", -2.0)), (p, w, r - 2.0), atol=1e-9)
    with pytest.raises(ValueError):
        apply_increment(R, "tilt", 1.0)


@given(st.floats(-4.0, 4.0))
def test_line_search_finds_quadratic_minimum(x0):
    x, fx = line_search(lambda x: (x - x0) ** 2, False, 0.5, 0.001)
    assert abs(x - x0) <= 0.001
    x, fx = line_search(lambda x: -abs(x - x0), True, 0.5, 0.001)
    assert abs(x - x0) <= 0.001 and fx == pytest.approx(-abs(x - x0))


def test_line_search_respects_feasibility():
    x, _ = line_search(lambda x: (x - 3.0) ** 2, False, 0.5, 0.001, feasible=lambda x: x <= 1.2)
    assert 1.2 - 0.001 <= x <= 1.2


# -- recovery from exact borders ---------------------------------------------------------


@pytest.mark.parametrize("role", ROLES, ids=lambda r: r.value)
def test_ground_truth_is_a_fixed_point(role):
    gt = RIG.extrinsics[role]
    L = analytic_lines(role, gt, PH[role])
    ls = plane_lanes(L, gt, role, PH[role])
    if role.is_side:
        assert cost_yaw_side(ls) == pytest.approx(0.0, abs=1e-6)
        assert cost_roll_side(ls) == pytest.approx(2.0, abs=1e-9)
        assert cost_pitch_side(ls, D_L) == pytest.approx(0.0, abs=1e-6)
        res = solve_pose_side(gt, L, D_L, PH[role], role)
    else:
        assert cost_pitch(ls) == pytest.approx(4.0, abs=1e-9)
        assert cost_yaw(ls) == pytest.approx(0.0, abs=1e-6)
        assert cost_roll(ls) == pytest.approx(0.0, abs=1e-6)
        assert marking_width(ls) == pytest.approx(D_L, abs=1e-6)
        res = solve_pose_front_rear(gt, L, PH[role], role)
    assert res.converged
    np.testing.assert_allclose(res.ext.angles, gt.angles, atol=1e-9)


@pytest.mark.parametrize("role", ROLES, ids=lambda r: r.value)
@settings(max_examples=15)
@given(seed=st.integers(0, 2**31))
def test_recovery_from_perturbed_start(role, seed):
    rng = np.random.default_rng(seed)
    gt = random_extrinsics(rng, role)
    L = analytic_lines(role, gt, PH[role])
    d = rng.uniform(-3.0, 3.0, 3)
    e0 = CameraExtrinsics(gt.pitch + d[0], gt.yaw + d[1], gt.roll + d[2], gt.x, gt.y, gt.z)
    if role.is_side:
        res = solve_pose_side(e0, L, D_L, PH[role], role)
    else:
        res = solve_pose_front_rear(e0, L, PH[role], role)
    assert np.abs(np.subtract(res.ext.angles, gt.angles)).max() < 0.01


def test_solution_stays_in_bounds():
    role = CameraRole.FRONT
    gt = RIG.extrinsics[role]
    cfg = SolverConfig(bounds={"pitch": (20.0, 90.0), "yaw": (-10.0, 10.0), "roll": (-0.5, 0.5)})
    L = analytic_lines(role, CameraExtrinsics(gt.pitch, gt.yaw, 2.0, gt.x, gt.y, gt.z), PH[role])
    start = CameraExtrinsics(gt.pitch, gt.yaw, 0.0, gt.x, gt.y, gt.z)
    res = solve_pose_front_rear(start, L, PH[role], role, cfg)
    # the roll wants to reach 2 deg but stops at the bound
    assert 0.45 <= res.ext.roll <= 0.5


@pytest.mark.parametrize("angle,cost,maximize", [("pitch", cost_pitch, True), ("yaw", cost_yaw, False),
                                                  ("roll", cost_roll, False)])
def test_substep_agrees_with_grid(angle, cost, maximize):
    rng = np.random.default_rng(7)
    role = CameraRole.REAR
    for _ in range(3):
        gt = random_extrinsics(rng, role)
        L = analytic_lines(role, gt, PH[role])
        start = CameraExtrinsics(gt.pitch + rng.uniform(-2, 2), gt.yaw + rng.uniform(-2, 2),
                                 gt.roll + rng.uniform(-2, 2), gt.x, gt.y, gt.z)
        _, delta, _ = substep(start, L, role, PH[role], angle, cost, maximize, SolverConfig())
        deltas, vals = grid_sweep(start, L, role, PH[role], angle, cost)
        best = deltas[np.argmax(vals) if maximize else np.argmin(vals)]
        assert abs(delta - best) <= 0.1 + 1e-9


def test_coordinatewise_optimum_after_solve():
    """No single-angle grid move of 0.1 deg improves the descent's final costs."""
    role = CameraRole.FRONT
    rng = np.random.default_rng(3)
    gt = random_extrinsics(rng, role)
    L = analytic_lines(role, gt, PH[role])
    res = solve_pose_front_rear(CameraExtrinsics(gt.pitch + 1.5, gt.yaw - 1.0, gt.roll + 0.7, gt.x, gt.y, gt.z),
                                L, PH[role], role)
    for angle, cost, sgn in (("pitch", cost_pitch, -1.0), ("yaw", cost_yaw, 1.0), ("roll", cost_roll, 1.0)):
        deltas, vals = grid_sweep(res.ext, L, role, PH[role], angle, cost, span=0.3, step=0.1)
        c0 = vals[deltas == 0.0][0]
        assert np.all(sgn * vals >= sgn * c0 - 1e-6)


def test_trace_csv(tmp_path):
    role = CameraRole.FRONT
    gt = RIG.extrinsics[role]
    L = analytic_lines(role, gt, PH[role])
    res = solve_pose_front_rear(CameraExtrinsics(gt.pitch + 1, gt.yaw, gt.roll, gt.x, gt.y, gt.z), L, PH[role],
                                role, keep_trace=True)
    p = tmp_path / "trace.csv"
    res.write_trace(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["outer_iter", "sub_step", "angle_deg", "cost"]
    assert {r[1] for r in rows[1:]} == {"pitch", "yaw", "roll"}
