"""Per-camera rotation estimation from lane borders by coordinate descent.

Lane borders detected in the undistorted image are carried to a per-camera
top-down plane (see :func:`svcalib.camera_model.local_plane`) through the
ground homography of the current rotation estimate.  On that plane every
border is intersected with two reference lines ("stations"):

* front/rear cameras: two rows at ``near_m`` and ``far_m`` ahead of the camera,
  so lanes run bottom -> top;
* side cameras: two columns at -/+ ``side_station_m`` along the vehicle, so the
  lane runs left -> right.

``a`` holds the intersections with the first station, ``b`` with the second.
Pitch and yaw increments are composed on the left of the rotation and roll
increments on the right.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .camera_model import (
    CameraExtrinsics,
    CameraRole,
    PinholeSpec,
    decompose_local_rotation,
    ground_homography,
    local_plane,
    rot_pitch,
    rot_roll,
    rot_yaw,
    transport_line_to_plane,
)
from .errors import DegenerateSegmentError, DependencyOrderError, NoIntersectionError
from .lane_detect import LaneSegment, Space

E1 = np.array([1.0, 0.0])


@dataclass
class SolverConfig:
    initial_step: float = 0.5
    min_step: float = 0.001
    iter_max: int = 10
    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"pitch": (20.0, 90.0), "yaw": (-10.0, 10.0), "roll": (-10.0, 10.0)})
    mpp: float = 0.01
    near_m: float = 2.0
    far_m: float = 6.0
    side_station_m: float = 1.0

    def __post_init__(self):
        if not self.initial_step > self.min_step > 0:
            raise ValueError("need initial_step > min_step > 0")
        if self.iter_max < 1:
            raise ValueError("iter_max must be at least 1")
        self.bounds = {k: (float(v[0]), float(v[1])) for k, v in self.bounds.items()}
        for k in ("pitch", "yaw", "roll"):
            lo, hi = self.bounds[k]
            if not lo < hi:
                raise ValueError(f"bounds[{k!r}] must be an increasing interval")
        if not 0 < self.near_m < self.far_m:
            raise ValueError("need 0 < near_m < far_m")
        if self.side_station_m <= 0 or self.mpp <= 0:
            raise ValueError("side_station_m and mpp must be positive")


@dataclass
class PlaneLaneSet:
    """Lane borders on a camera's plane with their station intersections."""

    lines: np.ndarray  # (n, 3) normalised homogeneous plane lines
    a: np.ndarray  # (n, 2)
    b: np.ndarray  # (n, 2)
    role: CameraRole
    e1: np.ndarray = field(default_factory=lambda: E1.copy())

    def __len__(self) -> int:
        return len(self.a)

    def directions(self) -> np.ndarray:
        d = self.b - self.a
        n = np.linalg.norm(d, axis=1)
        if np.any(n < 1e-9):
            raise DegenerateSegmentError("projected lane segment has zero length")
        return d / n[:, None]

    @property
    def segments(self) -> list[LaneSegment]:
        return [LaneSegment(a, b, Space.PLANE) for a, b in zip(self.a, self.b)]

    @classmethod
    def from_points(cls, a, b, role=CameraRole.FRONT) -> "PlaneLaneSet":
        a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
        b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
        lines = np.array([np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0]) for p, q in zip(a, b)])
        nrm = np.hypot(lines[:, 0], lines[:, 1])
        if np.any(nrm < 1e-12):
            raise DegenerateSegmentError("segment endpoints coincide")
        return cls(lines / nrm[:, None], a, b, CameraRole(role))


def _lines_of(lanes: Sequence[LaneSegment] | np.ndarray) -> np.ndarray:
    if isinstance(lanes, np.ndarray):
        return np.asarray(lanes, dtype=np.float64).reshape(-1, 3)
    return np.array([s.line for s in lanes])


def stations(role: CameraRole | str, plane, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    role = CameraRole(role)
    u0, v0 = plane.origin_px
    if role.is_side:
        s = cfg.side_station_m / cfg.mpp
        return np.array([1.0, 0.0, -(u0 - s)]), np.array([1.0, 0.0, -(u0 + s)])
    return (np.array([0.0, 1.0, -(v0 - cfg.near_m / cfg.mpp)]),
            np.array([0.0, 1.0, -(v0 - cfg.far_m / cfg.mpp)]))


def _cut(l, st) -> np.ndarray:
    x = np.array([l[1] * st[2] - l[2] * st[1], l[2] * st[0] - l[0] * st[2], l[0] * st[1] - l[1] * st[0]])
    if abs(x[2]) < 1e-12 * max(1.0, float(np.abs(x[:2]).max())):
        raise NoIntersectionError("lane border is parallel to a reference line")
    return x[:2] / x[2]


def plane_lanes(lanes_img, ext: CameraExtrinsics, role: CameraRole | str, pinhole: PinholeSpec,
                cfg: SolverConfig | None = None, plane=None) -> PlaneLaneSet:
    """Transport image borders to the camera's plane under ``ext``."""
    cfg = cfg or SolverConfig()
    role = CameraRole(role)
    plane = plane or local_plane(role, ext, cfg.mpp)
    H = ground_homography(ext, role, pinhole, plane)
    L = np.array([transport_line_to_plane(H, l) for l in _lines_of(lanes_img)])
    s1, s2 = stations(role, plane, cfg)
    a = np.array([_cut(l, s1) for l in L])
    b = np.array([_cut(l, s2) for l in L])
    return PlaneLaneSet(L, a, b, role)


# --------------------------------------------------------------------------
# costs


def cost_pitch(lanes: PlaneLaneSet) -> float:
    """Norm of the summed unit directions (maximised, at most 4)."""
    return float(np.linalg.norm(lanes.directions().sum(axis=0)))


def cost_yaw(lanes: PlaneLaneSet) -> float:
    """Difference between left and right marking widths on the first station."""
    a = lanes.a
    return float(abs(np.linalg.norm(a[0] - a[1]) - np.linalg.norm(a[2] - a[3])))


def cost_roll(lanes: PlaneLaneSet) -> float:
    return float(np.abs(lanes.directions() @ lanes.e1).sum())


def cost_yaw_side(lanes: PlaneLaneSet) -> float:
    return float(abs(np.linalg.norm(lanes.a[0] - lanes.a[1]) - np.linalg.norm(lanes.b[0] - lanes.b[1])))


def cost_roll_side(lanes: PlaneLaneSet) -> float:
    """Sum of signed cosines with e1 (maximised, at most 2)."""
    return float((lanes.directions() @ lanes.e1).sum())


def cost_pitch_side(lanes: PlaneLaneSet, d_l: float | None) -> float:
    if d_l is None:
        raise DependencyOrderError("marking width from the front/rear stage is not available yet")
    return float(abs(np.linalg.norm(lanes.a[0] - lanes.a[1]) - d_l))


def marking_width(lanes: PlaneLaneSet) -> float:
    """Mean width of the two markings of a front/rear lane set (plane pixels)."""
    a = lanes.a
    return float(0.5 * (np.linalg.norm(a[0] - a[1]) + np.linalg.norm(a[2] - a[3])))


# --------------------------------------------------------------------------
# coordinate descent


def apply_increment(R: np.ndarray, angle: str, delta: float) -> np.ndarray:
    if angle == "pitch":
        return rot_pitch(delta) @ R
    if angle == "yaw":
        return rot_yaw(delta) @ R
    if angle == "roll":
        return R @ rot_roll(delta)
    raise ValueError(angle)


def line_search(f: Callable[[float], float], maximize: bool, step: float, min_step: float,
                feasible: Callable[[float], bool] = lambda x: True, trace=None) -> tuple[float, float]:
    """Pattern search on one variable starting at 0.

    Probes +/-step, walks while the cost improves and halves the step when
    neither direction helps.  Only strict improvements are accepted.
    """
    sgn = -1.0 if maximize else 1.0
    x, fx = 0.0, sgn * f(0.0)
    if trace is not None:
        trace(x, sgn * fx)
    while step >= min_step:
        moved = False
        for d in (step, -step):
            xn = x + d
            if not feasible(xn):
                continue
            fn = sgn * f(xn)
            if trace is not None:
                trace(xn, sgn * fn)
            if fn < fx:
                x, fx, moved = xn, fn, True
                while feasible(x + d):
                    fn = sgn * f(x + d)
                    if trace is not None:
                        trace(x + d, sgn * fn)
                    if fn >= fx:
                        break
                    x, fx = x + d, fn
                break
        if not moved:
            step *= 0.5
    return x, sgn * fx


@dataclass
class SolveResult:
    ext: CameraExtrinsics
    converged: bool
    iterations: int
    costs: dict[str, float]
    trace: list[tuple[int, str, float, float]] = field(default_factory=list, repr=False)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["outer_iter", "sub_step", "angle_deg", "cost"])
            w.writerows(self.trace)


def _in_bounds(R: np.ndarray, cfg: SolverConfig) -> bool:
    p, y, r = decompose_local_rotation(R)
    b = cfg.bounds
    return b["pitch"][0] <= p <= b["pitch"][1] and b["yaw"][0] <= y <= b["yaw"][1] and b["roll"][0] <= r <= b["roll"][1]


def substep(ext: CameraExtrinsics, lines: np.ndarray, role: CameraRole, pinhole: PinholeSpec,
            angle: str, cost: Callable[[PlaneLaneSet], float], maximize: bool,
            cfg: SolverConfig, trace=None) -> tuple[CameraExtrinsics, float, float]:
    """One sub-step of the descent; returns (new ext, increment, cost)."""
    R0 = ext.local_rotation()

    def at(delta):
        return ext.with_rotation(apply_increment(R0, angle, delta))

    def f(delta):
        return cost(plane_lanes(lines, at(delta), role, pinhole, cfg))

    def feasible(delta):
        return _in_bounds(apply_increment(R0, angle, delta), cfg)

    tr = None
    if trace is not None:
        tr = lambda x, c: trace(angle, getattr(at(x), angle), c)  # noqa: E731
    delta, c = line_search(f, maximize, cfg.initial_step, cfg.min_step, feasible, tr)
    return (at(delta) if delta != 0.0 else ext), delta, c


def _descend(ext0, lanes_img, role, pinhole, steps, cfg: SolverConfig, keep_trace: bool) -> SolveResult:
    role = CameraRole(role)
    lines = _lines_of(lanes_img)
    ext = ext0
    rows: list[tuple[int, str, float, float]] = []
    converged = False
    costs: dict[str, float] = {}
    it = 0
    for it in range(1, cfg.iter_max + 1):
        moved = False
        for name, cost, maximize in steps:
            tr = (lambda a, v, c: rows.append((it, a, v, c))) if keep_trace else None
            ext, delta, c = substep(ext, lines, role, pinhole, name, cost, maximize, cfg, tr)
            costs[name] = c
            moved |= delta != 0.0
        if not moved:
            converged = True
            break
    return SolveResult(ext, converged, it, costs, rows)


def solve_pose_front_rear(ext0: CameraExtrinsics, lanes_img, pinhole: PinholeSpec,
                          role: CameraRole | str = CameraRole.FRONT, cfg: SolverConfig | None = None,
                          keep_trace: bool = False) -> SolveResult:
    """Pitch -> yaw -> roll descent on four lane borders.

    ``lanes_img`` are the selected borders in (left outer, left inner, right
    inner, right outer) order, as segments or homogeneous image lines.
    """
    cfg = cfg or SolverConfig()
    if len(_lines_of(lanes_img)) != 4:
        raise ValueError("front/rear solving needs exactly four lane borders")
    steps = [("pitch", cost_pitch, True), ("yaw", cost_yaw, False), ("roll", cost_roll, False)]
    return _descend(ext0, lanes_img, role, pinhole, steps, cfg, keep_trace)


def solve_pose_side(ext0: CameraExtrinsics, lanes_img, d_l: float | None, pinhole: PinholeSpec,
                    role: CameraRole | str = CameraRole.LEFT, cfg: SolverConfig | None = None,
                    keep_trace: bool = False, free: tuple[str, ...] = ("yaw", "roll", "pitch")) -> SolveResult:
    """Yaw -> roll -> pitch descent on the two borders of one marking.

    ``d_l`` is the marking width (plane pixels) measured by the front/rear
    stage; the returned pitch is provisional and is refined later against
    image texture.  ``free`` restricts the descent to some of the angles,
    e.g. re-solving yaw and roll once the pitch is known.
    """
    if d_l is None:
        raise DependencyOrderError("side cameras are solved after the front/rear stage")
    cfg = cfg or SolverConfig()
    if len(_lines_of(lanes_img)) != 2:
        raise ValueError("side solving needs the two borders of one marking")
    steps = [("yaw", cost_yaw_side, False), ("roll", cost_roll_side, True),
             ("pitch", lambda ls: cost_pitch_side(ls, d_l), False)]
    steps = [st for st in steps if st[0] in free]
    if not steps:
        raise ValueError("nothing to solve: 'free' names no angle")
    return _descend(ext0, lanes_img, role, pinhole, steps, cfg, keep_trace)


def grid_sweep(ext: CameraExtrinsics, lanes_img, role, pinhole: PinholeSpec, angle: str,
               cost: Callable[[PlaneLaneSet], float], span: float = 3.0, step: float = 0.1,
               cfg: SolverConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force cost profile along one angle increment (used as a check).

    Increments that leave the solver bounds are dropped, so the profile covers
    the same feasible interval the line search may explore.
    """
    cfg = cfg or SolverConfig()
    lines = _lines_of(lanes_img)
    R0 = ext.local_rotation()
    deltas = np.round(np.arange(-span, span + step / 2, step), 10)
    deltas = deltas[[_in_bounds(apply_increment(R0, angle, d), cfg) for d in deltas]]
    vals = np.array([cost(plane_lanes(lines, ext.with_rotation(apply_increment(R0, angle, d)), role, pinhole, cfg))
                     for d in deltas])
    return deltas, vals


def angle_error(a: CameraExtrinsics, b: CameraExtrinsics) -> float:
    return float(np.mean(np.abs(np.subtract(a.angles, b.angles))))


def rotation_angle_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))
