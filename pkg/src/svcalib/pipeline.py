"""End-to-end calibration: lanes -> front/rear -> sides -> aggregation.

One candidate ParameterSet is produced per window of frames and the final
result is the weighted medoid of the candidates.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import cv2
import numpy as np

from .camera_model import (
    ROLES,
    CameraExtrinsics,
    CameraRole,
    FisheyeIntrinsics,
    PinholeSpec,
    SurroundPlaneCamera,
    apply_homography,
    cross_centre,
    ground_homography,
    plane_to_fisheye_maps,
    undistort_image,
    undistorted_valid_mask,
)
from .errors import (
    CalibrationError,
    CalibrationFailed,
    ConfigError,
    DegeneratePencilError,
    NotEnoughLanesError,
)
from .lane_detect import (
    LaneAccumulator,
    LaneSegment,
    detect_edges,
    detect_lines,
    estimate_vanishing_point,
    filter_by_direction,
    filter_lines,
    refine_segments,
    select_lane_pair,
    to_gray,
)
from .pose_solver import SolverConfig, marking_width, plane_lanes, solve_pose_front_rear, solve_pose_side
from .refine import (
    OVERLAP_PAIRS,
    SideSearch,
    corefine_front_rear,
    corefine_rig_height,
    corefine_side,
    fixed_patches,
    overlap_rois,
    redetect_lanes_on_plane,
)
from .sequence_agg import ParameterSet, confidence_weights, select_parameter_set

log = logging.getLogger(__name__)

STAGES = ("Lane marking detection", "Lane marking selection", "Parameter estimation", "Parameter selection")
DETECTION, SELECTION, ESTIMATION, AGGREGATION = STAGES


# --------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    canny_low: float = 50.0
    canny_high: float = 150.0
    hough_rho: float = 1.0
    hough_theta_deg: float = 0.5
    hough_votes: int = 50
    hough_min_length: float = 40.0
    hough_max_gap: float = 10.0
    vp_dist_px: float = 20.0
    vp_far_factor: float = 3.0  # VPs farther than this many image widths use the direction gate
    min_border_px: float = 120.0  # shorter segments are texture, not lane borders
    steep_deg: float = 80.0  # front/rear borders must be within this of vertical
    body_margin_px: float = 10.0
    window: int = 25
    min_candidates: int = 4
    pinhole_fov_deg: float = 140.0
    body: tuple[float, float, float, float] = (-0.95, 0.95, -2.45, 2.3)
    redetect: bool = True
    redetect_gate_px: float = 10.0
    rear_x_span_m: float = 0.2
    estimate_height: bool = True
    height_span_m: float = 0.2
    texture_refine: bool = True
    roi_size_m: tuple[float, float] = (2.5, 1.5)  # (lateral, longitudinal)
    plane_mpp: float = 0.01
    plane_size_px: int = 2000
    confidence: str = "inverse"
    recentre: bool = True
    threads: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    side_search: SideSearch = field(default_factory=SideSearch)
    intrinsics: dict[CameraRole, FisheyeIntrinsics] = field(default_factory=dict)
    priors: dict[CameraRole, CameraExtrinsics] = field(default_factory=dict)

    _POSITIVE = ("canny_low", "canny_high", "hough_rho", "hough_theta_deg", "hough_votes", "hough_min_length",
                 "min_border_px", "vp_dist_px", "vp_far_factor", "window", "min_candidates", "redetect_gate_px", "rear_x_span_m",
                 "plane_mpp", "plane_size_px", "threads")

    def __post_init__(self):
        for k in self._POSITIVE:
            v = getattr(self, k)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(k, f"must be a positive number, got {v!r}")
        for k in ("hough_max_gap", "body_margin_px", "height_span_m"):
            if not getattr(self, k) >= 0:
                raise ConfigError(k, "must be non-negative")
        if self.canny_high < self.canny_low:
            raise ConfigError("canny_high", "must not be below canny_low")
        if not 0 < self.steep_deg <= 90:
            raise ConfigError("steep_deg", "must lie in (0, 90]")
        if not 0 < self.pinhole_fov_deg < 180:
            raise ConfigError("pinhole_fov_deg", "must lie in (0, 180)")
        if self.confidence not in ("inverse", "proportional"):
            raise ConfigError("confidence", "must be 'inverse' or 'proportional'")
        x0, x1, y0, y1 = self.body
        if not (x0 < x1 and y0 < y1):
            raise ConfigError("body", "needs x_min < x_max and y_min < y_max")
        self.body = tuple(float(v) for v in self.body)
        rs = np.broadcast_to(np.asarray(self.roi_size_m, dtype=np.float64), (2,))
        if not np.all(rs > 0):
            raise ConfigError("roi_size_m", "must be positive")
        self.roi_size_m = (float(rs[0]), float(rs[1]))
        self.intrinsics = {CameraRole(k): v for k, v in self.intrinsics.items()}
        self.priors = {CameraRole(k): v for k, v in self.priors.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        for k in d:
            if k not in names:
                raise ConfigError(k, "unknown field")
        kw = {}
        for k, v in d.items():
            try:
                if k == "solver":
                    v = SolverConfig(**v)
                elif k == "side_search":
                    v = SideSearch(**v)
                elif k == "intrinsics":
                    v = {CameraRole(r): FisheyeIntrinsics.from_dict(x) for r, x in v.items()}
                elif k == "priors":
                    v = {CameraRole(r): CameraExtrinsics.from_dict(x) for r, x in v.items()}
                elif k in ("body", "roi_size_m") and isinstance(v, list):
                    v = tuple(v)
            except ConfigError:
                raise
            except (TypeError, ValueError, KeyError) as e:
                raise ConfigError(k, str(e)) from e
            kw[k] = v
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["solver"] = dataclasses.asdict(self.solver)
        d["side_search"] = dataclasses.asdict(self.side_search)
        d["intrinsics"] = {r.value: v.to_dict() for r, v in self.intrinsics.items()}
        d["priors"] = {r.value: v.to_dict() for r, v in self.priors.items()}
        d["body"] = list(self.body)
        d["roi_size_m"] = list(self.roi_size_m)
        return d

    def check_cameras(self) -> None:
        for r in ROLES:
            if r not in self.intrinsics:
                raise ConfigError("intrinsics", f"missing camera {r.value}")
            if r not in self.priors:
                raise ConfigError("priors", f"missing camera {r.value}")


# --------------------------------------------------------------------------
# timing


class StageTimer:
    """Wall-clock milliseconds and invocation counts per stage."""

    def __init__(self):
        self.ms = defaultdict(float)
        self.calls = defaultdict(int)

    @contextmanager
    def __call__(self, stage: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.ms[stage] += 1000.0 * (time.perf_counter() - t)
            self.calls[stage] += 1

    def report(self) -> dict:
        return {s: {"ms": self.ms.get(s, 0.0), "calls": self.calls.get(s, 0)} for s in STAGES}


# --------------------------------------------------------------------------
# per-camera detection and selection


@dataclass
class CameraLanes:
    role: CameraRole
    pinhole: PinholeSpec
    undistorted: list[np.ndarray]
    candidates: list[LaneSegment]
    selected: list[LaneSegment] | None = None
    roi: tuple[float, float, float, float] | None = None


def lane_roi(role: CameraRole, ext: CameraExtrinsics, pinhole: PinholeSpec, body, margin: float):
    """Image rectangle on the road side of the vehicle body's nearest edge.

    The body edge facing the camera is projected with the prior pose; the
    RoI ends ``margin`` pixels before it.  Falls back to the full image.
    """
    x0, x1, y0, y1 = body
    t = np.linspace(0.0, 1.0, 21)
    if role == CameraRole.FRONT:
        pts = np.c_[x0 + t * (x1 - x0), np.full_like(t, y1)]
    elif role == CameraRole.REAR:
        pts = np.c_[x0 + t * (x1 - x0), np.full_like(t, y0)]
    elif role == CameraRole.LEFT:
        pts = np.c_[np.full_like(t, x0), y0 + t * (y1 - y0)]
    else:
        pts = np.c_[np.full_like(t, x1), y0 + t * (y1 - y0)]
    plane = SurroundPlaneCamera()
    H = ground_homography(ext, role, pinhole, plane)
    q = np.c_[plane.world_to_pixel(pts), np.ones(len(t))] @ H.T
    ok = q[:, 2] > 1e-9
    full = (0.0, 0.0, float(pinhole.width), float(pinhole.height))
    if not ok.any():
        return full
    uv = q[ok, :2] / q[ok, 2:]
    # the body occupies the image bottom for every camera (virtual frame rows)
    bottom = float(np.clip(uv[:, 1].min() - margin, 1.0, pinhole.height))
    return (0.0, 0.0, float(pinhole.width), bottom)


def detect_camera(frames: list[np.ndarray], intr: FisheyeIntrinsics, role: CameraRole,
                  cfg: PipelineConfig) -> CameraLanes:
    ph = PinholeSpec.from_fisheye(intr, cfg.pinhole_fov_deg)
    valid = undistorted_valid_mask(intr, ph).astype(np.uint8)
    valid = cv2.erode(valid, np.ones((7, 7), np.uint8)) > 0
    acc = LaneAccumulator(window=max(1, len(frames)))
    und = []
    for i, img in enumerate(frames):
        u = undistort_image(img, intr, ph)
        und.append(u)
        gray = to_gray(u)
        edges = detect_edges(gray, cfg.canny_low, cfg.canny_high, mask=valid)
        segs = detect_lines(edges, cfg.hough_rho, cfg.hough_theta_deg, int(cfg.hough_votes), cfg.hough_min_length,
                            cfg.hough_max_gap)
        acc.add(i, refine_segments(segs, gray, role))
    return CameraLanes(role, ph, und, acc.segments())


def _steep(segs: list[LaneSegment], max_deg: float) -> list[LaneSegment]:
    out = []
    for s in segs:
        d = s.direction
        if abs(d[1]) >= np.cos(np.radians(max_deg)):
            out.append(s)
    return out


def select_camera(cam: CameraLanes, prior: CameraExtrinsics, cfg: PipelineConfig) -> list[LaneSegment]:
    role = cam.role
    segs = [s for s in cam.candidates if s.length >= cfg.min_border_px]
    if not role.is_side:
        segs = _steep(segs, cfg.steep_deg)
    cam.roi = lane_roi(role, prior, cam.pinhole, cfg.body, cfg.body_margin_px)
    w, h = cam.pinhole.width, cam.pinhole.height
    vp = None
    if not role.is_side:
        # side views see the borders nearly parallel, so their pencil point is
        # dominated by clutter; the direction gate is used there instead
        try:
            vp = estimate_vanishing_point(segs, robust=True, inlier_dist=cfg.vp_dist_px)
        except (DegeneratePencilError, ValueError):
            pass
    if vp is not None and np.hypot(vp.v[0] - w / 2, vp.v[1] - h / 2) <= cfg.vp_far_factor * w:
        kept = filter_lines(segs, vp, cam.roi, cfg.vp_dist_px)
    else:
        # near-parallel borders: a point test at thousands of pixels is ill-conditioned
        kept = filter_lines(filter_by_direction(segs), None, cam.roi)
    cam.selected = select_lane_pair(kept, role, (cam.pinhole.width, cam.pinhole.height))
    return cam.selected


# --------------------------------------------------------------------------
# one window


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def calibrate_window(frames: dict[CameraRole, list[np.ndarray]], cfg: PipelineConfig,
                     timer: StageTimer | None = None, timestamp: int = 0) -> tuple[ParameterSet, dict]:
    """Run every estimation stage on one window of frames."""
    timer = timer or StageTimer()
    diag: dict = {"timestamp": timestamp}
    flags: dict = {}
    intr, priors, scfg = cfg.intrinsics, cfg.priors, cfg.solver

    with timer(DETECTION):
        cams = dict(zip(ROLES, _map(lambda r: detect_camera(frames[r], intr[r], r, cfg), ROLES, cfg.threads)))
    with timer(SELECTION):
        for r in ROLES:
            try:
                select_camera(cams[r], priors[r], cfg)
            except NotEnoughLanesError as e:
                raise CalibrationFailed(SELECTION, e) from e
    lanes = {r: np.array([s.line for s in cams[r].selected]) for r in ROLES}
    ph = {r: cams[r].pinhole for r in ROLES}

    with timer(ESTIMATION):
        try:
            ext = _estimate(cams, lanes, ph, frames, cfg, diag, flags)
        except NotEnoughLanesError as e:
            raise CalibrationFailed(ESTIMATION, e) from e
        except CalibrationFailed:
            raise
        except CalibrationError as e:
            raise CalibrationFailed(ESTIMATION, e) from e

    cost = float(sum(diag.get("texture_cost", {}).values()))
    try:
        ps = ParameterSet(ext, cost, timestamp, flags)
    except ValueError as e:
        # a pose that leaves the assumed ranges means a wrong lane selection
        raise CalibrationFailed(ESTIMATION, CalibrationError(str(e))) from e
    return ps, diag


def _estimate(cams, lanes, ph, frames, cfg: PipelineConfig, diag: dict, flags: dict) -> dict:
    intr, priors, scfg = cfg.intrinsics, cfg.priors, cfg.solver
    F, B, L, R = ROLES
    ext = {}

    def solve_fr(r):
        res = solve_pose_front_rear(priors[r], cams[r].selected, ph[r], r, scfg)
        lines = lanes[r]
        if cfg.redetect:
            rd = redetect_lanes_on_plane(cams[r].undistorted, res.ext, r, ph[r], cams[r].selected, scfg,
                                         cfg.redetect_gate_px, canny=(cfg.canny_low, cfg.canny_high))
            if rd.low_confidence:
                flags[f"{r.value}_redetect_partial"] = True
            lines = rd.lines_img
            res = solve_pose_front_rear(res.ext, lines, ph[r], r, scfg)
        return res, lines

    for r, (res, lines) in zip((F, B), _map(solve_fr, (F, B), min(cfg.threads, 2))):
        ext[r], lanes[r] = res.ext, lines
        diag[f"{r.value}_solve"] = {"converged": res.converged, "iterations": res.iterations, "costs": res.costs}
        if not res.converged:
            flags[f"{r.value}_not_converged"] = True

    n = cfg.plane_size_px
    plane = SurroundPlaneCamera(cfg.plane_mpp, n, n, origin_px=(n / 2, n / 2))
    dz = 0.0
    if cfg.estimate_height:
        dz, _ = corefine_rig_height(ext[F], ext[B], lanes[F], lanes[B], ph[F], ph[B], plane, cfg.rear_x_span_m,
                                    tol=1e-3)
        ext[F] = ext[F].with_position(z=ext[F].z + dz)
        ext[B] = ext[B].with_position(z=ext[B].z + dz)
    diag["height_offset_m"] = dz
    co = corefine_front_rear(ext[F], ext[B], lanes[F], lanes[B], ph[F], ph[B], plane, cfg.rear_x_span_m)
    ext[B] = co.extrinsics[B]
    diag["front_rear"] = {"costs": co.costs, "rear_x": co.diagnostics["rear_x"]}
    if co.flagged:
        flags["front_rear_no_improvement"] = True

    d_l = marking_width(plane_lanes(lanes[F], ext[F], F, ph[F], scfg))
    diag["marking_width_m"] = d_l

    mid = len(frames[F]) // 2
    rois = overlap_rois(cfg.body, plane, cfg.roi_size_m)
    fixed = {}
    if cfg.texture_refine:
        for r in (F, B):
            for s in (L, R):
                reg = rois[(r, s)]
                fixed[(r, s)] = (fixed_patches(frames[r][mid], intr[r], ext[r], r, plane, reg), reg)

    def solve_side(r):
        start = priors[r].with_position(z=priors[r].z + dz)
        res = solve_pose_side(start, cams[r].selected, d_l, ph[r], r, scfg)
        lines = lanes[r]
        if cfg.redetect:
            rd = redetect_lanes_on_plane(cams[r].undistorted, res.ext, r, ph[r], cams[r].selected, scfg,
                                         cfg.redetect_gate_px, canny=(cfg.canny_low, cfg.canny_high))
            lines = rd.lines_img
            res = solve_pose_side(res.ext, lines, d_l, ph[r], r, scfg)
        tex = None
        if cfg.texture_refine:
            pats = [fixed[(p, r)] for p in OVERLAP_PAIRS[r]]
            tex = corefine_side(frames[r][mid], intr[r], res.ext, r, pats, plane, cfg.side_search)
        return res, lines, tex

    diag["texture_cost"] = {}
    for r, (res, lines, tex) in zip((L, R), _map(solve_side, (L, R), min(cfg.threads, 2))):
        ext[r], lanes[r] = res.ext, lines
        diag[f"{r.value}_solve"] = {"converged": res.converged, "iterations": res.iterations, "costs": res.costs,
                                    "extrinsics": res.ext.to_dict()}
        if tex is not None:
            diag[f"{r.value}_texture"] = {"cost": tex.cost, "low_confidence": tex.low_confidence,
                                          "contrast": tex.surface_contrast, "gradient_mean": tex.gradient_mean,
                                          "extrinsics": tex.ext.to_dict()}
            diag["texture_cost"][r.value] = tex.cost
            if tex.low_confidence:
                # a flat cost surface says nothing; keep the lane-based estimate
                flags[f"{r.value}_texture_low_confidence"] = True
            else:
                ext[r] = tex.ext

    if cfg.recentre:
        cc = cross_centre({r: e.position for r, e in ext.items()})
        ext = {r: e.with_position(x=e.x - cc[0], y=e.y - cc[1]) for r, e in ext.items()}
        diag["cross_centre_shift_m"] = cc.tolist()
    diag["extrinsics"] = {r.value: e.to_dict() for r, e in ext.items()}
    return ext


# --------------------------------------------------------------------------
# whole sequence


def default_windows(n_frames: int, length: int) -> list[tuple[int, int]]:
    return [(s, min(n_frames, s + length)) for s in range(0, n_frames, length)]


def run_calibration(frames: dict, config: PipelineConfig, windows=None, report: dict | None = None) -> ParameterSet:
    """Calibrate all four cameras from frame lists keyed by camera role.

    ``windows`` is a list of [start, end) frame ranges (default: consecutive
    chunks of ``config.window``).  Each window yields one candidate; a window
    that fails is skipped.  ``report``, when given, receives the candidates,
    per-window diagnostics and stage timings.
    """
    config.check_cameras()
    frames = {CameraRole(k): list(v) for k, v in frames.items()}
    for r in ROLES:
        if not frames.get(r):
            raise CalibrationFailed(DETECTION, NotEnoughLanesError(f"no frames for the {r.value} camera"))
    n = min(len(v) for v in frames.values())
    windows = [tuple(w) for w in windows] if windows else default_windows(n, config.window)
    timer = StageTimer()
    cands, diags, failures = [], [], []
    for s, e in windows:
        if e <= s or s >= n:
            continue
        try:
            ps, d = calibrate_window({r: frames[r][s:e] for r in ROLES}, config, timer, timestamp=s)
        except CalibrationFailed as err:
            log.info("window %d-%d failed: %s", s, e, err)
            failures.append(err)
            continue
        cands.append(ps)
        diags.append(d)
    if not cands:
        raise failures[-1] if failures else CalibrationFailed(SELECTION, NotEnoughLanesError("no usable window"))
    with timer(AGGREGATION):
        w, all_zero = confidence_weights(cands, config.confidence, return_flag=True)
        best = select_parameter_set(cands, w)
    flags = dict(best.flags)
    if all_zero:
        flags["uniform_confidence"] = True
    if len(cands) < config.min_candidates:
        flags["insufficient_candidates"] = True
    out = dataclasses.replace(best, flags=flags)
    if report is not None:
        report.update({"candidates": cands, "weights": w.tolist(), "diagnostics": diags,
                       "failures": [str(f) for f in failures], "timing": timer.report()})
    return out


def timing_report(frames: dict, config: PipelineConfig, windows=None) -> dict:
    """Per-stage wall-clock milliseconds and invocation counts of one run."""
    rep: dict = {}
    run_calibration(frames, config, windows, rep)
    return rep["timing"]


# --------------------------------------------------------------------------
# stitching


def _sector_masks(plane: SurroundPlaneCamera, body) -> dict[CameraRole, np.ndarray]:
    """Four sectors split by diagonals from the body corners to the canvas corners."""
    h, w = plane.canvas_height, plane.canvas_width
    x0, x1, y0, y1 = body
    corners = plane.world_to_pixel(np.array([[x0, y1], [x1, y1], [x1, y0], [x0, y0]]))  # FL FR RR RL
    c = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64)
    masks = {}
    for role, (i, j) in {CameraRole.FRONT: (0, 1), CameraRole.RIGHT: (1, 2),
                         CameraRole.REAR: (2, 3), CameraRole.LEFT: (3, 0)}.items():
        poly = np.array([corners[i], c[i], c[j], corners[j]])
        m = np.zeros((h, w), np.uint8)
        cv2.fillPoly(m, [np.round(poly * 16).astype(np.int32)], 1, lineType=cv2.LINE_8, shift=4)
        masks[role] = m > 0
    body_poly = np.round(corners * 16).astype(np.int32)
    bm = np.zeros((h, w), np.uint8)
    cv2.fillPoly(bm, [body_poly], 1, shift=4)
    for role in masks:
        masks[role] &= bm == 0
    return masks


def stitch_surround(frames: dict, params: ParameterSet, intrinsics: dict, plane: SurroundPlaneCamera | None = None,
                    body=(-0.95, 0.95, -2.45, 2.3), normalize: bool = False) -> np.ndarray:
    """Top-down mosaic of the four fisheye frames with fixed diagonal seams.

    Missing cameras leave their sector black; the vehicle footprint stays
    black.  ``normalize`` matches each side sector's mean and spread to the
    front camera inside their overlap, per channel.
    """
    plane = plane or SurroundPlaneCamera(0.02, 600, 600, origin_px=(300, 300))
    masks = _sector_masks(plane, body)
    canvas = None
    views = {}
    for r in ROLES:
        img = frames.get(r, frames.get(r.value)) if isinstance(frames, dict) else None
        if img is None:
            continue
        intr = intrinsics[r] if r in intrinsics else intrinsics[r.value]
        mx, my = plane_to_fisheye_maps(intr, params.extrinsics[r], r, plane, (0, 0, plane.canvas_width, plane.canvas_height))
        views[r] = (cv2.remap(img, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT), mx >= 0)
        if canvas is None:
            canvas = np.zeros_like(views[r][0])
    if canvas is None:
        return np.zeros((plane.canvas_height, plane.canvas_width, 3), np.uint8)
    if normalize and CameraRole.FRONT in views:
        ref, ref_ok = views[CameraRole.FRONT]
        for r in (CameraRole.LEFT, CameraRole.RIGHT, CameraRole.REAR):
            if r not in views:
                continue
            img, ok = views[r]
            both = ok & ref_ok
            if both.sum() < 50:
                continue
            a = img[both].astype(np.float64)
            b = ref[both].astype(np.float64)
            gain = b.std(axis=0) / np.maximum(a.std(axis=0), 1e-6)
            out = (img.astype(np.float64) - a.mean(axis=0)) * gain + b.mean(axis=0)
            views[r] = (np.clip(out, 0, 255).astype(img.dtype), ok)
    for r, (img, ok) in views.items():
        m = masks[r] & ok
        canvas[m] = img[m]
    return canvas


def ground_point_in_image(ext: CameraExtrinsics, role: CameraRole, pinhole: PinholeSpec, xy) -> np.ndarray:
    """Undistorted image position of a ground point (helper for tests and scripts)."""
    plane = SurroundPlaneCamera()
    H = ground_homography(ext, role, pinhole, plane)
    return apply_homography(H, plane.world_to_pixel(np.atleast_2d(xy)))[0]
