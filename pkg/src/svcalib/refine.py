"""Refinement stages run after the per-camera lane solve.

* lane re-detection on the rough top-down projection;
* rear-camera x alignment against the front camera using shared lane borders;
* common rig height from the front/rear lane spacing (extension, see below);
* side-camera pitch and x/y from texture agreement in the overlap RoIs.

Translating a camera by (dx, dy) shifts its ground projection by exactly
(dx, dy), so for a fixed pitch the texture cost of every x/y candidate is a
sliding-window statistic of one enlarged projection.  The window sums are
evaluated with FFT correlations, which makes the exhaustive traversal cheap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import cv2
import numpy as np
from scipy.optimize import minimize_scalar

from .camera_model import (
    CameraExtrinsics,
    CameraRole,
    FisheyeIntrinsics,
    PinholeSpec,
    SurroundPlaneCamera,
    ground_homography,
    local_plane,
    plane_to_fisheye_maps,
    project_to_surround,
    rot_yaw,
    transport_line_to_image,
    transport_line_to_plane,
)
from .errors import FlatPatchError, InsufficientOverlapError, NoIntersectionError
from .lane_detect import (
    LaneAccumulator,
    Space,
    detect_edges,
    detect_lines,
    refine_segments,
    to_gray,
)
from .pose_solver import PlaneLaneSet, SolverConfig, _cut, _lines_of, cost_yaw, plane_lanes

FLAT_EPS = 1e-6


# --------------------------------------------------------------------------
# lane re-detection on the plane


@dataclass
class RedetectResult:
    lanes: PlaneLaneSet
    lines_img: np.ndarray
    replaced: list[bool]

    @property
    def low_confidence(self) -> bool:
        return not all(self.replaced)


def redetect_lanes_on_plane(frames, ext: CameraExtrinsics, role: CameraRole | str, pinhole: PinholeSpec,
                            prior, cfg: SolverConfig | None = None, gate_px: float = 10.0,
                            plane: SurroundPlaneCamera | None = None, canny=(50.0, 150.0),
                            hough: dict | None = None, max_angle_deg: float = 3.0,
                            rel_length: float = 0.5) -> RedetectResult:
    """Re-detect the selected borders on the top-down projection.

    ``frames`` is one undistorted frame or a list of them (dashes from
    several frames are merged).  Each prior border is replaced by the nearest
    re-detected border of the same polarity whose mean endpoint distance is
    below ``gate_px`` and whose direction is within ``max_angle_deg`` of the
    prior's; otherwise the prior is kept and flagged.  Among the gated
    candidates, those shorter than ``rel_length`` times the longest one are
    texture fragments and are ignored.
    """
    role = CameraRole(role)
    cfg = cfg or SolverConfig()
    plane = plane or local_plane(role, ext, cfg.mpp)
    if isinstance(frames, np.ndarray):
        frames = [frames]
    H = ground_homography(ext, role, pinhole, plane)
    acc = LaneAccumulator(window=max(1, len(frames)))
    for i, fr in enumerate(frames):
        top, mask = project_to_surround(fr, H, plane)
        mask = cv2.erode(mask.astype(np.uint8), np.ones((5, 5), np.uint8)) > 0
        gray = to_gray(top)
        segs = detect_lines(detect_edges(gray, *canny, mask=mask), space=Space.PLANE, **(hough or {}))
        acc.add(i, refine_segments(segs, gray, role))
    found = acc.segments()
    prior_lines = _lines_of(prior)
    polar = [getattr(s, "polarity", 0) for s in prior] if not isinstance(prior, np.ndarray) else [0] * len(prior_lines)
    cos_min = math.cos(math.radians(max_angle_deg))
    out_img, replaced = [], []
    for l_img, pol in zip(prior_lines, polar):
        lp = transport_line_to_plane(H, l_img)
        gated = []
        for s in found:
            if pol and s.polarity and s.polarity != pol:
                continue
            # short texture fragments near the prior can point anywhere
            if abs(s.direction @ np.array([lp[1], -lp[0]])) < cos_min * math.hypot(lp[0], lp[1]):
                continue
            d = 0.5 * (abs(lp @ np.r_[s.a, 1.0]) + abs(lp @ np.r_[s.b, 1.0]))
            if d < gate_px:
                gated.append((d, s))
        best = None
        if gated:
            longest = max(s.length for _, s in gated)
            best = min((g for g in gated if g[1].length >= rel_length * longest), key=lambda g: g[0])[1]
        if best is None:
            out_img.append(np.asarray(l_img, dtype=np.float64))
            replaced.append(False)
        else:
            out_img.append(transport_line_to_image(H, best.line))
            replaced.append(True)
    L = np.array(out_img)
    return RedetectResult(plane_lanes(L, ext, role, pinhole, cfg), L, replaced)


# --------------------------------------------------------------------------
# front/rear co-refinement


def shared_plane_lanes(lanes_img, ext: CameraExtrinsics, role: CameraRole | str, pinhole: PinholeSpec,
                       plane: SurroundPlaneCamera, rows_m: tuple[float, float] = (0.0, 1.0)) -> PlaneLaneSet:
    """Borders on the shared surround plane, cut by two world rows and sorted by x."""
    H = ground_homography(ext, role, pinhole, plane)
    L = np.array([transport_line_to_plane(H, l) for l in _lines_of(lanes_img)])
    v = [plane.world_to_pixel(np.array([[0.0, y]]))[0, 1] for y in rows_m]
    s1, s2 = np.array([0.0, 1.0, -v[0]]), np.array([0.0, 1.0, -v[1]])
    a = np.array([_cut(l, s1) for l in L])
    b = np.array([_cut(l, s2) for l in L])
    order = np.argsort(a[:, 0], kind="stable")
    return PlaneLaneSet(L[order], a[order], b[order], CameraRole(role))


def cost_front_rear(front: PlaneLaneSet, rear: PlaneLaneSet) -> float:
    """Width-balance terms of both cameras plus the border abscissa mismatch."""
    if len(front) != 4 or len(rear) != 4:
        raise NoIntersectionError("front/rear alignment needs four borders per camera")
    return cost_yaw(front) + cost_yaw(rear) + float(np.abs(front.a[:, 0] - rear.a[:, 0]).sum())


@dataclass
class CoRefineResult:
    extrinsics: dict[CameraRole, CameraExtrinsics]
    costs: dict[str, float]
    diagnostics: dict = field(default_factory=dict)
    flagged: bool = False


def _bounded_min(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(r.x), float(r.fun)


def corefine_front_rear(ext_front: CameraExtrinsics, ext_rear: CameraExtrinsics, lanes_front, lanes_rear,
                        ph_front: PinholeSpec, ph_rear: PinholeSpec, plane: SurroundPlaneCamera | None = None,
                        span: float = 0.2, tol: float = 1e-3) -> CoRefineResult:
    """1-D bounded search over the rear camera's x only."""
    plane = plane or SurroundPlaneCamera()
    F = shared_plane_lanes(lanes_front, ext_front, CameraRole.FRONT, ph_front, plane)

    def c(x):
        R = shared_plane_lanes(lanes_rear, ext_rear.with_position(x=x), CameraRole.REAR, ph_rear, plane)
        return cost_front_rear(F, R)

    x0 = ext_rear.x
    c0 = c(x0)
    x, cx = _bounded_min(c, x0 - span, x0 + span, tol / 4)
    flagged = not cx < c0
    if flagged:
        x, cx = x0, c0
    return CoRefineResult({CameraRole.FRONT: ext_front, CameraRole.REAR: ext_rear.with_position(x=x)},
                          {"front_rear": cx, "initial": c0}, {"rear_x": x}, flagged)


def corefine_rig_height(ext_front: CameraExtrinsics, ext_rear: CameraExtrinsics, lanes_front, lanes_rear,
                        ph_front: PinholeSpec, ph_rear: PinholeSpec, plane: SurroundPlaneCamera | None = None,
                        span: float = 0.2, tol: float = 1e-3) -> tuple[float, float]:
    """Common height offset of the rig from front/rear lane consistency.

    A height error rescales each camera's ground projection by z_prior/z_true.
    Front and rear cameras at different heights are rescaled differently, so
    the lane spacing they report only agrees at the right common offset.
    Returns (dz, cost); the rear x is re-optimised for every candidate.
    """
    plane = plane or SurroundPlaneCamera()

    def c(dz):
        ef = ext_front.with_position(z=ext_front.z + dz)
        er = ext_rear.with_position(z=ext_rear.z + dz)
        return corefine_front_rear(ef, er, lanes_front, lanes_rear, ph_front, ph_rear, plane, span, tol).costs[
            "front_rear"]

    lo = -min(span, min(ext_front.z, ext_rear.z) - 0.05)
    return _bounded_min(c, lo, span, tol / 4)


# --------------------------------------------------------------------------
# texture patches


def luminance(pixels: np.ndarray) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64)
    if p.ndim == 2:
        return p
    if p.shape[2] == 1:
        return p[..., 0]
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def sobel_y(pixels: np.ndarray) -> np.ndarray:
    return np.abs(cv2.Sobel(luminance(pixels), cv2.CV_64F, 0, 1, ksize=3, borderType=cv2.BORDER_REPLICATE))


@dataclass
class RoiPatch:
    pixels: np.ndarray  # (h, w, c) float64
    mu: np.ndarray
    sigma: np.ndarray
    Gy: np.ndarray

    @classmethod
    def from_pixels(cls, pixels, Gy: np.ndarray | None = None) -> "RoiPatch":
        p = np.asarray(pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[..., None]
        if p.shape[0] == 0 or p.shape[1] == 0:
            raise ValueError("empty patch")
        g = sobel_y(p) if Gy is None else np.asarray(Gy, dtype=np.float64)
        if g.shape != p.shape[:2]:
            raise ValueError("Gy must match the patch size")
        return cls(p, p.mean(axis=(0, 1)), p.std(axis=(0, 1)), g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


def normalize_roi(I2: RoiPatch, I1: RoiPatch, eps: float = FLAT_EPS) -> RoiPatch:
    """Match the per-channel mean and std of ``I2`` to those of ``I1``."""
    if np.any(I2.sigma <= eps):
        raise FlatPatchError("patch has no variance in some channel")
    p = (I1.sigma / I2.sigma) * (I2.pixels - I2.mu) + I1.mu
    return RoiPatch(p, p.mean(axis=(0, 1)), p.std(axis=(0, 1)), I2.Gy)


def texture_cost(I1: RoiPatch, I2n: RoiPatch) -> float:
    """Gradient-weighted mean squared difference, summed over channels.

    The weights are the longitudinal gradient carried by ``I2n``.
    """
    if I1.pixels.shape != I2n.pixels.shape:
        raise ValueError("patch dimensions differ")
    h, w = I1.shape
    d2 = ((I1.pixels - I2n.pixels) ** 2).sum(axis=2)
    return float((I2n.Gy * d2).sum() / (h * w))


def pair_cost(I1: RoiPatch, I2: RoiPatch) -> float:
    """Normalise then score; flat patches are compared raw."""
    try:
        I2n = normalize_roi(I2, I1)
    except FlatPatchError:
        I2n = I2
    return texture_cost(I1, I2n)


def _box(X: np.ndarray, h: int, w: int) -> np.ndarray:
    """Sums of X over every h x w window (valid positions)."""
    S = np.zeros((X.shape[0] + 1, X.shape[1] + 1))
    S[1:, 1:] = X.cumsum(0).cumsum(1)
    return S[h:, w:] - S[:-h, w:] - S[h:, :-w] + S[:-h, :-w]


class WindowCorrelator:
    """Valid-mode correlations of arrays of one fixed shape with fixed templates.

    Template spectra are computed once; each correlation then costs one
    forward and one inverse real FFT of the large array's size.
    """

    def __init__(self, templates: dict, shape: tuple[int, int]):
        self.shape = tuple(shape)
        self.th, self.tw = next(iter(templates.values())).shape
        self._T = {k: np.conj(np.fft.rfft2(t, s=self.shape)) for k, t in templates.items()}

    def spectrum(self, X: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(X, s=self.shape)

    def corr(self, FX: np.ndarray, key) -> np.ndarray:
        c = np.fft.irfft2(FX * self._T[key], s=self.shape)
        return c[: self.shape[0] - self.th + 1, : self.shape[1] - self.tw + 1]


def shift_cost_grid(I1: RoiPatch, big: np.ndarray, Gbig: np.ndarray, eps: float = FLAT_EPS,
                    correlator: WindowCorrelator | None = None) -> np.ndarray:
    """texture_cost of ``I1`` against every window of ``big``.

    ``big`` (H, W, c) is an enlarged projection and ``Gbig`` its gradient
    weights; entry [i, j] scores the window whose top-left corner is (j, i),
    with per-window normalisation (flat channels are compared raw).  The
    squared difference is expanded into window sums and correlations.
    """
    h, w = I1.shape
    big = np.asarray(big, dtype=np.float64)
    if big.ndim == 2:
        big = big[..., None]
    nch = I1.pixels.shape[2]
    if correlator is None:
        correlator = window_correlator(I1, big.shape[:2])
    n = h * w
    SG = _box(Gbig, h, w)
    FG = correlator.spectrum(Gbig)
    total = np.zeros_like(SG)
    for c in range(nch):
        I2 = big[..., c]
        GI = Gbig * I2
        mu2 = _box(I2, h, w) / n
        var2 = np.maximum(_box(I2 * I2, h, w) / n - mu2 * mu2, 0.0)
        sd2 = np.sqrt(var2)
        flat = sd2 <= eps
        a = np.where(flat, 1.0, I1.sigma[c] / np.where(flat, 1.0, sd2))
        m2 = np.where(flat, I1.mu[c], mu2)
        C1 = correlator.corr(FG, ("J2", c))
        C3 = correlator.corr(FG, ("J", c))
        C2 = correlator.corr(correlator.spectrum(GI), ("J", c))
        SGI = _box(GI, h, w)
        SGII = _box(GI * I2, h, w)
        total += C1 - 2 * a * (C2 - m2 * C3) + a * a * (SGII - 2 * m2 * SGI + m2 * m2 * SG)
    return np.maximum(total, 0.0) / n


def window_correlator(I1: RoiPatch, shape) -> WindowCorrelator:
    t = {}
    for c in range(I1.pixels.shape[2]):
        J = I1.pixels[..., c] - I1.mu[c]
        t[("J", c)] = J
        t[("J2", c)] = J * J
    return WindowCorrelator(t, shape)


# --------------------------------------------------------------------------
# overlap RoIs and side co-refinement


OVERLAP_PAIRS = {
    CameraRole.LEFT: (CameraRole.FRONT, CameraRole.REAR),
    CameraRole.RIGHT: (CameraRole.FRONT, CameraRole.REAR),
}


def overlap_rois(body: tuple[float, float, float, float], plane: SurroundPlaneCamera,
                 size=1.5) -> dict[tuple[CameraRole, CameraRole], tuple[int, int, int, int]]:
    """Corner rectangles next to the vehicle body as plane-pixel regions (u0, v0, u1, v1).

    ``size`` is one edge length or (lateral, longitudinal) in metres.  A
    wider lateral extent helps to tell side-camera pitch from x: tilting the
    camera moves a ground point at lateral distance d by (h^2 + d^2)/h per
    radian, a stretch that grows away from the body, while a translation
    moves every point equally.  Keys are (front-or-rear camera, side camera).
    """
    sx, sy = (float(size), float(size)) if np.ndim(size) == 0 else (float(size[0]), float(size[1]))
    x0, x1, y0, y1 = body
    rects = {
        (CameraRole.FRONT, CameraRole.LEFT): (x0 - sx, x0, y1, y1 + sy),
        (CameraRole.FRONT, CameraRole.RIGHT): (x1, x1 + sx, y1, y1 + sy),
        (CameraRole.REAR, CameraRole.LEFT): (x0 - sx, x0, y0 - sy, y0),
        (CameraRole.REAR, CameraRole.RIGHT): (x1, x1 + sx, y0 - sy, y0),
    }
    out = {}
    for k, (xa, xb, ya, yb) in rects.items():
        uv = plane.world_to_pixel(np.array([[xa, yb], [xb, ya]]))
        u0, v0 = np.floor(uv.min(axis=0) + 0.5).astype(int)
        u1, v1 = np.floor(uv.max(axis=0) + 0.5).astype(int)
        out[k] = (int(u0), int(v0), int(u1), int(v1))
    return out


def project_patch(img: np.ndarray, intr: FisheyeIntrinsics, ext: CameraExtrinsics, role: CameraRole | str,
                  plane: SurroundPlaneCamera, region) -> tuple[np.ndarray, np.ndarray]:
    """Fisheye frame -> float plane patch over ``region``; returns (pixels, valid)."""
    mx, my = plane_to_fisheye_maps(intr, ext, role, plane, region)
    out = cv2.remap(img, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    if out.ndim == 2:
        out = out[..., None]
    return out.astype(np.float64), mx >= 0


@dataclass
class SideSearch:
    pitch_span: float = 3.0
    pitch_step: float = 0.05
    xy_span: float = 0.2
    xy_step: float = 0.01
    z_span: float = 0.0
    z_step: float = 0.01
    yaw_span: float = 0.0
    yaw_step: float = 0.02
    exhaustive: bool = False
    subcell: bool = True
    coarse_factor: int = 10
    flat_ratio: float = 0.05
    min_gradient: float = 2.0

    def __post_init__(self):
        for k in ("pitch_step", "xy_step", "z_step", "yaw_step"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if min(self.pitch_span, self.xy_span, self.z_span, self.yaw_span) < 0:
            raise ValueError("search spans must be non-negative")


def _lattice(span: float, step: float) -> np.ndarray:
    k = int(round(span / step))
    return np.arange(-k, k + 1) * step


@dataclass
class SideRefineResult:
    ext: CameraExtrinsics
    cost: float
    low_confidence: bool
    grid_pitch: np.ndarray
    grid_x: np.ndarray
    grid_y: np.ndarray
    grid_z: np.ndarray
    grid_yaw: np.ndarray = field(default_factory=lambda: np.zeros(1))
    surface: dict = field(default_factory=dict, repr=False)  # (iz, iw, ip) -> (nx, ny) cost array
    gradient_mean: float = 0.0
    surface_contrast: float = 0.0

    def best_index(self) -> tuple[int, int, int, int, int]:
        """(iz, iw, ip, ix, iy) of the minimum; ties go to the smallest index."""
        best = None
        for key, C in sorted(self.surface.items()):
            j = int(np.argmin(C))
            ix, iy = np.unravel_index(j, C.shape)
            if best is None or C[ix, iy] < best[0]:
                best = (C[ix, iy], *key, int(ix), int(iy))
        return best[1:]

    def write_surface_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["z_offset_m", "yaw_deg", "pitch_deg", "x_offset_m", "y_offset_m", "cost"])
            for (iz, iw, ip), C in sorted(self.surface.items()):
                for ix, dx in enumerate(self.grid_x):
                    for iy, dy in enumerate(self.grid_y):
                        wr.writerow([f"{self.grid_z[iz]:.4f}", f"{self.grid_yaw[iw]:.4f}", f"{self.grid_pitch[ip]:.4f}",
                                     f"{dx:.4f}", f"{dy:.4f}", f"{C[ix, iy]:.6g}"])

    def heatmap(self) -> np.ndarray:
        """Colour image of the x/y cost slice at the best pitch (x right, y up)."""
        iz, iw, ip, _, _ = self.best_index()
        C = self.surface[(iz, iw, ip)].T[::-1]
        lo, hi = C.min(), C.max()
        g = np.uint8(255 * (C - lo) / (hi - lo + 1e-12))
        g = cv2.resize(g, (g.shape[1] * 8, g.shape[0] * 8), interpolation=cv2.INTER_NEAREST)
        return cv2.applyColorMap(g, cv2.COLORMAP_VIRIDIS)


def _coarse_fine(f, n: int, k: int) -> int:
    """Index minimising ``f`` over range(n): every k-th cell, then the cells around the winner."""
    centre = n // 2
    coarse = sorted(set(range(centre % k, n, k)) | {centre})
    best = min(coarse, key=lambda i: (f(i), i))
    return min(range(max(0, best - k), min(n, best + k + 1)), key=lambda i: (f(i), i))


def _parabolic(c) -> float:
    """Vertex offset (in cells, within +-0.5) of the parabola through three samples."""
    den = c[0] - 2.0 * c[1] + c[2]
    if not den > 0:
        return 0.0
    return float(np.clip(0.5 * (c[0] - c[2]) / den, -0.5, 0.5))


def _local_min(f, n: int, cur: int, k: int) -> int:
    return min(range(max(0, cur - k), min(n, cur + k + 1)), key=lambda i: (f(i), i))


def corefine_side(side_img: np.ndarray, intr: FisheyeIntrinsics, ext: CameraExtrinsics, role: CameraRole | str,
                  fixed: Sequence[tuple[RoiPatch, tuple[int, int, int, int]]], plane: SurroundPlaneCamera,
                  search: SideSearch | None = None) -> SideRefineResult:
    """Grid search over (pitch, x, y[, yaw, z]) of a side camera against fixed patches.

    ``fixed`` lists (patch, region) pairs: the front/rear camera's projection
    of each overlap RoI.  The summed texture cost over the RoIs is minimised;
    ties go to the lexicographically smallest (z, yaw, pitch, x, y) index.
    x/y offsets are always searched exhaustively and, with ``subcell``, the
    minimum is refined by a parabola through its lattice neighbours.  Unless ``exhaustive`` is
    set, yaw is searched coarse-to-fine at the start pitch, then pitch at
    that yaw, then both alternate locally until neither moves.
    """
    role = CameraRole(role)
    search = search or SideSearch()
    m = plane.meters_per_pixel
    sp = max(1, int(round(search.xy_step / m)))
    M = int(round(search.xy_span / m))
    M -= M % sp
    gp = _lattice(search.pitch_span, search.pitch_step)
    gz = _lattice(search.z_span, search.z_step) if search.z_span > 0 else np.zeros(1)
    gw = _lattice(search.yaw_span, search.yaw_step) if search.yaw_span > 0 else np.zeros(1)
    offs = np.arange(-M, M + 1, sp)
    gx = offs * m
    gy = offs * m
    surface: dict = {}
    gmeans: dict = {}
    correlators: dict = {}
    R0 = ext.local_rotation()

    def candidate(iz: int, iw: int, ip: int) -> CameraExtrinsics:
        e = ext
        if gw[iw] != 0.0:
            e = e.with_rotation(rot_yaw(gw[iw]) @ R0)
        return replace(e, pitch=e.pitch + gp[ip], z=ext.z + gz[iz])

    def evaluate(iz: int, iw: int, ip: int) -> float:
        key = (iz, iw, ip)
        if key in surface:
            return float(surface[key].min())
        cand = candidate(iz, iw, ip)
        total = np.zeros((len(offs), len(offs)))
        gsum = 0.0
        for I1, (u0, v0, u1, v1) in fixed:
            big, valid = project_patch(side_img, intr, cand, role, plane, (u0 - M, v0 - M, u1 + M, v1 + M))
            if not valid.any():
                raise InsufficientOverlapError(f"{role.value} camera does not see an overlap RoI")
            if big.shape[:2] != (I1.shape[0] + 2 * M, I1.shape[1] + 2 * M):
                raise ValueError(f"patch of shape {I1.shape} does not match region {(u0, v0, u1, v1)}")
            G = sobel_y(big)
            G[~valid] = 0.0
            ck = id(I1)
            if ck not in correlators:
                correlators[ck] = window_correlator(I1, big.shape[:2])
            C = shift_cost_grid(I1, big, G, correlator=correlators[ck])
            # window at top-left (M - dx/m, M + dy/m) <-> camera offset (dx, dy)
            sub = C[M + offs][:, M - offs]  # [iy, ix]
            total += sub.T
            gsum += float(G[M:-M or None, M:-M or None].mean())
        surface[key] = total
        gmeans[key] = gsum / len(fixed)
        return float(total.min())

    w0 = len(gw) // 2
    if search.exhaustive:
        for iz in range(len(gz)):
            for iw in range(len(gw)):
                for ip in range(len(gp)):
                    evaluate(iz, iw, ip)
    else:
        k = search.coarse_factor
        kw = max(1, k // 2)
        for iz in range(len(gz)):
            iw, ip = w0, len(gp) // 2
            if len(gw) > 1:
                iw = _coarse_fine(lambda i: evaluate(iz, i, ip), len(gw), kw)
            ip = _coarse_fine(lambda i: evaluate(iz, iw, i), len(gp), k)
            # alternate local yaw and pitch passes until neither moves
            for _ in range(4):
                iw2 = _local_min(lambda i: evaluate(iz, i, ip), len(gw), iw, kw)
                ip2 = _local_min(lambda i: evaluate(iz, iw2, i), len(gp), ip, k)
                if (iw2, ip2) == (iw, ip):
                    break
                iw, ip = iw2, ip2
    res = SideRefineResult(ext, 0.0, False, gp, gx, gy, gz, gw, surface)
    iz, iw, ip, ix, iy = res.best_index()
    res.cost = float(surface[(iz, iw, ip)][ix, iy])
    best = candidate(iz, iw, ip)
    C = surface[(iz, iw, ip)]
    fx = _parabolic(C[ix - 1:ix + 2, iy]) if search.subcell and 0 < ix < len(gx) - 1 else 0.0
    fy = _parabolic(C[ix, iy - 1:iy + 2]) if search.subcell and 0 < iy < len(gy) - 1 else 0.0
    step = gx[1] - gx[0] if len(gx) > 1 else 0.0
    res.ext = replace(best, x=ext.x + gx[ix] + fx * step, y=ext.y + gy[iy] + fy * step)
    res.gradient_mean = gmeans[(iz, iw, ip)]
    allc = np.concatenate([C.ravel() for C in surface.values()])
    med = float(np.median(allc))
    contrast = (med - res.cost) / med if med > 0 else 0.0
    res.low_confidence = bool(contrast < search.flat_ratio or res.gradient_mean < search.min_gradient)
    res.surface_contrast = contrast
    return res


def fixed_patches(img: np.ndarray, intr: FisheyeIntrinsics, ext: CameraExtrinsics, role: CameraRole | str,
                  plane: SurroundPlaneCamera, region) -> RoiPatch:
    pix, valid = project_patch(img, intr, ext, role, plane, region)
    if not valid.any():
        raise InsufficientOverlapError(f"{CameraRole(role).value} camera does not see the overlap RoI")
    return RoiPatch.from_pixels(pix)
