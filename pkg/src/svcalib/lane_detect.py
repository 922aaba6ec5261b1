"""Lane-marking detection, filtering and selection on undistorted frames.

Every painted marking has two borders.  Borders are handled as separate
``LaneSegment`` objects carrying a polarity: +1 when the luminance rises
along the segment normal, -1 when it falls.  A marking is a rising border
followed by a falling one.

Segment orientation is fixed per camera role so that normals are
comparable: front/rear segments point up the image (away from the camera),
side segments point towards +u.  The normal is the direction rotated by
+90 deg in image coordinates, i.e. it points right for front/rear frames and
down for side frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import cv2
import numpy as np

from .camera_model import CameraRole, normalize_line
from .errors import DegeneratePencilError, DegenerateSegmentError, NotEnoughLanesError
from .lane_types import LaneType


class Space(str, Enum):
    IMAGE = "undistorted_image"
    PLANE = "surround_plane"


@dataclass
class LaneSegment:
    a: np.ndarray
    b: np.ndarray
    space: Space = Space.IMAGE
    lane_type: LaneType | None = None
    strength: float = 0.0
    polarity: int = 0
    frame: int | None = None
    # sub-pixel support points (N, 2) when the segment was refined
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(2)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise DegenerateSegmentError("segment endpoints must be finite")
        if np.linalg.norm(self.b - self.a) < 1e-9:
            raise DegenerateSegmentError("segment endpoints coincide")
        self.space = Space(self.space)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def direction(self) -> np.ndarray:
        return (self.b - self.a) / self.length

    @property
    def normal(self) -> np.ndarray:
        d = self.direction
        return np.array([-d[1], d[0]])

    @property
    def line(self) -> np.ndarray:
        """Normalised homogeneous line (n . p + c = 0)."""
        n = self.normal
        return np.array([n[0], n[1], -n @ self.a])

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.a + self.b)

    def angle_deg(self) -> float:
        d = self.direction
        return math.degrees(math.atan2(d[1], d[0]))

    def oriented(self, ref: np.ndarray) -> "LaneSegment":
        """Copy whose direction has a non-negative component along ``ref``."""
        if (self.b - self.a) @ ref >= 0:
            return self
        return replace(self, a=self.b, b=self.a, polarity=-self.polarity)

    def to_dict(self) -> dict:
        return {"a": self.a.round(4).tolist(), "b": self.b.round(4).tolist(), "space": self.space.value,
                "type": self.lane_type.value if self.lane_type else None,
                "strength": float(self.strength), "polarity": int(self.polarity), "frame": self.frame}


@dataclass(frozen=True)
class VanishingPoint:
    v: np.ndarray
    inlier_count: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.v)):
            raise DegeneratePencilError("vanishing point is not finite")
        if self.inlier_count < 2:
            raise DegeneratePencilError("a vanishing point needs at least two supporting lines")


@dataclass
class Marking:
    """One painted marking: rising border then falling border along the normal."""

    rising: LaneSegment
    falling: LaneSegment

    @property
    def borders(self) -> tuple[LaneSegment, LaneSegment]:
        return self.rising, self.falling

    def centre_line(self) -> np.ndarray:
        return normalize_line(self.rising.line + self.falling.line)

    def width_px(self) -> float:
        return float(abs(self.falling.line @ np.r_[self.rising.midpoint, 1.0]))


def reference_direction(role: CameraRole | str) -> np.ndarray:
    return np.array([1.0, 0.0]) if CameraRole(role).is_side else np.array([0.0, -1.0])


# --------------------------------------------------------------------------
# edges and Hough segments


def to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return cv2.cvtColor(img, cv2.COLOR_RGB2GRAY)
    return img


def detect_edges(gray: np.ndarray, low: float = 50.0, high: float = 150.0,
                 mask: np.ndarray | None = None) -> np.ndarray:
    """Canny edges (3x3 Sobel, L2 gradient) as a boolean mask."""
    if not high >= low > 0:
        raise ValueError("Canny thresholds need high >= low > 0")
    g = to_gray(gray)
    if g.dtype != np.uint8:
        g = np.clip(g, 0, 255).astype(np.uint8)
    e = cv2.Canny(g, low, high, apertureSize=3, L2gradient=True) > 0
    if mask is not None:
        e &= mask.astype(bool)
    return e


def _merge(group: list[LaneSegment]) -> LaneSegment:
    base = max(group, key=lambda s: s.length)
    pts = [s.points for s in group if s.points is not None]
    if pts:
        P = np.concatenate(pts)
        c, d = _tls(P)
    else:
        P = np.array([p for s in group for p in (s.a, s.b)])
        c, d = base.midpoint, base.direction
    if d @ base.direction < 0:
        d = -d
    ends = np.array([p for s in group for p in (s.a, s.b)])
    t = (ends - c) @ d
    return replace(base, a=c + t.min() * d, b=c + t.max() * d, strength=sum(s.strength for s in group),
                   points=P if pts else None, frame=None if len({s.frame for s in group}) > 1 else base.frame)


def merge_collinear(segs: list[LaneSegment], dist: float = 2.0, angle_deg: float = 1.0,
                    by_polarity: bool = True) -> list[LaneSegment]:
    """Greedy clustering of collinear segments (strongest first) into single segments.

    A segment joins the first group whose head is collinear with it (either
    segment's line passes within ``dist`` of both endpoints of the other).
    """
    order = sorted(segs, key=lambda s: (-s.strength, -s.length))
    if not order:
        return []
    n = len(order)
    A = np.array([s.a for s in order])
    B = np.array([s.b for s in order])
    D = (B - A) / np.linalg.norm(B - A, axis=1, keepdims=True)
    N = np.c_[-D[:, 1], D[:, 0]]
    Lines = np.c_[N, -(N * A).sum(axis=1)]
    pol = np.array([s.polarity for s in order])
    cos_min = math.cos(math.radians(angle_deg))
    heads: list[int] = []
    members: list[list[int]] = []
    for i in range(n):
        if heads:
            h = np.array(heads)
            ok = np.abs(D[h] @ D[i]) >= cos_min
            if by_polarity:
                ok &= pol[h] == pol[i]
            # head line vs segment ends, and segment line vs head ends
            fwd = (np.abs(Lines[h, :2] @ A[i] + Lines[h, 2]) <= dist) & (np.abs(Lines[h, :2] @ B[i] + Lines[h, 2]) <= dist)
            bwd = (np.abs(A[h] @ Lines[i, :2] + Lines[i, 2]) <= dist) & (np.abs(B[h] @ Lines[i, :2] + Lines[i, 2]) <= dist)
            hit = np.flatnonzero(ok & (fwd | bwd))
            if len(hit):
                members[hit[0]].append(i)
                continue
        heads.append(i)
        members.append([i])
    out = [_merge([order[j] for j in g]) if len(g) > 1 else order[g[0]] for g in members]
    return sorted(out, key=lambda s: (-s.strength, -s.length))


def _support(edges: np.ndarray, a, b) -> int:
    """Edge pixels along a-b; ``edges`` is expected to be cross-dilated already."""
    n = int(max(abs(b[0] - a[0]), abs(b[1] - a[1]))) + 1
    h, w = edges.shape
    xs = np.clip(np.rint(np.linspace(a[0], b[0], n)).astype(int), 0, w - 1)
    ys = np.clip(np.rint(np.linspace(a[1], b[1], n)).astype(int), 0, h - 1)
    return int(np.count_nonzero(edges[ys, xs]))


def detect_lines(edges: np.ndarray, rho: float = 1.0, theta_deg: float = 0.5, votes: int = 50,
                 min_length: float = 40.0, max_gap: float = 10.0, merge_dist: float = 2.0,
                 merge_angle_deg: float = 1.0, space: Space = Space.IMAGE) -> list[LaneSegment]:
    """Probabilistic Hough segments, merged when collinear, strongest first.

    ``strength`` is the number of edge pixels supporting the segment.
    """
    e8 = edges.astype(np.uint8) * 255 if edges.dtype == bool else edges
    L = cv2.HoughLinesP(e8, rho, math.radians(theta_deg), int(votes), minLineLength=min_length,
                        maxLineGap=max_gap)
    if L is None:
        return []
    # a pixel supports the segment when it or a 4-neighbour is an edge
    eb = cv2.dilate(e8, cv2.getStructuringElement(cv2.MORPH_CROSS, (3, 3))) > 0
    segs = []
    for x0, y0, x1, y1 in L.reshape(-1, 4).astype(np.float64):
        if math.hypot(x1 - x0, y1 - y0) < min_length:
            continue
        segs.append(LaneSegment((x0, y0), (x1, y1), space, strength=_support(eb, (x0, y0), (x1, y1))))
    return merge_collinear(segs, merge_dist, merge_angle_deg, by_polarity=False)


# --------------------------------------------------------------------------
# sub-pixel refinement


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = to_gray(gray).astype(np.float32)
    return cv2.Sobel(g, cv2.CV_32F, 1, 0, ksize=3), cv2.Sobel(g, cv2.CV_32F, 0, 1, ksize=3)


def _tls(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = P.mean(axis=0)
    _, _, vt = np.linalg.svd(P - c, full_matrices=False)
    return c, vt[0]


def refine_segment(seg: LaneSegment, grad: tuple[np.ndarray, np.ndarray], halfwidth: int = 4,
                   spacing: float = 2.0, min_points: int = 6) -> LaneSegment | None:
    """Sub-pixel border fit.

    The directional derivative is sampled across the segment at regular
    stations; each station contributes the parabolic peak of the gradient
    along the normal.  A total-least-squares line is fitted to the peaks with
    MAD outlier rejection.  Returns None when too few stations respond.
    """
    gx, gy = grad
    d, n = seg.direction, seg.normal
    L = seg.length
    t = np.arange(spacing, L - spacing + 1e-9, spacing)
    if len(t) < min_points:
        t = np.linspace(0.0, L, max(min_points, 3))
    s = np.arange(-halfwidth, halfwidth + 1, dtype=np.float64)
    base = seg.a[None, :] + t[:, None] * d[None, :]
    P = base[:, None, :] + s[None, :, None] * n[None, None, :]
    mx = P[..., 0].astype(np.float32)
    my = P[..., 1].astype(np.float32)
    sx = cv2.remap(gx, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    sy = cv2.remap(gy, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    g = sx * n[0] + sy * n[1]
    pol = 1 if g.sum() >= 0 else -1
    g = g * pol
    k = np.argmax(g, axis=1)
    peak = g[np.arange(len(t)), k]
    inner = (k > 0) & (k < len(s) - 1)
    strong = peak > 0.3 * np.median(peak) if np.any(peak > 0) else np.zeros(len(t), bool)
    ok = inner & strong & (peak > 1.0)
    if ok.sum() < min_points:
        return None
    idx = np.flatnonzero(ok)
    gm, g0, gp = g[idx, k[idx] - 1], g[idx, k[idx]], g[idx, k[idx] + 1]
    den = gm - 2 * g0 + gp
    off = np.where(np.abs(den) > 1e-9, 0.5 * (gm - gp) / np.where(den == 0, 1, den), 0.0)
    off = np.clip(off, -0.5, 0.5)
    pts = base[idx] + (s[k[idx]] + off)[:, None] * n[None, :]
    keep = np.ones(len(pts), dtype=bool)
    for _ in range(3):
        c, dd = _tls(pts[keep])
        nn = np.array([-dd[1], dd[0]])
        r = (pts - c) @ nn
        mad = np.median(np.abs(r[keep] - np.median(r[keep])))
        new = np.abs(r) <= max(3.0 * 1.4826 * mad, 0.3)
        if new.sum() < min_points or np.array_equal(new, keep):
            break
        keep = new
    c, dd = _tls(pts[keep])
    if dd @ d < 0:
        dd = -dd
    tt = (pts[keep] - c) @ dd
    a, b = c + tt.min() * dd, c + tt.max() * dd
    if np.linalg.norm(b - a) < 1e-6:
        return None
    return replace(seg, a=a, b=b, polarity=pol, points=pts[keep])


def refine_segments(segs: list[LaneSegment], gray: np.ndarray, role: CameraRole | str | None = None,
                    **kw) -> list[LaneSegment]:
    grad = gradients(gray)
    ref = reference_direction(role) if role is not None else None
    out = []
    for s in segs:
        if ref is not None:
            s = s.oriented(ref)
        r = refine_segment(s, grad, **kw)
        if r is not None:
            out.append(r)
    # borders split by Hough often coincide once refined
    return merge_collinear(out, by_polarity=True)


# --------------------------------------------------------------------------
# vanishing point and filters


def _pencil_degenerate(lines: np.ndarray, tol_deg: float = 0.5) -> bool:
    ang = np.degrees(np.arctan2(lines[:, 1], lines[:, 0])) % 180.0
    diff = np.abs(ang[:, None] - ang[None, :])
    diff = np.minimum(diff, 180.0 - diff)
    return bool(diff.max() < tol_deg)


def _wls_point(lines: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    A = lines[:, :2] * np.sqrt(w)[:, None]
    y = -lines[:, 2] * np.sqrt(w)
    M = A.T @ A
    if np.linalg.cond(M) > 1e10:
        return None
    return np.linalg.solve(M, A.T @ y)


def estimate_vanishing_point(segs: list[LaneSegment], robust: bool = False, inlier_dist: float = 20.0,
                             top_k: int = 12) -> VanishingPoint:
    """Length-weighted least-squares intersection of the segments' lines.

    With ``robust`` the estimate is seeded by the best-supported pairwise
    intersection among the ``top_k`` strongest segments and refitted on its
    inliers; otherwise all segments enter the fit.
    """
    if len(segs) < 2:
        raise DegeneratePencilError("need at least two segments")
    lines = np.array([s.line for s in segs])
    w = np.array([s.length for s in segs])
    if _pencil_degenerate(lines):
        raise DegeneratePencilError("all segments are parallel")
    if robust:
        order = np.argsort(-np.array([s.strength or s.length for s in segs]), kind="stable")[:top_k]
        best, best_score = None, -1.0
        for i in range(len(order)):
            for j in range(i + 1, len(order)):
                x = np.cross(lines[order[i]], lines[order[j]])
                if abs(x[2]) < 1e-12:
                    continue
                v = x[:2] / x[2]
                dist = np.abs(lines[:, :2] @ v + lines[:, 2])
                score = w[dist < inlier_dist].sum()
                if score > best_score:
                    best, best_score = v, score
        if best is None:
            raise DegeneratePencilError("no pair of segments intersects")
        v = best
        for _ in range(5):
            inl = np.abs(lines[:, :2] @ v + lines[:, 2]) < inlier_dist
            if inl.sum() < 2 or _pencil_degenerate(lines[inl]):
                break
            nv = _wls_point(lines[inl], w[inl])
            if nv is None:
                break
            if np.linalg.norm(nv - v) < 1e-6:
                v = nv
                break
            v = nv
    else:
        v = _wls_point(lines, w)
        if v is None:
            raise DegeneratePencilError("ill-conditioned vanishing point system")
    dist = np.abs(lines[:, :2] @ v + lines[:, 2])
    count = int((dist < inlier_dist).sum())
    if count < 2:
        raise DegeneratePencilError("fewer than two segments support the vanishing point")
    return VanishingPoint(np.asarray(v, dtype=np.float64), count)


def clip_segment_to_rect(a, b, rect) -> tuple[np.ndarray, np.ndarray] | None:
    """Liang-Barsky clipping of segment a-b to rect (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = rect
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return None
    a = np.asarray(a, dtype=np.float64)
    d = np.array([dx, dy])
    return a + t0 * d, a + t1 * d


def filter_lines(segs: list[LaneSegment], vp: VanishingPoint | None, roi=None,
                 dist_thresh: float = 20.0) -> list[LaneSegment]:
    """Keep segments whose line passes near ``vp`` and which touch ``roi``."""
    out = []
    for s in segs:
        if vp is not None and abs(s.line @ np.r_[vp.v, 1.0]) > dist_thresh:
            continue
        if roi is not None and clip_segment_to_rect(s.a, s.b, roi) is None:
            continue
        out.append(s)
    return out


def filter_by_direction(segs: list[LaneSegment], tol_deg: float = 8.0,
                        ref_deg: float | None = None) -> list[LaneSegment]:
    """Fallback when no vanishing point exists: keep the dominant direction.

    The dominant direction is the length-weighted peak of the axial angle
    histogram (1 deg bins), or ``ref_deg`` when given.
    """
    if not segs:
        return []
    ang = np.array([s.angle_deg() % 180.0 for s in segs])
    if ref_deg is None:
        w = np.array([s.length for s in segs])
        hist = np.zeros(180)
        for a, wt in zip(ang, w):
            for k in range(-2, 3):
                hist[int(round(a + k)) % 180] += wt * (3 - abs(k))
        ref_deg = float(np.argmax(hist))
    diff = np.abs(ang - ref_deg % 180.0)
    diff = np.minimum(diff, 180.0 - diff)
    return [s for s, dd in zip(segs, diff) if dd <= tol_deg]


# --------------------------------------------------------------------------
# border pairing and selection


def pair_borders(segs: list[LaneSegment], min_width: float = 2.0, max_width: float = 80.0,
                 max_angle_deg: float = 6.0) -> list[Marking]:
    """Pair rising borders with falling borders lying just beyond them along the normal.

    Pairs with the longest along-border overlap are taken first (then the
    narrowest), so short texture fragments cannot claim a long border.
    """
    rising = [s for s in segs if s.polarity > 0]
    falling = [s for s in segs if s.polarity < 0]
    cands = []
    for i, r in enumerate(rising):
        for j, f in enumerate(falling):
            if abs(float(r.direction @ f.direction)) < math.cos(math.radians(max_angle_deg)):
                continue
            # along-segment overlap
            t_f = sorted(((f.a - r.a) @ r.direction, (f.b - r.a) @ r.direction))
            overlap = min(t_f[1], r.length) - max(t_f[0], 0.0)
            if overlap <= 0:
                continue
            off = float(f.line @ np.r_[r.midpoint, 1.0])
            # f.line normal equals r's normal when both point the same way
            sep = -off if f.direction @ r.direction > 0 else off
            if min_width <= sep <= max_width:
                cands.append((-overlap, sep, i, j))
    cands.sort()
    used_r, used_f, out = set(), set(), []
    for _, sep, i, j in cands:
        if i in used_r or j in used_f:
            continue
        used_r.add(i)
        used_f.add(j)
        out.append(Marking(rising[i], falling[j]))
    return out


def _foot_x(line: np.ndarray, row: float) -> float:
    if abs(line[0]) < 1e-12:
        return math.inf
    return float(-(line[1] * row + line[2]) / line[0])


def _foot_y(line: np.ndarray, col: float) -> float:
    if abs(line[1]) < 1e-12:
        return -math.inf
    return float(-(line[0] * col + line[2]) / line[1])


def select_lane_pair(segs: list[LaneSegment], role: CameraRole | str, image_size: tuple[int, int],
                     markings: list[Marking] | None = None, **pair_kw) -> list[LaneSegment]:
    """Choose the lane borders used by the pose solver.

    Front/rear: the markings nearest to the bottom-centre on either side of
    the centre column, returned as (left outer, left inner, right inner,
    right outer).  Side: the nearest marking's two borders (upper, lower).
    """
    role = CameraRole(role)
    w, h = image_size
    if markings is None:
        markings = pair_borders(segs, **pair_kw)
    if role.is_side:
        if not markings:
            raise NotEnoughLanesError(f"{role.value}: no lane marking candidate")
        m = max(markings, key=lambda m: _foot_y(m.centre_line(), w / 2.0))
        return [m.rising, m.falling]
    feet = [(_foot_x(m.centre_line(), h - 1.0), m) for m in markings]
    left = [(x, m) for x, m in feet if x < w / 2.0]
    right = [(x, m) for x, m in feet if x >= w / 2.0]
    if not left or not right:
        raise NotEnoughLanesError(f"{role.value}: need a marking on both sides of the centre line")
    ml = max(left, key=lambda t: t[0])[1]
    mr = min(right, key=lambda t: t[0])[1]
    return [ml.rising, ml.falling, mr.rising, mr.falling]


# --------------------------------------------------------------------------
# multi-frame accumulation


class LaneAccumulator:
    """Collects refined borders over a window of frames and merges collinear ones.

    Short dashes seen in different frames end up on the same image line when
    the vehicle drives along the lanes, so merging them recovers long
    borders.  Not thread safe.
    """

    def __init__(self, window: int = 25, dist: float = 2.0, angle_deg: float = 1.0):
        self.window = window
        self.dist = dist
        self.angle_deg = angle_deg
        self._frames: list[tuple[int, list[LaneSegment]]] = []

    def __len__(self) -> int:
        return len(self._frames)

    def add(self, frame: int, segs: list[LaneSegment]) -> None:
        self._frames.append((frame, [replace(s, frame=frame) for s in segs]))
        if len(self._frames) > self.window:
            self._frames.pop(0)

    def segments(self) -> list[LaneSegment]:
        allsegs = [s for _, ss in self._frames for s in ss]
        return merge_collinear(allsegs, self.dist, self.angle_deg, by_polarity=True)

    def clear(self) -> None:
        self._frames.clear()


# --------------------------------------------------------------------------
# debug output


def draw_debug(img: np.ndarray, segs: list[LaneSegment], vp: VanishingPoint | None = None,
               roi=None, selected: list[LaneSegment] | None = None) -> np.ndarray:
    out = img.copy() if img.ndim == 3 else cv2.cvtColor(img, cv2.COLOR_GRAY2RGB)
    if roi is not None:
        x0, y0, x1, y1 = (int(round(v)) for v in roi)
        cv2.rectangle(out, (x0, y0), (x1, y1), (0, 200, 255), 1)
    for s in segs:
        col = (255, 0, 0) if s.polarity >= 0 else (0, 0, 255)
        cv2.line(out, tuple(int(round(v)) for v in s.a), tuple(int(round(v)) for v in s.b), col, 1, cv2.LINE_AA)
    for s in selected or []:
        cv2.line(out, tuple(int(round(v)) for v in s.a), tuple(int(round(v)) for v in s.b), (0, 255, 0), 2,
                 cv2.LINE_AA)
    if vp is not None and np.all(np.abs(vp.v) < 1e5):
        cv2.drawMarker(out, tuple(int(round(v)) for v in vp.v), (255, 255, 0), cv2.MARKER_CROSS, 15, 2)
    return out


def dump_debug(png_path, json_path, img, segs, vp=None, roi=None, selected=None, camera: str = "") -> None:
    cv2.imwrite(str(png_path), cv2.cvtColor(draw_debug(img, segs, vp, roi, selected), cv2.COLOR_RGB2BGR))
    lanes = [{"type": (s.lane_type.value if s.lane_type else None), "edge1": [s.a.tolist(), s.b.tolist()],
              "edge2": [], "polarity": s.polarity, "strength": s.strength} for s in (selected or segs)]
    doc = {"camera": camera, "lanes": lanes, "vanishing_point": None if vp is None else vp.v.tolist()}
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=1)
