"""Synthetic surround-view renderer with exact ground truth.

Frames are rendered by tracing every (super-sampled) fisheye pixel ray to
the ground plane and to optional vertical distractor planes.  The homography
code in :mod:`svcalib.camera_model` is never used here, so the renderer can
serve as an independent oracle for it.

The road frame has lanes running along +y.  The vehicle frame (where the
camera extrinsics live) is placed in the road frame by a per-frame pose
``(x, y, yaw_deg)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .camera_model import (
    ROLES,
    CameraExtrinsics,
    cross_centre,
    CameraRole,
    FisheyeIntrinsics,
    distort_points,
    in_assumed_bounds,
    unproject_points,
)
from .lane_types import LaneType

COLOURS = {"white": (235.0, 235.0, 230.0), "yellow": (235.0, 195.0, 45.0)}
SKY = (170.0, 190.0, 215.0)
BODY = (28.0, 28.0, 32.0)


@dataclass
class Wall:
    """Vertical textured plane standing on the ground segment p0 -> p1 (road frame)."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    height: float = 1.5
    brightness: float = 150.0


@dataclass
class SceneSpec:
    lane_count: int = 3
    lane_spacing: float = 3.5
    marking_width: float = 0.15
    marking_types: list[LaneType] | None = None
    dash_period: float = 9.0
    dash_duty: float = 1.0 / 3.0
    double_gap: float = 0.10
    texture: str = "asphalt"
    texture_seed: int = 7
    texture_contrast: float = 14.0
    ground_level: float = 92.0
    checker_size: float = 0.5
    distractors: list[Wall] = field(default_factory=list)
    illumination: dict[str, float] = field(default_factory=dict)
    max_range: float = 60.0

    def __post_init__(self):
        if not self.lane_spacing > self.marking_width > 0:
            raise ValueError("need lane_spacing > marking_width > 0")
        if self.texture not in ("asphalt", "checker", "uniform"):
            raise ValueError(f"unknown texture {self.texture!r}")
        if self.marking_types is None:
            self.marking_types = [LaneType.SINGLE_WHITE_SOLID] * (self.lane_count + 1)
        self.marking_types = [LaneType(t) for t in self.marking_types]
        if len(self.marking_types) != self.lane_count + 1:
            raise ValueError("marking_types needs lane_count + 1 entries")

    def marking_centres(self) -> np.ndarray:
        n = self.lane_count + 1
        return (np.arange(n) - (n - 1) / 2.0) * self.lane_spacing

    def stripes(self) -> list[tuple[float, float, str, bool]]:
        """(centre_x, width, colour, dotted) of every painted stripe."""
        out = []
        w = self.marking_width
        for xc, lt in zip(self.marking_centres(), self.marking_types):
            st = lt.stripes()
            if len(st) == 1:
                out.append((float(xc), w, st[0][0], st[0][1]))
            else:
                off = (w + self.double_gap) / 2.0
                out.append((float(xc - off), w, st[0][0], st[0][1]))
                out.append((float(xc + off), w, st[1][0], st[1][1]))
        return out

    def to_dict(self) -> dict:
        return {
            "lane_count": self.lane_count, "lane_spacing": self.lane_spacing,
            "marking_width": self.marking_width, "marking_types": [t.value for t in self.marking_types],
            "dash_period": self.dash_period, "dash_duty": self.dash_duty, "double_gap": self.double_gap,
            "texture": self.texture, "texture_seed": self.texture_seed,
            "texture_contrast": self.texture_contrast, "ground_level": self.ground_level,
            "checker_size": self.checker_size,
            "distractors": [{"p0": list(w.p0), "p1": list(w.p1), "height": w.height, "brightness": w.brightness}
                            for w in self.distractors],
            "illumination": dict(self.illumination), "max_range": self.max_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["distractors"] = [Wall(tuple(w["p0"]), tuple(w["p1"]), w.get("height", 1.5), w.get("brightness", 150.0))
                            for w in d.get("distractors", [])]
        return cls(**d)


@dataclass
class RigSpec:
    intrinsics: dict[CameraRole, FisheyeIntrinsics]
    extrinsics: dict[CameraRole, CameraExtrinsics]
    vehicle_yaw_deg: float = 0.0
    # vehicle body rectangle in the vehicle frame: (x_min, x_max, y_min, y_max)
    body: tuple[float, float, float, float] = (-0.95, 0.95, -2.45, 2.3)

    def __post_init__(self):
        self.intrinsics = {CameraRole(k): v for k, v in self.intrinsics.items()}
        self.extrinsics = {CameraRole(k): v for k, v in self.extrinsics.items()}
        for role, ext in self.extrinsics.items():
            if not in_assumed_bounds(ext):
                raise ValueError(f"{role.value} extrinsics outside the assumed ranges: {ext}")
        if abs(self.vehicle_yaw_deg) > 2.0:
            raise ValueError("vehicle yaw relative to the lanes must lie within +-2 deg")

    def to_dict(self) -> dict:
        return {
            "cameras": {r.value: {"intrinsics": self.intrinsics[r].to_dict(),
                                  "extrinsics": self.extrinsics[r].to_dict()} for r in self.extrinsics},
            "vehicle_yaw_deg": self.vehicle_yaw_deg, "body": list(self.body),
        }


def default_rig(vehicle_yaw_deg: float = 0.0) -> RigSpec:
    """A plausible four-camera rig (positions re-centred on the cross centre)."""
    k = (0.03, -0.01, 0.002, -0.0002)
    intr = {
        CameraRole.FRONT: FisheyeIntrinsics(250.0, 250.0, 480.5, 270.2, k),
        CameraRole.REAR: FisheyeIntrinsics(248.0, 248.5, 479.0, 271.0, k),
        CameraRole.LEFT: FisheyeIntrinsics(251.0, 250.5, 481.0, 269.5, k),
        CameraRole.RIGHT: FisheyeIntrinsics(249.5, 249.0, 479.5, 270.5, k),
    }
    ext = {
        CameraRole.FRONT: CameraExtrinsics(45.0, 3.0, -2.0, 0.02, 2.25, 0.75),
        CameraRole.REAR: CameraExtrinsics(40.0, -2.0, 1.5, -0.01, -2.45, 0.95),
        CameraRole.LEFT: CameraExtrinsics(55.0, 2.0, -1.0, -1.02, 0.05, 1.00),
        CameraRole.RIGHT: CameraExtrinsics(60.0, -1.5, 2.0, 1.01, 0.03, 1.02),
    }
    ext = recentre_on_cross_centre(ext)
    return RigSpec(intr, ext, vehicle_yaw_deg)


def recentre_on_cross_centre(ext: dict) -> dict:
    cc = cross_centre({r: e.position for r, e in ext.items()})
    return {r: e.with_position(x=e.x - cc[0], y=e.y - cc[1]) for r, e in ext.items()}


# --------------------------------------------------------------------------
# textures


@lru_cache(maxsize=8)
def _asphalt_tile(seed: int, size: int = 1024) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((size, size))
    f = np.fft.fftfreq(size)
    fx, fy = np.meshgrid(f, f)
    rr = np.hypot(fx, fy)
    # band of feature sizes ~ 2 to 12 cm at 5 mm per texel
    spec = np.exp(-(rr * 5.0) ** 2) + 0.6 * np.exp(-(rr * 12.0) ** 2) - 0.8 * np.exp(-(rr * 60.0) ** 2)
    tile = np.real(np.fft.ifft2(np.fft.fft2(noise) * spec))
    tile = (tile - tile.mean()) / tile.std()
    return tile.astype(np.float32)


TEXEL = 0.005


def _sample_tile(tile: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n = tile.shape[0]
    u = X / TEXEL
    v = Y / TEXEL
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = (u - u0).astype(np.float32)
    fv = (v - v0).astype(np.float32)
    i0 = u0.astype(np.int64) % n
    j0 = v0.astype(np.int64) % n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    top = tile[j0, i0] * (1 - fu) + tile[j0, i1] * fu
    bot = tile[j1, i0] * (1 - fu) + tile[j1, i1] * fu
    return top * (1 - fv) + bot * fv


def ground_luminance(scene: SceneSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if scene.texture == "uniform":
        return np.full(X.shape, scene.ground_level, dtype=np.float32)
    if scene.texture == "checker":
        s = scene.checker_size
        c = (np.floor(X / s) + np.floor(Y / s)) % 2
        return (scene.ground_level + (c - 0.5) * 2 * scene.texture_contrast).astype(np.float32)
    t = _sample_tile(_asphalt_tile(scene.texture_seed), X, Y)
    return scene.ground_level + scene.texture_contrast * t


def painted(scene: SceneSpec, X: np.ndarray, Y: np.ndarray, dash_phase: float = 0.0):
    """Per-point paint colour index (-1 none, 0 white, 1 yellow)."""
    out = np.full(X.shape, -1, dtype=np.int8)
    period, on = scene.dash_period, scene.dash_duty * scene.dash_period
    for xc, w, colour, dotted in scene.stripes():
        m = np.abs(X - xc) < w / 2.0
        if dotted:
            m &= np.mod(Y - dash_phase, period) < on
        out[m] = 0 if colour == "white" else 1
    return out


# --------------------------------------------------------------------------
# rendering


@lru_cache(maxsize=8)
def _subpixel_rays(intr: FisheyeIntrinsics, ss: int):
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    u, v = np.meshgrid(np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64))
    px = []
    for oy in offs:
        for ox in offs:
            px.append(np.stack([(u + ox).ravel(), (v + oy).ravel()], 1))
    rays = unproject_points(np.concatenate(px), intr)
    valid = np.arccos(np.clip(rays[:, 2], -1, 1)) < intr.half_fov
    return rays.astype(np.float32), valid


def _rz(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _road_rays(rays: np.ndarray, rig: RigSpec, role: CameraRole, pose) -> tuple[np.ndarray, np.ndarray]:
    """Camera rays -> road-frame directions, plus the camera centre in the road frame."""
    vx, vy, vyaw = pose
    ext = rig.extrinsics[role]
    Rz = _rz(vyaw)
    R = Rz @ ext.camera_from_world(role).T
    return rays @ R.T.astype(rays.dtype), Rz @ ext.position + np.array([vx, vy, 0.0])


def _ground_hit(d: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dz = d[:, 2]
    hit = dz < -1e-6
    t = np.full(len(d), np.inf, dtype=d.dtype)
    t[hit] = -C[2] / dz[hit]
    return t, hit


def trace_to_ground(pixels: np.ndarray, rig: RigSpec, cam: CameraRole | str,
                    vehicle_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Road-frame ground point seen by each fisheye pixel (N, 2), with a hit mask.

    Same ray-plane intersection as the renderer, in double precision.
    """
    role = CameraRole(cam)
    rays = unproject_points(np.asarray(pixels, dtype=np.float64), rig.intrinsics[role])
    d, C = _road_rays(rays, rig, role, vehicle_pose)
    t, hit = _ground_hit(d, C)
    xy = np.full((len(d), 2), np.nan)
    xy[hit] = C[:2] + t[hit, None] * d[hit, :2]
    return xy, hit


def render_fisheye_view(scene: SceneSpec, cam: CameraRole | str, rig: RigSpec,
                        resolution: tuple[int, int] | None = None,
                        vehicle_pose: tuple[float, float, float] | None = None,
                        supersample: int = 2, dash_phase: float = 0.0) -> np.ndarray:
    """Ray-trace one fisheye frame (H, W, 3) uint8 RGB.

    ``vehicle_pose`` = (x, y, yaw_deg) of the vehicle in the road frame;
    defaults to (0, 0, rig.vehicle_yaw_deg).  ``resolution`` (w, h) must match
    the intrinsics when given.
    """
    role = CameraRole(cam)
    intr = rig.intrinsics[role]
    ext = rig.extrinsics[role]
    if resolution is not None and tuple(resolution) != (intr.width, intr.height):
        raise ValueError("resolution must equal the intrinsics' sensor size")
    vx, vy, vyaw = vehicle_pose if vehicle_pose is not None else (0.0, 0.0, rig.vehicle_yaw_deg)

    rays, infield = _subpixel_rays(intr, supersample)
    d, C = _road_rays(rays, rig, role, (vx, vy, vyaw))
    d = d.astype(np.float32)

    n = len(d)
    col = np.empty((n, 3), dtype=np.float32)
    col[:] = SKY
    t, hit = _ground_hit(d, C)
    hit &= infield
    X = C[0] + t * d[:, 0]
    Y = C[1] + t * d[:, 1]
    hit &= np.hypot(X - C[0], Y - C[1]) < scene.max_range

    idx = np.flatnonzero(hit)
    gx, gy = X[idx], Y[idx]
    lum = ground_luminance(scene, gx, gy)
    g = np.repeat(lum[:, None], 3, axis=1)
    paint = painted(scene, gx, gy, dash_phase)
    g[paint == 0] = COLOURS["white"]
    g[paint == 1] = COLOURS["yellow"]
    # vehicle body footprint, expressed back in the vehicle frame
    lx = math.cos(math.radians(vyaw)) * (gx - vx) + math.sin(math.radians(vyaw)) * (gy - vy)
    ly = -math.sin(math.radians(vyaw)) * (gx - vx) + math.cos(math.radians(vyaw)) * (gy - vy)
    x0, x1, y0, y1 = rig.body
    g[(lx > x0) & (lx < x1) & (ly > y0) & (ly < y1)] = BODY
    col[idx] = g

    for wall in scene.distractors:
        _render_wall(scene, wall, C, d, infield, t, col)

    col[~infield] = 0.0
    gain = scene.illumination.get(role.value, 1.0)
    ss2 = supersample * supersample
    img = col.reshape(ss2, intr.height, intr.width, 3).mean(axis=0) * gain
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _render_wall(scene, wall: Wall, C, d, infield, t_ground, col):
    p0 = np.asarray(wall.p0, dtype=np.float64)
    p1 = np.asarray(wall.p1, dtype=np.float64)
    u = p1 - p0
    L = np.linalg.norm(u)
    u /= L
    nrm = np.array([-u[1], u[0]])
    denom = d[:, 0] * nrm[0] + d[:, 1] * nrm[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((p0 - C[:2]) @ nrm) / denom
    ok = infield & np.isfinite(t) & (t > 0) & (t < t_ground)
    hx = C[0] + t * d[:, 0]
    hy = C[1] + t * d[:, 1]
    hz = C[2] + t * d[:, 2]
    s = (hx - p0[0]) * u[0] + (hy - p0[1]) * u[1]
    ok &= (s >= 0) & (s <= L) & (hz >= 0) & (hz <= wall.height)
    idx = np.flatnonzero(ok)
    tex = _sample_tile(_asphalt_tile(scene.texture_seed + 101), s[idx] * 0.5, hz[idx] * 0.5)
    lum = wall.brightness + 35.0 * tex
    # horizontal courses make the wall clearly non-planar with the ground
    lum = np.where(np.mod(hz[idx], 0.3) < 0.03, lum - 60.0, lum)
    col[idx] = np.repeat(lum[:, None], 3, axis=1)
    t_ground[idx] = t[idx]


# --------------------------------------------------------------------------
# annotations


def lane_edge_annotations(scene: SceneSpec, role: CameraRole | str, rig: RigSpec,
                          vehicle_pose: tuple[float, float, float], dash_phase: float = 0.0,
                          spacing: float = 0.25, reach: float = 25.0) -> list[dict]:
    """Analytic lane-edge points projected into one fisheye frame.

    Every marking yields ``edge1`` (left border) and ``edge2`` (right border)
    in fisheye pixel coordinates; dashed stripes contribute painted parts only.
    ``dash_phase_m`` is the dash pattern phase seen from the vehicle, which
    advances with the distance driven.
    """
    role = CameraRole(role)
    intr, ext = rig.intrinsics[role], rig.extrinsics[role]
    vx, vy, vyaw = vehicle_pose
    c, s = math.cos(math.radians(vyaw)), math.sin(math.radians(vyaw))
    ys = np.arange(vy - reach, vy + reach, spacing)
    period, on = scene.dash_period, scene.dash_duty * scene.dash_period
    out = []
    w = scene.marking_width
    for xc, lt in zip(scene.marking_centres(), scene.marking_types):
        stripes = lt.stripes()
        if len(stripes) == 1:
            left, right = xc - w / 2, xc + w / 2
            dotted = stripes[0][1]
        else:
            off = (w + scene.double_gap) / 2.0
            left, right = xc - off - w / 2, xc + off + w / 2
            dotted = all(st[1] for st in stripes)
        yy = ys[np.mod(ys - dash_phase, period) < on] if dotted else ys
        edges = []
        for ex in (left, right):
            # road -> vehicle frame
            gx, gy = ex - vx, yy - vy
            px_v = c * gx + s * gy
            py_v = -s * gx + c * gy
            X = np.c_[px_v - ext.x, py_v - ext.y, np.full(len(yy), -ext.z)]
            rays = X @ ext.camera_from_world(role).T
            px, valid = distort_points(rays, intr)
            valid &= (px[:, 0] >= 0) & (px[:, 1] >= 0) & (px[:, 0] <= intr.width - 1) & (px[:, 1] <= intr.height - 1)
            edges.append(px[valid].round(3).tolist())
        if edges[0] or edges[1]:
            out.append({"type": lt.value, "edge1": edges[0], "edge2": edges[1],
                        "centre_x_m": float(xc),
                        "dash_phase_m": float(np.mod(vy - dash_phase, period)) if dotted else None})
    return out
