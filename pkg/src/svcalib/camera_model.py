"""Fisheye projection, Euler rotations and ground-plane homographies.

Frames
------
World (vehicle) frame: origin on the ground below the cross centre of the four
cameras, x to the right, y along the driving direction, z up.  Positions are
metres, angles degrees.

Every camera role owns a *virtual* top-down frame whose forward axis is the
camera's nominal viewing direction (front: +y, left: -x, rear: -y,
right: +x).  Virtual axes are: x = right of forward, y = backwards
(image rows grow towards the vehicle), z = down.  A camera looking straight
down with its image "up" pointing forward has the identity camera-to-virtual
rotation, which is pitch 90, yaw 0, roll 0.

The camera-to-virtual rotation is composed as::

    R = rot_pitch(pitch - 90) @ rot_yaw(yaw) @ rot_roll(roll)

so a left-multiplied pitch increment and a right-multiplied roll increment
change exactly one Euler angle; a left-multiplied yaw increment does not and
is recovered by decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable

import cv2
import numpy as np

from .errors import NoGroundVisibleError, NonInvertiblePointError, OutOfFieldError


class CameraRole(str, Enum):
    FRONT = "front"
    REAR = "rear"
    LEFT = "left"
    RIGHT = "right"

    @property
    def heading_deg(self) -> float:
        """Rotation of the role's forward axis from world +y, counter-clockwise."""
        return {"front": 0.0, "left": 90.0, "rear": 180.0, "right": -90.0}[self.value]

    @property
    def is_side(self) -> bool:
        return self in (CameraRole.LEFT, CameraRole.RIGHT)


ROLES = (CameraRole.FRONT, CameraRole.REAR, CameraRole.LEFT, CameraRole.RIGHT)


# --------------------------------------------------------------------------
# intrinsics


@dataclass(frozen=True)
class FisheyeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    width: int = 960
    height: int = 540
    fov_deg: float = 190.0

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        if len(self.k) != 4:
            raise ValueError("k must hold four Kannala-Brandt coefficients")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the sensor")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def half_fov(self) -> float:
        return math.radians(self.fov_deg) / 2.0

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "k": list(self.k), "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FisheyeIntrinsics":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            k=tuple(d.get("k", (0, 0, 0, 0))), width=int(d["width"]), height=int(d["height"]),
            fov_deg=float(d.get("fov_deg", 190.0)),
        )


@dataclass(frozen=True)
class PinholeSpec:
    """Ideal pinhole camera the fisheye frames are undistorted to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_fisheye(cls, intr: FisheyeIntrinsics, fov_deg: float = 140.0) -> "PinholeSpec":
        # same focal; each half-extent is the smaller of fov/2 and what the sensor sees
        half = math.radians(fov_deg) / 2.0
        th_x = min(half, kb_theta(max(intr.cx, intr.width - intr.cx) / intr.fx, intr.k))
        th_y = min(half, kb_theta(max(intr.cy, intr.height - intr.cy) / intr.fy, intr.k))
        hw = int(math.ceil(intr.fx * math.tan(th_x)))
        hh = int(math.ceil(intr.fy * math.tan(th_y)))
        return cls(intr.fx, intr.fy, float(hw), float(hh), 2 * hw, 2 * hh)


def kb_radius(theta, k) -> np.ndarray:
    """Distorted radius r_d = theta (1 + k1 theta^2 + ... + k4 theta^8)."""
    t2 = np.square(theta)
    k1, k2, k3, k4 = k
    return theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))


def _kb_radius_deriv(theta, k):
    t2 = np.square(theta)
    k1, k2, k3, k4 = k
    return 1.0 + t2 * (3 * k1 + t2 * (5 * k2 + t2 * (7 * k3 + t2 * 9 * k4)))


def kb_theta(r_d, k, max_iter: int = 50, tol: float = 1e-12, theta_max: float = 2.5):
    """Invert the KB polynomial for the incidence angle by damped Newton.

    Works on scalars and arrays.  Raises NonInvertiblePointError when any
    entry fails to converge within ``max_iter`` iterations.
    """
    r = np.asarray(r_d, dtype=np.float64)
    theta = np.clip(r.copy(), 0.0, theta_max)
    done = np.zeros(r.shape, dtype=bool)
    for _ in range(max_iter):
        f = kb_radius(theta, k) - r
        done = np.abs(f) <= tol
        if done.all():
            break
        d = _kb_radius_deriv(theta, k)
        d = np.where(np.abs(d) < 1e-9, 1e-9, d)
        step = f / d
        new = theta - step
        # damping: halve the step while the residual grows
        for _ in range(20):
            worse = np.abs(kb_radius(new, k) - r) > np.abs(f)
            worse &= ~done
            if not worse.any():
                break
            step = np.where(worse, step * 0.5, step)
            new = theta - step
        theta = np.where(done, theta, np.clip(new, 0.0, theta_max))
    else:
        f = kb_radius(theta, k) - r
        done = np.abs(f) <= max(tol, 1e-12 * (1 + np.max(np.abs(r), initial=0)))
    if not np.all(done):
        raise NonInvertiblePointError("Kannala-Brandt inversion did not converge")
    return float(theta) if np.ndim(r_d) == 0 else theta


# --------------------------------------------------------------------------
# projection


def distort_points(rays: np.ndarray, intr: FisheyeIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame rays (N, 3) to fisheye pixels.

    Returns ``(pixels, valid)``; rays beyond half the field of view are
    flagged invalid and get NaN pixels.
    """
    rays = np.asarray(rays, dtype=np.float64).reshape(-1, 3)
    x, y, z = rays[:, 0], rays[:, 1], rays[:, 2]
    r = np.hypot(x, y)
    theta = np.arctan2(r, z)
    valid = theta < intr.half_fov
    rd = kb_radius(theta, intr.k)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(r > 1e-15, rd / np.where(r > 1e-15, r, 1.0), 0.0)
    px = np.stack([intr.fx * x * s + intr.cx, intr.fy * y * s + intr.cy], axis=1)
    px[~valid] = np.nan
    return px, valid


def distort_point(ray: Iterable[float], intr: FisheyeIntrinsics) -> np.ndarray:
    """Project one camera-frame ray direction to a fisheye pixel."""
    px, valid = distort_points(np.asarray(ray, dtype=np.float64)[None], intr)
    if not valid[0]:
        raise OutOfFieldError(f"ray {tuple(ray)} is outside the {intr.fov_deg} deg field")
    return px[0]


def unproject_points(pixels: np.ndarray, intr: FisheyeIntrinsics) -> np.ndarray:
    """Fisheye pixels (N, 2) to unit camera-frame rays (N, 3)."""
    p = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    mx = (p[:, 0] - intr.cx) / intr.fx
    my = (p[:, 1] - intr.cy) / intr.fy
    rd = np.hypot(mx, my)
    theta = kb_theta(rd, intr.k)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(rd > 1e-15, np.sin(theta) / np.where(rd > 1e-15, rd, 1.0), 1.0)
    return np.stack([mx * s, my * s, np.cos(theta)], axis=1)


def undistort_point(p_px, intr: FisheyeIntrinsics, pinhole: PinholeSpec | None = None) -> np.ndarray:
    """Map a fisheye pixel to the ideal pinhole pixel of the undistorted image."""
    pinhole = pinhole or PinholeSpec.from_fisheye(intr)
    ray = unproject_points(np.asarray(p_px, dtype=np.float64)[None], intr)[0]
    if ray[2] <= 1e-12:
        raise OutOfFieldError("point lies at or beyond 90 deg and has no pinhole image")
    return np.array([pinhole.fx * ray[0] / ray[2] + pinhole.cx, pinhole.fy * ray[1] / ray[2] + pinhole.cy])


def pinhole_to_fisheye(points: np.ndarray, intr: FisheyeIntrinsics, pinhole: PinholeSpec) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rays = np.stack([(p[:, 0] - pinhole.cx) / pinhole.fx, (p[:, 1] - pinhole.cy) / pinhole.fy, np.ones(len(p))], 1)
    return distort_points(rays, intr)[0]


@lru_cache(maxsize=16)
def _undistort_maps(intr: FisheyeIntrinsics, pinhole: PinholeSpec):
    u, v = np.meshgrid(np.arange(pinhole.width, dtype=np.float64), np.arange(pinhole.height, dtype=np.float64))
    rays = np.stack([(u - pinhole.cx) / pinhole.fx, (v - pinhole.cy) / pinhole.fy, np.ones_like(u)], -1)
    px, valid = distort_points(rays.reshape(-1, 3), intr)
    px[~valid] = -1.0
    mx = px[:, 0].reshape(u.shape).astype(np.float32)
    my = px[:, 1].reshape(u.shape).astype(np.float32)
    return mx, my


def undistort_image(img: np.ndarray, intr: FisheyeIntrinsics, pinhole: PinholeSpec | None = None,
                    fill: int | tuple = 0) -> np.ndarray:
    """Resample a fisheye frame onto the pinhole grid (bilinear, sentinel fill)."""
    pinhole = pinhole or PinholeSpec.from_fisheye(intr)
    mx, my = _undistort_maps(intr, pinhole)
    if img.ndim == 3 and np.isscalar(fill):
        fill = (fill,) * img.shape[2]
    return cv2.remap(img, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=fill)


def undistorted_valid_mask(intr: FisheyeIntrinsics, pinhole: PinholeSpec) -> np.ndarray:
    mx, my = _undistort_maps(intr, pinhole)
    return (mx >= 0) & (my >= 0) & (mx <= intr.width - 1) & (my <= intr.height - 1)


# --------------------------------------------------------------------------
# rotations


def rot_pitch(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rot_yaw(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot_roll(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose_local_rotation(pitch: float, yaw: float, roll: float) -> np.ndarray:
    return rot_pitch(pitch - 90.0) @ rot_yaw(yaw) @ rot_roll(roll)


def decompose_local_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`compose_local_rotation`, returns (pitch, yaw, roll)."""
    # R = Rx(-a) Ry(-w) Rz(t) in right-handed textbook form
    b = math.asin(max(-1.0, min(1.0, R[0, 2])))
    a = math.atan2(-R[1, 2], R[2, 2])
    c = math.atan2(-R[0, 1], R[0, 0])
    return math.degrees(-a) + 90.0, math.degrees(-b), math.degrees(c)


def virtual_from_world(heading_deg: float) -> np.ndarray:
    h = math.radians(heading_deg)
    fwd = np.array([-math.sin(h), math.cos(h), 0.0])
    right = np.array([math.cos(h), math.sin(h), 0.0])
    return np.stack([right, -fwd, np.array([0.0, 0.0, -1.0])])


@dataclass(frozen=True)
class CameraExtrinsics:
    pitch: float
    yaw: float
    roll: float
    x: float = 0.0
    y: float = 0.0
    z: float = 1.0

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.pitch, self.yaw, self.roll)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def local_rotation(self) -> np.ndarray:
        """Camera-to-virtual rotation (the matrix the pose solver updates)."""
        return compose_local_rotation(self.pitch, self.yaw, self.roll)

    def camera_from_world(self, role: CameraRole | str) -> np.ndarray:
        role = CameraRole(role)
        return self.local_rotation().T @ virtual_from_world(role.heading_deg)

    def with_rotation(self, R: np.ndarray) -> "CameraExtrinsics":
        p, w, r = decompose_local_rotation(R)
        return replace(self, pitch=p, yaw=w, roll=r)

    def with_position(self, x=None, y=None, z=None) -> "CameraExtrinsics":
        return replace(self, x=self.x if x is None else float(x), y=self.y if y is None else float(y),
                       z=self.z if z is None else float(z))

    def to_dict(self) -> dict:
        return {"angles_deg": {"pitch": self.pitch, "yaw": self.yaw, "roll": self.roll},
                "position_m": [self.x, self.y, self.z]}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraExtrinsics":
        a, p = d["angles_deg"], d["position_m"]
        return cls(float(a["pitch"]), float(a["yaw"]), float(a["roll"]), float(p[0]), float(p[1]), float(p[2]))


def in_assumed_bounds(ext: CameraExtrinsics) -> bool:
    return 20.0 <= ext.pitch <= 90.0 and abs(ext.yaw) <= 10.0 and abs(ext.roll) <= 10.0


# --------------------------------------------------------------------------
# ground plane


@dataclass(frozen=True)
class SurroundPlaneCamera:
    """Virtual top-down camera over the ground plane.

    ``yaw_deg`` rotates the plane axes about world z and ``origin_world`` is
    the ground point shown at ``origin_px``; the defaults give the global
    surround canvas with the vehicle at its centre and forward pointing up.
    """

    meters_per_pixel: float = 0.01
    canvas_width: int = 2000
    canvas_height: int = 2000
    origin_px: tuple[float, float] = (1000.0, 1000.0)
    yaw_deg: float = 0.0
    origin_world: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.meters_per_pixel <= 0:
            raise ValueError("meters_per_pixel must be positive")
        u, v = self.origin_px
        if not (0 <= u <= self.canvas_width and 0 <= v <= self.canvas_height):
            raise ValueError("origin_px must lie inside the canvas")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        h = math.radians(self.yaw_deg)
        right = np.array([math.cos(h), math.sin(h)])
        fwd = np.array([-math.sin(h), math.cos(h)])
        return right, fwd

    def matrix(self) -> np.ndarray:
        """Homogeneous plane pixel (u, v, 1) -> homogeneous ground point (X, Y, 1)."""
        right, fwd = self.axes()
        m = self.meters_per_pixel
        u0, v0 = self.origin_px
        ox, oy = self.origin_world
        # ground = origin + (u-u0) m right + (v0-v) m fwd
        A = np.array([
            [m * right[0], -m * fwd[0], ox - u0 * m * right[0] + v0 * m * fwd[0]],
            [m * right[1], -m * fwd[1], oy - u0 * m * right[1] + v0 * m * fwd[1]],
            [0.0, 0.0, 1.0],
        ])
        return A

    def pixel_to_world(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        return (self.matrix() @ np.c_[uv, np.ones(len(uv))].T).T[:, :2]

    def world_to_pixel(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        p = np.linalg.solve(self.matrix(), np.c_[xy, np.ones(len(xy))].T).T
        return p[:, :2]


def cross_centre(positions: dict) -> np.ndarray:
    """Ground intersection of the front-rear and left-right camera lines."""
    p = {CameraRole(k): np.asarray(v, dtype=np.float64)[:2] for k, v in positions.items()}
    a, b = p[CameraRole.FRONT], p[CameraRole.REAR]
    c, d = p[CameraRole.LEFT], p[CameraRole.RIGHT]
    A = np.array([b - a, c - d]).T
    s = np.linalg.solve(A, c - a)
    return a + s[0] * (b - a)


def local_plane(role: CameraRole | str, ext: CameraExtrinsics, mpp: float = 0.01,
                lateral_m: float = 5.0, ahead_m: tuple[float, float] = (-1.0, 9.0)) -> SurroundPlaneCamera:
    """Per-camera plane with the camera's nominal forward pointing up.

    The origin pixel sits below the camera; ``ahead_m`` is the forward range
    shown and ``lateral_m`` the half width.
    """
    role = CameraRole(role)
    w = int(round(2 * lateral_m / mpp))
    h = int(round((ahead_m[1] - ahead_m[0]) / mpp))
    return SurroundPlaneCamera(mpp, w, h, (w / 2.0, ahead_m[1] / mpp), role.heading_deg, (ext.x, ext.y))


def ground_homography(ext: CameraExtrinsics, role: CameraRole | str, pinhole: PinholeSpec,
                      plane: SurroundPlaneCamera) -> np.ndarray:
    """Point homography from plane pixels to undistorted-image pixels."""
    if ext.z <= 0:
        raise NoGroundVisibleError("camera height must be positive")
    Rcw = ext.camera_from_world(role)
    # rays through the pinhole corners must reach the ground somewhere
    corners = np.array([[0, 0], [pinhole.width, 0], [0, pinhole.height], [pinhole.width, pinhole.height]], float)
    rays = np.c_[(corners[:, 0] - pinhole.cx) / pinhole.fx, (corners[:, 1] - pinhole.cy) / pinhole.fy, np.ones(4)]
    if not np.any((Rcw.T @ rays.T)[2] < -1e-9):
        raise NoGroundVisibleError("no ground plane in the camera's view")
    M = np.array([[1.0, 0.0, -ext.x], [0.0, 1.0, -ext.y], [0.0, 0.0, -ext.z]])
    H = pinhole.K @ Rcw @ M @ plane.matrix()
    if abs(np.linalg.det(H)) < 1e-12:
        raise NoGroundVisibleError("degenerate ground homography")
    return H


def apply_homography(H: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map (N, 2) points; returns (mapped, w) where w <= 0 marks points behind."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    q = (H @ np.c_[pts, np.ones(len(pts))].T).T
    w = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = q[:, :2] / w[:, None]
    return out, w


def project_to_surround(img: np.ndarray, H: np.ndarray, plane: SurroundPlaneCamera,
                        fill: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-warp an undistorted image onto the plane.

    Returns ``(raster, mask)``; plane pixels whose preimage is outside the
    source image or behind the camera are masked out (mask False).
    """
    size = (plane.canvas_width, plane.canvas_height)
    out = cv2.warpPerspective(img, H, size, flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=fill)
    u, v = np.meshgrid(np.arange(size[0], dtype=np.float64), np.arange(size[1], dtype=np.float64))
    q = H @ np.stack([u.ravel(), v.ravel(), np.ones(u.size)])
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y = q[0] / q[2], q[1] / q[2]
    h, w = img.shape[:2]
    mask = (q[2] > 0) & (x >= 0) & (y >= 0) & (x <= w - 1) & (y <= h - 1)
    mask = mask.reshape(size[1], size[0])
    out[~mask] = fill
    return out, mask


def ground_to_fisheye(points_xy: np.ndarray, intr: FisheyeIntrinsics, ext: CameraExtrinsics,
                      role: CameraRole | str) -> tuple[np.ndarray, np.ndarray]:
    """World ground points (N, 2) to fisheye pixels; returns (pixels, valid)."""
    xy = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    X = np.c_[xy - ext.position[:2], np.full(len(xy), -ext.z)]
    rays = X @ ext.camera_from_world(role).T
    px, valid = distort_points(rays, intr)
    valid &= (px[:, 0] >= 0) & (px[:, 1] >= 0) & (px[:, 0] <= intr.width - 1) & (px[:, 1] <= intr.height - 1)
    return px, valid


def plane_to_fisheye_maps(intr: FisheyeIntrinsics, ext: CameraExtrinsics, role: CameraRole | str,
                          plane: SurroundPlaneCamera, region: tuple[int, int, int, int] | None = None):
    """Remap tables sending plane pixels straight to fisheye pixels.

    ``region`` = (u0, v0, u1, v1) restricts the tables to a sub-rectangle.
    Invalid entries are set to -1.
    """
    u0, v0, u1, v1 = region or (0, 0, plane.canvas_width, plane.canvas_height)
    u, v = np.meshgrid(np.arange(u0, u1, dtype=np.float64), np.arange(v0, v1, dtype=np.float64))
    xy = plane.pixel_to_world(np.stack([u.ravel(), v.ravel()], 1))
    px, valid = ground_to_fisheye(xy, intr, ext, role)
    px[~valid] = -1.0
    return (px[:, 0].reshape(u.shape).astype(np.float32), px[:, 1].reshape(u.shape).astype(np.float32))


def warp_fisheye_to_plane(img: np.ndarray, intr: FisheyeIntrinsics, ext: CameraExtrinsics,
                          role: CameraRole | str, plane: SurroundPlaneCamera,
                          region: tuple[int, int, int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    mx, my = plane_to_fisheye_maps(intr, ext, role, plane, region)
    out = cv2.remap(img, mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return out, mx >= 0


# --------------------------------------------------------------------------
# homogeneous line helpers


def line_through(p, q) -> np.ndarray:
    return np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0])


def intersect_lines(l1, l2) -> np.ndarray | None:
    x = np.cross(l1, l2)
    if abs(x[2]) < 1e-12 * max(1.0, np.abs(x[:2]).max()):
        return None
    return x[:2] / x[2]


def normalize_line(l) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    return l / np.hypot(l[0], l[1])


def point_line_distance(p, l) -> float:
    l = normalize_line(l)
    return abs(l[0] * p[0] + l[1] * p[1] + l[2])


def transport_line_to_plane(H: np.ndarray, l_img) -> np.ndarray:
    """Image line -> plane line for a plane-to-image point homography ``H``."""
    return normalize_line(H.T @ np.asarray(l_img, dtype=np.float64))


def transport_line_to_image(H: np.ndarray, l_plane) -> np.ndarray:
    return normalize_line(np.linalg.solve(H.T, np.asarray(l_plane, dtype=np.float64)))
