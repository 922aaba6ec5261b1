"""Independent reference computations shared by the tests.

Lane borders are built analytically from the scene geometry (never from
rendered pixels) and projected with plain pinhole maths, so the solver and
the refinement stages can be checked against exact inputs.
"""

from __future__ import annotations

import numpy as np

from svcalib.camera_model import (
    ROLES,
    CameraExtrinsics,
    CameraRole,
    PinholeSpec,
    line_through,
    normalize_line,
)
from svcalib.synth import SceneSpec, default_rig

MARKING_W = 0.15
LANE_X = 1.75  # centre of the markings either side of the vehicle


def project_ground(ext: CameraExtrinsics, role, pinhole: PinholeSpec, xy) -> np.ndarray:
    """Ground points (N, 2) to undistorted-image pixels (direct pinhole formula)."""
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    X = np.c_[xy - ext.position[:2], np.full(len(xy), -ext.z)]
    c = X @ ext.camera_from_world(role).T
    assert np.all(c[:, 2] > 0), "ground point behind the camera"
    return np.c_[pinhole.fx * c[:, 0] / c[:, 2] + pinhole.cx, pinhole.fy * c[:, 1] / c[:, 2] + pinhole.cy]


def border_xs(role) -> list[float]:
    """World x of the borders the solver expects, in its order."""
    role = CameraRole(role)
    h = MARKING_W / 2
    if role is CameraRole.LEFT:
        return [-LANE_X - h, -LANE_X + h]
    if role is CameraRole.RIGHT:
        return [LANE_X - h, LANE_X + h]
    xs = [-LANE_X - h, -LANE_X + h, LANE_X - h, LANE_X + h]
    # (left outer, left inner, right inner, right outer) as seen in the image
    return xs if role is CameraRole.FRONT else xs[::-1]


def analytic_lines(role, ext: CameraExtrinsics, pinhole: PinholeSpec) -> np.ndarray:
    """Homogeneous image lines of the lane borders a camera should select."""
    role = CameraRole(role)
    out = []
    for x in border_xs(role):
        if role.is_side:
            pts = [[x, ext.y - 2.0], [x, ext.y + 2.0]]
        else:
            s = 1.0 if role is CameraRole.FRONT else -1.0
            pts = [[x, ext.y + s * 3.0], [x, ext.y + s * 8.0]]
        p, q = project_ground(ext, role, pinhole, pts)
        out.append(normalize_line(line_through(p, q)))
    return np.array(out)


def random_extrinsics(rng: np.random.Generator, role, base: CameraExtrinsics | None = None,
                      pitch=(35.0, 65.0), yaw=5.0, roll=5.0) -> CameraExtrinsics:
    base = base or default_rig().extrinsics[CameraRole(role)]
    return CameraExtrinsics(float(rng.uniform(*pitch)), float(rng.uniform(-yaw, yaw)), float(rng.uniform(-roll, roll)),
                            base.x, base.y, base.z)


def perturbed_priors(rig, seed: int = 0, angle: float = 5.0, offset: float = 0.05) -> dict:
    """Priors used throughout: uniform +-angle per Euler angle, +offset per axis."""
    rng = np.random.default_rng(seed)
    out = {}
    for r in ROLES:
        g = rig.extrinsics[r]
        d = rng.uniform(-angle, angle, 3)
        out[r] = CameraExtrinsics(g.pitch + d[0], g.yaw + d[1], g.roll + d[2], g.x + offset, g.y + offset,
                                  g.z + offset)
    return out


def errors(est: dict, gt: dict) -> dict:
    return {r: (float(np.mean(np.abs(np.subtract(est[r].angles, gt[r].angles)))),
                float(np.linalg.norm(est[r].position - gt[r].position))) for r in ROLES}


def default_scene(**kw) -> SceneSpec:
    return SceneSpec(**kw)


def brute_medoid(vectors, weights, timestamps) -> int:
    """Index of the weighted medoid by plain double loop (lowest timestamp wins ties)."""
    import math

    scores = [sum(weights[i] * math.dist(vectors[i], vb) for i in range(len(vectors))) for vb in vectors]
    best = min(scores)
    tied = [b for b, s in enumerate(scores) if s <= best + 1e-12 * max(1.0, abs(best))]
    return min(tied, key=lambda b: (timestamps[b], b))


def random_parameter_set(rng: np.random.Generator, timestamp: int = 0, cost: float | None = None):
    from svcalib.sequence_agg import ParameterSet

    rig = default_rig()
    ext = {r: random_extrinsics(rng, r, rig.extrinsics[r]) for r in ROLES}
    return ParameterSet(ext, float(rng.uniform(0.1, 10.0) if cost is None else cost), timestamp)


def ground_grid(role, ext: CameraExtrinsics, n: int = 10, near: float = 1.5, far: float = 6.0,
                half_width: float = 3.0) -> np.ndarray:
    """n x n ground points in front of a camera, laid out along its nominal heading."""
    import math

    role = CameraRole(role)
    h = math.radians(role.heading_deg)
    fwd = np.array([-math.sin(h), math.cos(h)])
    right = np.array([math.cos(h), math.sin(h)])
    a, b = np.meshgrid(np.linspace(near, far, n), np.linspace(-half_width, half_width, n))
    return ext.position[:2] + a.reshape(-1, 1) * fwd + b.reshape(-1, 1) * right


def renderer_homography_gap(rig, role, n: int = 10) -> float:
    """Largest undistorted-image distance between the homography and the ray tracer.

    Ground grid point g maps through the ground homography to pixel u; u goes
    back to its fisheye pixel, which the renderer's ray tracer sends to the
    ground point g'.  The gap is |H(g') - H(g)| in undistorted pixels.
    """
    from svcalib.camera_model import SurroundPlaneCamera, apply_homography, ground_homography, pinhole_to_fisheye
    from svcalib.synth import trace_to_ground

    role = CameraRole(role)
    ext = rig.extrinsics[role]
    intr = rig.intrinsics[role]
    ph = PinholeSpec.from_fisheye(intr)
    plane = SurroundPlaneCamera()
    g = ground_grid(role, ext, n)
    H = ground_homography(ext, role, ph, plane)
    u, w = apply_homography(H, plane.world_to_pixel(g))
    assert np.all(w > 0)
    g2, hit = trace_to_ground(pinhole_to_fisheye(u, intr, ph), rig, role)
    assert hit.all()
    u2, _ = apply_homography(H, plane.world_to_pixel(g2))
    return float(np.linalg.norm(u2 - u, axis=1).max())


def rig_with(rig, role, ext: CameraExtrinsics):
    import dataclasses

    e = dict(rig.extrinsics)
    e[CameraRole(role)] = ext
    return dataclasses.replace(rig, extrinsics=e)
