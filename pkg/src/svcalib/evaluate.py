"""Error metrics against ground truth and the intrinsic-disturbance harness."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .camera_model import ROLES, CameraExtrinsics, CameraRole, FisheyeIntrinsics
from .errors import CalibrationFailed, ConfigError
from .pipeline import run_calibration
from .sequence_agg import ParameterSet


@dataclass
class ErrorReport:
    """Per-camera mean absolute angle error (deg) and position error (m)."""

    angle_deg: dict[CameraRole, float]
    position_m: dict[CameraRole, float]
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in (*self.angle_deg.values(), *self.position_m.values()):
            if not v >= 0:
                raise ValueError("errors must be non-negative")

    @property
    def max_angle(self) -> float:
        return max(self.angle_deg.values())

    @property
    def max_position(self) -> float:
        return max(self.position_m.values())

    @property
    def mean_angle(self) -> float:
        return float(np.mean(list(self.angle_deg.values())))

    def to_dict(self) -> dict:
        return {"angle_deg": {r.value: v for r, v in self.angle_deg.items()},
                "position_m": {r.value: v for r, v in self.position_m.items()},
                "max_angle_deg": self.max_angle, "max_position_m": self.max_position, "tags": dict(self.tags)}

    def table(self) -> str:
        rows = [f"{'camera':<8}{'angle_deg':>12}{'position_m':>12}"]
        for r in self.angle_deg:
            rows.append(f"{r.value:<8}{self.angle_deg[r]:>12.4f}{self.position_m[r]:>12.4f}")
        return "\n".join(rows)


def _extrinsics(x) -> dict[CameraRole, CameraExtrinsics]:
    if isinstance(x, ParameterSet):
        return x.extrinsics
    return {CameraRole(k): v for k, v in x.items()}


def evaluate(est, gt, **tags) -> ErrorReport:
    """Compare two parameter sets (or role -> extrinsics dicts) camera by camera."""
    a, b = _extrinsics(est), _extrinsics(gt)
    if set(a) != set(b):
        raise ValueError("estimate and ground truth cover different cameras")
    roles = [r for r in ROLES if r in a]
    ang = {r: float(np.mean(np.abs(np.subtract(a[r].angles, b[r].angles)))) for r in roles}
    pos = {r: float(np.linalg.norm(a[r].position - b[r].position)) for r in roles}
    return ErrorReport(ang, pos, dict(tags))


def perturb_intrinsics(intr: FisheyeIntrinsics, d: float) -> FisheyeIntrinsics:
    """Add ``d`` pixels to both focal lengths, leaving everything else alone."""
    if not (intr.fx + d > 0 and intr.fy + d > 0):
        raise ConfigError("d", f"focal length would become non-positive (fx={intr.fx}, fy={intr.fy}, d={d})")
    return dataclasses.replace(intr, fx=intr.fx + d, fy=intr.fy + d)


def parse_sweep(text: str) -> list[float]:
    """``"-5..5"`` -> integers from -5 to 5; ``"0,1,-1"`` -> those values."""
    text = text.strip()
    if ".." in text:
        lo, hi = (float(t) for t in text.split("..", 1))
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return [float(v) for v in np.arange(np.ceil(lo), np.floor(hi) + 1)]
    return [float(t) for t in text.split(",") if t.strip()]


def disturbance_sweep(frames: dict, config, gt, ds, windows=None) -> list[tuple[float, ErrorReport | None]]:
    """Calibrate with every intrinsic disturbance in ``ds``.

    The frames stay the same; only the intrinsics handed to the pipeline are
    perturbed.  A failed calibration yields ``None`` for that ``d``.
    """
    out = []
    for d in ds:
        cfg = dataclasses.replace(config, intrinsics={r: perturb_intrinsics(i, d)
                                                      for r, i in config.intrinsics.items()})
        try:
            ps = run_calibration(frames, cfg, windows)
        except CalibrationFailed:
            out.append((float(d), None))
            continue
        out.append((float(d), evaluate(ps, gt, d=float(d))))
    return out
