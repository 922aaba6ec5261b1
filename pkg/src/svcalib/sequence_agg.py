"""Choosing one rig calibration out of per-window candidates.

Each candidate is reduced to its 12 angles (pitch, yaw, roll for front, rear,
left, right).  The result is the weighted medoid of the candidates, with
weights derived from each candidate's texture cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera_model import ROLES, CameraExtrinsics, CameraRole, in_assumed_bounds
from .errors import CalibrationError


@dataclass
class ParameterSet:
    extrinsics: dict[CameraRole, CameraExtrinsics]
    texture_cost: float = 0.0
    timestamp: int = 0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.extrinsics = {CameraRole(k): v for k, v in self.extrinsics.items()}
        if set(self.extrinsics) != set(ROLES):
            raise ValueError("a parameter set needs all four cameras")
        a = self.angles
        if not np.all(np.isfinite(a)):
            raise ValueError("angles must be finite")
        for r, e in self.extrinsics.items():
            if not in_assumed_bounds(e):
                raise ValueError(f"{r.value} angles outside the assumed ranges")
        if not (self.texture_cost >= 0 and math.isfinite(self.texture_cost)):
            raise ValueError("texture_cost must be a finite non-negative number")

    @property
    def angles(self) -> np.ndarray:
        return np.array([v for r in ROLES for v in self.extrinsics[r].angles], dtype=np.float64)

    @property
    def positions(self) -> dict[CameraRole, np.ndarray]:
        return {r: self.extrinsics[r].position for r in ROLES}

    def to_dict(self) -> dict:
        return {"cameras": {r.value: self.extrinsics[r].to_dict() for r in ROLES},
                "texture_cost": self.texture_cost, "timestamp": self.timestamp, "flags": self.flags}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        ext = {CameraRole(k): CameraExtrinsics.from_dict(v) for k, v in d["cameras"].items()}
        return cls(ext, float(d.get("texture_cost", 0.0)), int(d.get("timestamp", 0)), dict(d.get("flags", {})))


def confidence_weights(sets: list[ParameterSet], mode: str = "inverse",
                       return_flag: bool = False):
    """Per-candidate weights summing to one.

    ``proportional`` weights each candidate by its share of the total texture
    cost; ``inverse`` (the default) by the share of 1/cost, so that better
    aligned candidates count more.  When every cost is zero the weights are
    uniform and the flag is set.  In inverse mode, zero-cost candidates
    share all the weight.
    """
    if not sets:
        raise CalibrationError("no candidates")
    c = np.array([s.texture_cost for s in sets], dtype=np.float64)
    flagged = False
    if np.all(c == 0):
        w = np.full(len(c), 1.0 / len(c))
        flagged = True
    elif mode == "proportional":
        w = c / c.sum()
    elif mode == "inverse":
        if np.any(c == 0):
            w = (c == 0).astype(np.float64)
        else:
            w = 1.0 / c
        w = w / w.sum()
    else:
        raise ValueError(f"unknown confidence mode {mode!r}")
    return (w, flagged) if return_flag else w


def select_parameter_set(sets: list[ParameterSet], weights=None, mode: str = "inverse") -> ParameterSet:
    """Weighted medoid over the 12-angle vectors; ties go to the lowest timestamp."""
    if not sets:
        raise CalibrationError("no candidates to select from")
    k = confidence_weights(sets, mode) if weights is None else np.asarray(weights, dtype=np.float64)
    A = np.array([s.angles for s in sets])
    D = np.sqrt(((A[:, None, :] - A[None, :, :]) ** 2).sum(axis=2))
    score = k @ D  # score[b] = sum_i k_i d(a_i, a_b)
    best = score.min()
    tied = np.flatnonzero(score <= best + 1e-12 * max(1.0, abs(best)))
    j = min(tied, key=lambda i: (sets[i].timestamp, i))
    return sets[j]


def write_candidates(path, sets: list[ParameterSet]) -> None:
    with open(path, "w") as f:
        for s in sets:
            f.write(json.dumps(s.to_dict()) + "\n")


def read_candidates(path) -> list[ParameterSet]:
    with open(path) as f:
        return [ParameterSet.from_dict(json.loads(line)) for line in f if line.strip()]
