"""Dataset layout, JSON schema and the synthetic sequence generator.

Layout::

    root/group_XX/meta.json
    root/group_XX/{front,rear,left,right}/NNNN.png
    root/group_XX/{front,rear,left,right}.json   # one record per frame

A record is ``{frame, camera, lanes: [{type, edge1, edge2, ...}], intrinsics,
extrinsics: {angles_deg, position_m}}``; edges are fisheye pixel points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import jsonschema
import numpy as np

from .camera_model import ROLES, CameraExtrinsics, CameraRole, FisheyeIntrinsics
from .errors import DatasetError
from .lane_types import LaneType
from .synth import RigSpec, SceneSpec, lane_edge_annotations, render_fisheye_view

_POINTS = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}

INTRINSICS_SCHEMA = {
    "type": "object",
    "required": ["fx", "fy", "cx", "cy", "k", "width", "height"],
    "properties": {
        "fx": {"type": "number", "exclusiveMinimum": 0}, "fy": {"type": "number", "exclusiveMinimum": 0},
        "cx": {"type": "number"}, "cy": {"type": "number"},
        "k": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "width": {"type": "integer", "minimum": 1}, "height": {"type": "integer", "minimum": 1},
        "fov_deg": {"type": "number"},
    },
}

EXTRINSICS_SCHEMA = {
    "type": "object",
    "required": ["angles_deg", "position_m"],
    "properties": {
        "angles_deg": {"type": "object", "required": ["pitch", "yaw", "roll"],
                       "properties": {k: {"type": "number"} for k in ("pitch", "yaw", "roll")}},
        "position_m": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    },
}

RECORD_SCHEMA = {
    "type": "object",
    "required": ["frame", "camera", "lanes", "intrinsics", "extrinsics"],
    "properties": {
        "frame": {"type": "integer", "minimum": 0},
        "camera": {"enum": [r.value for r in ROLES]},
        "lanes": {"type": "array", "items": {
            "type": "object", "required": ["type", "edge1", "edge2"],
            "properties": {"type": {"enum": [t.value for t in LaneType]}, "edge1": _POINTS, "edge2": _POINTS,
                           "centre_x_m": {"type": "number"}, "dash_phase_m": {"type": ["number", "null"]}},
        }},
        "intrinsics": INTRINSICS_SCHEMA,
        "extrinsics": EXTRINSICS_SCHEMA,
    },
}

VIDEO_SCHEMA = {"type": "array", "items": RECORD_SCHEMA}

META_SCHEMA = {
    "type": "object",
    "required": ["group", "fps", "n_frames"],
    "properties": {
        "group": {"type": "string"}, "fps": {"type": "number", "exclusiveMinimum": 0},
        "n_frames": {"type": "integer", "minimum": 1}, "speed_mps": {"type": "number"},
        "vehicle_poses": {"type": "array"}, "windows": {"type": "array"},
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate(doc, schema, base: str = "") -> None:
    """Raise DatasetError with the JSON pointer of the first schema violation."""
    v = jsonschema.Draft202012Validator(schema)
    errs = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = errs[0]
        raise DatasetError(e.message, base + _pointer(e.absolute_path))


# --------------------------------------------------------------------------
# records


@dataclass
class LaneAnnotation:
    type: LaneType
    edge1: np.ndarray
    edge2: np.ndarray
    centre_x_m: float | None = None
    dash_phase_m: float | None = None

    def to_dict(self) -> dict:
        return {"type": self.type.value, "edge1": self.edge1.tolist(), "edge2": self.edge2.tolist(),
                "centre_x_m": self.centre_x_m, "dash_phase_m": self.dash_phase_m}


@dataclass
class FrameRecord:
    frame: int
    camera: CameraRole
    lanes: list[LaneAnnotation]
    intrinsics: FisheyeIntrinsics
    extrinsics: CameraExtrinsics

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        lanes = [LaneAnnotation(LaneType(l["type"]), np.asarray(l["edge1"], float).reshape(-1, 2),
                                np.asarray(l["edge2"], float).reshape(-1, 2), l.get("centre_x_m"),
                                l.get("dash_phase_m")) for l in d["lanes"]]
        return cls(int(d["frame"]), CameraRole(d["camera"]), lanes, FisheyeIntrinsics.from_dict(d["intrinsics"]),
                   CameraExtrinsics.from_dict(d["extrinsics"]))

    def to_dict(self) -> dict:
        return {"frame": self.frame, "camera": self.camera.value, "lanes": [l.to_dict() for l in self.lanes],
                "intrinsics": self.intrinsics.to_dict(), "extrinsics": self.extrinsics.to_dict()}


@dataclass
class Group:
    path: Path
    meta: dict
    records: dict[CameraRole, list[FrameRecord]]
    frame_paths: dict[CameraRole, list[Path]] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return min(len(v) for v in self.frame_paths.values()) if self.frame_paths else 0

    def frame(self, role: CameraRole | str, i: int) -> np.ndarray:
        p = self.frame_paths[CameraRole(role)][i]
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise DatasetError(f"cannot read image {p}", "")
        return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)

    def frames(self, role: CameraRole | str) -> list[np.ndarray]:
        return [self.frame(role, i) for i in range(len(self.frame_paths[CameraRole(role)]))]

    def intrinsics(self) -> dict[CameraRole, FisheyeIntrinsics]:
        return {r: recs[0].intrinsics for r, recs in self.records.items() if recs}

    def ground_truth(self) -> dict[CameraRole, CameraExtrinsics]:
        return {r: recs[0].extrinsics for r, recs in self.records.items() if recs}


def _read_json(path: Path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path.name}: invalid JSON ({e.msg})", "") from e


def load_group(path) -> Group:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"{path}: missing meta.json", "")
    meta = _read_json(meta_path)
    validate(meta, META_SCHEMA, "meta.json#")
    records, frames = {}, {}
    for role in ROLES:
        jp = path / f"{role.value}.json"
        if jp.exists():
            doc = _read_json(jp)
            validate(doc, VIDEO_SCHEMA, f"{role.value}.json#")
            records[role] = [FrameRecord.from_dict(d) for d in doc]
        d = path / role.value
        if d.is_dir():
            frames[role] = sorted(d.glob("*.png"))
    return Group(path, meta, records, frames)


def load_dataset(path) -> list[Group]:
    """Load one group directory or a root holding group_XX directories."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path} does not exist", "")
    if (path / "meta.json").exists():
        return [load_group(path)]
    groups = [load_group(p) for p in sorted(path.glob("group_*")) if p.is_dir()]
    if not groups:
        raise DatasetError(f"{path}: no group_XX directories", "")
    return groups


# --------------------------------------------------------------------------
# generation


def heading_schedule(n_frames: int, headings: list[float]) -> list[float]:
    """Split ``n_frames`` into equal consecutive segments, one per heading."""
    k = len(headings)
    return [float(headings[min(k - 1, i * k // n_frames)]) for i in range(n_frames)]


def generate_sequence(scene: SceneSpec, rig: RigSpec, n_frames: int, out_dir, speed: float = 10.0,
                      fps: float = 25.0, group: int = 0, yaw_deg=None, lateral_m: float = 0.0,
                      supersample: int = 2, write_images: bool = True) -> Path:
    """Render a drive along the lanes and write frames plus annotations.

    ``yaw_deg`` is the vehicle heading relative to the lanes, either one value
    or one value per frame (defaults to ``rig.vehicle_yaw_deg``).
    """
    out = Path(out_dir) / f"group_{group:02d}"
    out.mkdir(parents=True, exist_ok=True)
    if yaw_deg is None:
        yaws = [rig.vehicle_yaw_deg] * n_frames
    elif np.ndim(yaw_deg) == 0:
        yaws = [float(yaw_deg)] * n_frames
    else:
        yaws = [float(v) for v in yaw_deg]
        if len(yaws) != n_frames:
            raise ValueError("need one heading per frame")
    if any(abs(y) > 2.0 for y in yaws):
        raise ValueError("vehicle heading relative to the lanes must lie within +-2 deg")
    poses = [(lateral_m, i * speed / fps, yaws[i]) for i in range(n_frames)]
    docs = {r: [] for r in ROLES}
    for role in ROLES:
        (out / role.value).mkdir(exist_ok=True)
        for i, pose in enumerate(poses):
            if write_images:
                img = render_fisheye_view(scene, role, rig, vehicle_pose=pose, supersample=supersample)
                cv2.imwrite(str(out / role.value / f"{i:04d}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
            lanes = lane_edge_annotations(scene, role, rig, pose)
            docs[role].append({"frame": i, "camera": role.value, "lanes": lanes,
                               "intrinsics": rig.intrinsics[role].to_dict(),
                               "extrinsics": rig.extrinsics[role].to_dict()})
        with open(out / f"{role.value}.json", "w") as f:
            json.dump(docs[role], f)
    # windows of constant heading
    windows, start = [], 0
    for i in range(1, n_frames + 1):
        if i == n_frames or yaws[i] != yaws[start]:
            windows.append([start, i])
            start = i
    meta = {"group": out.name, "fps": fps, "speed_mps": speed, "n_frames": n_frames,
            "vehicle_poses": [list(p) for p in poses], "windows": windows,
            "scene": scene.to_dict(), "rig": rig.to_dict()}
    with open(out / "meta.json", "w") as f:
        json.dump(meta, f, indent=1)
    return out
