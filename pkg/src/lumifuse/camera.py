"""Camera intrinsics/extrinsics, JSON rig parsing, and pose conversion.

Poses follow the COLMAP storage convention throughout: world-to-camera with
x_cam = R @ x_world + t, quaternions ordered (w, x, y, z) with canonical sign
(first nonzero component positive, so w >= 0).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

CONVENTIONS = ("opengl_c2w", "opencv_c2w", "opencv_w2c")

# Column flip turning OpenGL camera axes (y up, z back) into OpenCV/COLMAP
# axes (y down, z forward): R -> R @ diag(1, -1, -1).
OPENGL_TO_OPENCV_FLIP = np.diag([1.0, -1.0, -1.0])


class CameraModelType(enum.Enum):
    SIMPLE_PINHOLE = "SIMPLE_PINHOLE"
    PINHOLE = "PINHOLE"


@dataclass(frozen=True)
class CameraIntrinsics:
    model: CameraModelType
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx <= self.width) or not (0 <= self.cy <= self.height):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )
        if self.model is CameraModelType.SIMPLE_PINHOLE and self.fx != self.fy:
            raise InputError("SIMPLE_PINHOLE requires fx == fy")


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    for c in q:
        if c > 0:
            return q
        if c < 0:
            return -q
    return q


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform as unit quaternion + translation."""

    qvec: np.ndarray  # (4,) float64, (w, x, y, z)
    tvec: np.ndarray  # (3,) float64

    def __post_init__(self):
        q = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        t = np.asarray(self.tvec, dtype=np.float64).reshape(3)
        norm = math.sqrt(float(q @ q))
        if abs(norm - 1.0) > 1e-9:
            raise InputError(f"quaternion norm {norm!r} deviates from 1 by more than 1e-9")
        q = _canonical_quat(q / norm)
        object.__setattr__(self, "qvec", q)
        object.__setattr__(self, "tvec", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))


@dataclass(frozen=True)
class RigFrame:
    name: str
    intrinsics_id: int
    pose: Pose


@dataclass(frozen=True)
class CameraRig:
    """Per-frame poses referencing a (possibly shared) intrinsics table."""

    intrinsics: tuple[CameraIntrinsics, ...]
    frames: tuple[RigFrame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        names = [f.name for f in self.frames]
        if len(set(names)) != len(names):
            raise InputError("frame names are not unique")
        for f in self.frames:
            if not 0 <= f.intrinsics_id < len(self.intrinsics):
                raise InputError(f"frame {f.name!r} references missing intrinsics {f.intrinsics_id}")

    def intrinsics_of(self, frame: RigFrame) -> CameraIntrinsics:
        return self.intrinsics[frame.intrinsics_id]


def quat_to_rotmat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * w * z, 2 * z * x + 2 * w * y],
            [2 * x * y + 2 * w * z, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * w * x],
            [2 * z * x - 2 * w * y, 2 * y * z + 2 * w * x, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def rotmat_to_quat(rot: np.ndarray) -> np.ndarray:
    rxx, ryx, rzx, rxy, ryy, rzy, rxz, ryz, rzz = np.asarray(rot, dtype=np.float64).flat
    k = np.array(
        [
            [rxx - ryy - rzz, 0, 0, 0],
            [ryx + rxy, ryy - rxx - rzz, 0, 0],
            [rzx + rxz, rzy + ryz, rzz - rxx - ryy, 0],
            [ryz - rzy, rzx - rxz, rxy - ryx, rxx + ryy + rzz],
        ]
    ) / 3.0
    eigvals, eigvecs = np.linalg.eigh(k)
    q = eigvecs[[3, 0, 1, 2], np.argmax(eigvals)]
    return _canonical_quat(q / math.sqrt(float(q @ q)))


def pose_to_matrix(pose: Pose) -> np.ndarray:
    """4x4 world-to-camera matrix of a pose."""
    m = np.eye(4)
    m[:3, :3] = quat_to_rotmat(pose.qvec)
    m[:3, 3] = pose.tvec
    return m


def matrix_to_pose(m: np.ndarray, orthonormal_tol: float = 1e-6) -> Pose:
    """Inverse of pose_to_matrix; rejects non-rigid and reflecting transforms."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4):
        raise InputError(f"expected a 4x4 matrix, got shape {m.shape}")
    rot = m[:3, :3]
    dev = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
    if dev > orthonormal_tol:
        raise InputError(f"rotation block deviates from orthonormal by {dev:.3e}")
    if np.linalg.det(rot) < 0:
        raise InputError("rotation block is a reflection (det < 0)")
    return Pose(rotmat_to_quat(rot), m[:3, 3])


def _focal_from_angle(angle_x: float, width: float) -> float:
    if not 0 < angle_x < math.pi:
        raise InputError(f"camera_angle_x must be in (0, pi), got {angle_x}")
    return 0.5 * width / math.tan(0.5 * angle_x)


def _intrinsics_from_keys(keys: dict, context: str) -> CameraIntrinsics:
    width = keys.get("w", keys.get("width"))
    height = keys.get("h", keys.get("height"))
    if width is None or height is None:
        raise InputError(f"missing image dimensions (w/h) for {context}")
    width = int(width)
    height = int(height)

    if "fl_x" in keys:
        fx = float(keys["fl_x"])
    elif "camera_angle_x" in keys:
        fx = _focal_from_angle(float(keys["camera_angle_x"]), width)
    else:
        raise InputError(f"missing focal specification (fl_x or camera_angle_x) for {context}")
    fy = float(keys["fl_y"]) if "fl_y" in keys else fx

    cx = float(keys.get("cx", width / 2.0))
    cy = float(keys.get("cy", height / 2.0))
    model = CameraModelType.SIMPLE_PINHOLE if fx == fy else CameraModelType.PINHOLE
    return CameraIntrinsics(model, width, height, fx, fy, cx, cy)


_INTRINSIC_KEYS = ("w", "h", "width", "height", "fl_x", "fl_y", "camera_angle_x", "cx", "cy")


def parse_camera_json(document: bytes | str, convention: str) -> CameraRig:
    """Parse a camera rig JSON document into COLMAP-convention poses.

    The document carries global and/or per-frame intrinsics (`fl_x`/`fl_y`, or
    `camera_angle_x` resolved as fx = 0.5*w / tan(0.5*angle)) plus a 4x4
    `transform_matrix` per frame.  `convention` names the matrix semantics:

    - "opengl_c2w": camera-to-world, OpenGL axes (y up, z back)
    - "opencv_c2w": camera-to-world, OpenCV axes (y down, z forward)
    - "opencv_w2c": already world-to-camera in OpenCV axes

    Per-frame intrinsic keys override the globals.
    """
    if convention not in CONVENTIONS:
        raise InputError(f"unknown convention {convention!r}, expected one of {CONVENTIONS}")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InputError(f"camera JSON does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("camera JSON root must be an object")
    frames_doc = doc.get("frames")
    if not isinstance(frames_doc, list):
        raise InputError("camera JSON has no 'frames' array")

    global_keys = {k: doc[k] for k in _INTRINSIC_KEYS if k in doc}
    intrinsics: list[CameraIntrinsics] = []
    frames: list[RigFrame] = []
    for i, frame_doc in enumerate(frames_doc):
        if not isinstance(frame_doc, dict):
            raise InputError(f"frame {i} is not an object")
        name = frame_doc.get("file_path")
        if not isinstance(name, str) or not name:
            raise InputError(f"frame {i} has no 'file_path'")

        keys = dict(global_keys)
        keys.update({k: frame_doc[k] for k in _INTRINSIC_KEYS if k in frame_doc})
        intr = _intrinsics_from_keys(keys, f"frame {name!r}")
        try:
            intr_id = intrinsics.index(intr)
        except ValueError:
            intr_id = len(intrinsics)
            intrinsics.append(intr)

        if "transform_matrix" not in frame_doc:
            raise InputError(f"frame {name!r} has no 'transform_matrix'")
        m = np.asarray(frame_doc["transform_matrix"], dtype=np.float64)
        if m.shape != (4, 4):
            raise InputError(f"frame {name!r}: transform_matrix must be 4x4, got {m.shape}")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-6:
            raise InputError(f"frame {name!r}: transform_matrix last row is not (0, 0, 0, 1)")

        if convention == "opengl_c2w":
            m = m.copy()
            m[:3, :3] = m[:3, :3] @ OPENGL_TO_OPENCV_FLIP
        if convention in ("opengl_c2w", "opencv_c2w"):
            rot = m[:3, :3]
            w2c = np.eye(4)
            w2c[:3, :3] = rot.T
            w2c[:3, 3] = -rot.T @ m[:3, 3]
        else:
            w2c = m
        try:
            pose = matrix_to_pose(w2c, orthonormal_tol=1e-4)
        except InputError as exc:
            raise InputError(f"frame {name!r}: {exc}") from exc
        frames.append(RigFrame(name=name, intrinsics_id=intr_id, pose=pose))

    return CameraRig(intrinsics=tuple(intrinsics), frames=tuple(frames))
