"""In-memory COLMAP sparse model with bit-exact binary and text serialization.

Binary layout (all little-endian):

- cameras.bin:  u64 count, then per camera (u32 id, i32 model_id, u64 width,
  u64 height, f64 x nparams)
- images.bin:   u64 count, then per image (u32 id, f64 x 4 qvec wxyz,
  f64 x 3 tvec, u32 camera_id, NUL-terminated name, u64 n2D, then per 2D
  point (f64 x, f64 y, u64 point3D_id))
- points3D.bin: u64 count, then per point (u64 id, f64 x 3 xyz, u8 x 3 rgb,
  f64 error, u64 track_len, then per element (u32 image_id, u32 point2D_idx))
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, CameraModelType, CameraRig
from .errors import InputError
from .util import atomic_output, atomic_write_text, format_float

INVALID_POINT3D_ID = 2**64 - 1

SIMPLE_PINHOLE_MODEL_ID = 0
PINHOLE_MODEL_ID = 1

CAMERA_MODEL_NAMES = {SIMPLE_PINHOLE_MODEL_ID: "SIMPLE_PINHOLE", PINHOLE_MODEL_ID: "PINHOLE"}
CAMERA_MODEL_IDS = {name: mid for mid, name in CAMERA_MODEL_NAMES.items()}
CAMERA_MODEL_NUM_PARAMS = {SIMPLE_PINHOLE_MODEL_ID: 3, PINHOLE_MODEL_ID: 4}


@dataclass
class ColmapCamera:
    camera_id: int
    model_id: int
    width: int
    height: int
    params: np.ndarray  # float64, 3 (SIMPLE_PINHOLE: f, cx, cy) or 4 (PINHOLE: fx, fy, cx, cy)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if self.model_id not in CAMERA_MODEL_NUM_PARAMS:
            raise InputError(f"unsupported camera model id {self.model_id}")
        expected = CAMERA_MODEL_NUM_PARAMS[self.model_id]
        if self.params.shape[0] != expected:
            raise InputError(
                f"camera {self.camera_id}: model {CAMERA_MODEL_NAMES[self.model_id]} "
                f"needs {expected} params, got {self.params.shape[0]}"
            )


@dataclass
class ColmapImage:
    image_id: int
    qvec: np.ndarray  # (4,) float64, (w, x, y, z)
    tvec: np.ndarray  # (3,) float64
    camera_id: int
    name: str
    xys: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.float64))
    point3D_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint64))

    def __post_init__(self):
        self.qvec = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        self.tvec = np.asarray(self.tvec, dtype=np.float64).reshape(3)
        self.xys = np.asarray(self.xys, dtype=np.float64).reshape(-1, 2)
        self.point3D_ids = np.asarray(self.point3D_ids, dtype=np.uint64).reshape(-1)
        if not self.name:
            raise InputError(f"image {self.image_id}: name must be non-empty")
        if "\x00" in self.name:
            raise InputError(f"image {self.image_id}: name contains a NUL byte")
        if self.xys.shape[0] != self.point3D_ids.shape[0]:
            raise InputError(f"image {self.image_id}: xys and point3D_ids lengths differ")


@dataclass
class ColmapPoint3D:
    point3D_id: int
    xyz: np.ndarray  # (3,) float64
    rgb: np.ndarray  # (3,) uint8
    error: float = 0.0
    image_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint32))
    point2D_idxs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint32))

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(3)
        self.rgb = np.asarray(self.rgb, dtype=np.uint8).reshape(3)
        self.image_ids = np.asarray(self.image_ids, dtype=np.uint32).reshape(-1)
        self.point2D_idxs = np.asarray(self.point2D_idxs, dtype=np.uint32).reshape(-1)
        if self.image_ids.shape[0] != self.point2D_idxs.shape[0]:
            raise InputError(f"point {self.point3D_id}: track arrays have different lengths")


@dataclass
class ColmapModel:
    cameras: dict[int, ColmapCamera] = field(default_factory=dict)
    images: dict[int, ColmapImage] = field(default_factory=dict)
    points3D: dict[int, ColmapPoint3D] = field(default_factory=dict)

    def validate(self) -> None:
        for cid, cam in self.cameras.items():
            if cid != cam.camera_id:
                raise InputError(f"camera key {cid} != camera_id {cam.camera_id}")
        for iid, img in self.images.items():
            if iid != img.image_id:
                raise InputError(f"image key {iid} != image_id {img.image_id}")
            if img.camera_id not in self.cameras:
                raise InputError(f"image {iid} references missing camera {img.camera_id}")
        for pid, pt in self.points3D.items():
            if pid != pt.point3D_id:
                raise InputError(f"point key {pid} != point3D_id {pt.point3D_id}")
            if self.images:
                for iid in pt.image_ids:
                    if int(iid) not in self.images:
                        raise InputError(f"point {pid} track references missing image {iid}")


def model_from_rig(rig: CameraRig) -> ColmapModel:
    """COLMAP model (no 3D points) from a parsed camera rig.

    Camera ids are the rig's intrinsics indices + 1; image ids follow frame
    order starting at 1; image names keep the final path component of the
    frame name.
    """
    model = ColmapModel()
    for i, intr in enumerate(rig.intrinsics):
        model.cameras[i + 1] = camera_from_intrinsics(intr, i + 1)
    for j, frame in enumerate(rig.frames):
        name = frame.name.replace("\\", "/").rstrip("/").rsplit("/", 1)[-1]
        model.images[j + 1] = ColmapImage(
            image_id=j + 1,
            qvec=frame.pose.qvec,
            tvec=frame.pose.tvec,
            camera_id=frame.intrinsics_id + 1,
            name=name,
        )
    return model


def camera_from_intrinsics(intr: CameraIntrinsics, camera_id: int) -> ColmapCamera:
    if intr.model is CameraModelType.SIMPLE_PINHOLE:
        return ColmapCamera(camera_id, SIMPLE_PINHOLE_MODEL_ID, intr.width, intr.height,
                            np.array([intr.fx, intr.cx, intr.cy]))
    return ColmapCamera(camera_id, PINHOLE_MODEL_ID, intr.width, intr.height,
                        np.array([intr.fx, intr.fy, intr.cx, intr.cy]))


def intrinsics_from_camera(cam: ColmapCamera) -> CameraIntrinsics:
    if cam.model_id == SIMPLE_PINHOLE_MODEL_ID:
        f, cx, cy = cam.params
        return CameraIntrinsics(CameraModelType.SIMPLE_PINHOLE, cam.width, cam.height, f, f, cx, cy)
    fx, fy, cx, cy = cam.params
    return CameraIntrinsics(CameraModelType.PINHOLE, cam.width, cam.height, fx, fy, cx, cy)


# ── binary form ──────────────────────────────────────────────────────────

def write_binary(model: ColmapModel, directory) -> None:
    model.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    out = bytearray(struct.pack("<Q", len(model.cameras)))
    for cam in model.cameras.values():
        out += struct.pack("<IiQQ", cam.camera_id, cam.model_id, cam.width, cam.height)
        out += struct.pack(f"<{cam.params.shape[0]}d", *cam.params)
    _atomic_write(directory / "cameras.bin", bytes(out))

    out = bytearray(struct.pack("<Q", len(model.images)))
    for img in model.images.values():
        out += struct.pack("<I", img.image_id)
        out += struct.pack("<7d", *img.qvec, *img.tvec)
        out += struct.pack("<I", img.camera_id)
        out += img.name.encode("utf-8") + b"\x00"
        out += struct.pack("<Q", img.xys.shape[0])
        for (x, y), pid in zip(img.xys, img.point3D_ids):
            out += struct.pack("<ddQ", x, y, int(pid))
    _atomic_write(directory / "images.bin", bytes(out))

    out = bytearray(struct.pack("<Q", len(model.points3D)))
    for pt in model.points3D.values():
        out += struct.pack("<Q3d3Bd", pt.point3D_id, *pt.xyz, *pt.rgb, pt.error)
        out += struct.pack("<Q", pt.image_ids.shape[0])
        for iid, pidx in zip(pt.image_ids, pt.point2D_idxs):
            out += struct.pack("<II", int(iid), int(pidx))
    _atomic_write(directory / "points3D.bin", bytes(out))


def _atomic_write(path: Path, data: bytes) -> None:
    with atomic_output(path) as tmp:
        tmp.write_bytes(data)


class _Reader:
    def __init__(self, path: Path):
        self.path = path
        self.data = path.read_bytes()
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise InputError(f"{self.path.name}: truncated file")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def take_cstr(self) -> str:
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise InputError(f"{self.path.name}: unterminated name string")
        s = self.data[self.pos:end].decode("utf-8")
        self.pos = end + 1
        return s

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise InputError(
                f"{self.path.name}: {len(self.data) - self.pos} trailing bytes after last record"
            )


def read_binary(directory) -> ColmapModel:
    """Exact inverse of write_binary."""
    directory = Path(directory)
    model = ColmapModel()

    r = _Reader(directory / "cameras.bin")
    (n,) = r.take("<Q")
    for _ in range(n):
        cid, mid, w, h = r.take("<IiQQ")
        if mid not in CAMERA_MODEL_NUM_PARAMS:
            raise InputError(f"cameras.bin: unknown camera model id {mid}")
        params = r.take(f"<{CAMERA_MODEL_NUM_PARAMS[mid]}d")
        model.cameras[cid] = ColmapCamera(cid, mid, w, h, np.array(params))
    r.finish()

    r = _Reader(directory / "images.bin")
    (n,) = r.take("<Q")
    for _ in range(n):
        (iid,) = r.take("<I")
        vals = r.take("<7d")
        (cam_id,) = r.take("<I")
        name = r.take_cstr()
        (n2d,) = r.take("<Q")
        flat = r.take(f"<{'ddQ' * n2d}") if n2d else ()
        xys = np.array([(flat[3 * i], flat[3 * i + 1]) for i in range(n2d)],
                       dtype=np.float64).reshape(-1, 2)
        pids = np.array([flat[3 * i + 2] for i in range(n2d)], dtype=np.uint64)
        model.images[iid] = ColmapImage(iid, np.array(vals[:4]), np.array(vals[4:]),
                                        cam_id, name, xys, pids)
    r.finish()

    r = _Reader(directory / "points3D.bin")
    (n,) = r.take("<Q")
    for _ in range(n):
        pid, x, y, z, cr, cg, cb, err = r.take("<Q3d3Bd")
        (tlen,) = r.take("<Q")
        track = r.take(f"<{2 * tlen}I") if tlen else ()
        model.points3D[pid] = ColmapPoint3D(
            pid, np.array([x, y, z]), np.array([cr, cg, cb], dtype=np.uint8), err,
            np.array(track[0::2], dtype=np.uint32), np.array(track[1::2], dtype=np.uint32))
    r.finish()

    return model


# ── text form ────────────────────────────────────────────────────────────

def _check_text_name(name: str) -> str:
    if any(c.isspace() for c in name):
        raise InputError(f"image name {name!r} contains whitespace; not representable in text form")
    return name


def write_text(model: ColmapModel, directory) -> None:
    """COLMAP text form; floats rendered with shortest f64 round-trip digits."""
    model.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ff = format_float

    lines = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(model.cameras)}",
    ]
    for cam in model.cameras.values():
        params = " ".join(ff(p) for p in cam.params)
        lines.append(f"{cam.camera_id} {CAMERA_MODEL_NAMES[cam.model_id]} "
                     f"{cam.width} {cam.height} {params}")
    atomic_write_text(directory / "cameras.txt", "\n".join(lines) + "\n")

    n_obs = sum(img.xys.shape[0] for img in model.images.values())
    mean_obs = n_obs / len(model.images) if model.images else 0.0
    lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(model.images)}, mean observations per image: {mean_obs}",
    ]
    for img in model.images.values():
        head = [str(img.image_id)]
        head += [ff(v) for v in img.qvec] + [ff(v) for v in img.tvec]
        head += [str(img.camera_id), _check_text_name(img.name)]
        lines.append(" ".join(head))
        pts = []
        for (x, y), pid in zip(img.xys, img.point3D_ids):
            pts += [ff(x), ff(y), str(int(pid))]
        lines.append(" ".join(pts))
    atomic_write_text(directory / "images.txt", "\n".join(lines) + "\n")

    n_track = sum(pt.image_ids.shape[0] for pt in model.points3D.values())
    mean_track = n_track / len(model.points3D) if model.points3D else 0.0
    lines = [
        "# 3D point list with one line of data per point:",
        "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
        f"# Number of points: {len(model.points3D)}, mean track length: {mean_track}",
    ]
    for pt in model.points3D.values():
        row = [str(pt.point3D_id)] + [ff(v) for v in pt.xyz]
        row += [str(int(c)) for c in pt.rgb] + [ff(pt.error)]
        for iid, pidx in zip(pt.image_ids, pt.point2D_idxs):
            row += [str(int(iid)), str(int(pidx))]
        lines.append(" ".join(row))
    atomic_write_text(directory / "points3D.txt", "\n".join(lines) + "\n")


def _parse_point3d_id(token: str) -> int:
    # COLMAP's own text writer uses -1 for "no 3D point"; accept both spellings.
    v = int(token)
    return INVALID_POINT3D_ID if v == -1 else v


def read_text(directory) -> ColmapModel:
    directory = Path(directory)
    model = ColmapModel()

    for line in _data_lines(directory / "cameras.txt"):
        elems = line.split()
        try:
            cid = int(elems[0])
            model_name = elems[1]
            w, h = int(elems[2]), int(elems[3])
            params = np.array([float(e) for e in elems[4:]])
        except (ValueError, IndexError) as exc:
            raise InputError(f"cameras.txt: bad line {line!r}") from exc
        if model_name not in CAMERA_MODEL_IDS:
            raise InputError(f"cameras.txt: unknown camera model {model_name!r}")
        model.cameras[cid] = ColmapCamera(cid, CAMERA_MODEL_IDS[model_name], w, h, params)

    lines = (directory / "images.txt").read_text(encoding="utf-8").splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        elems = line.split()
        if len(elems) < 10:
            raise InputError(f"images.txt: bad image line {line!r}")
        iid = int(elems[0])
        qvec = np.array([float(e) for e in elems[1:5]])
        tvec = np.array([float(e) for e in elems[5:8]])
        cam_id = int(elems[8])
        name = " ".join(elems[9:])
        if i >= len(lines):
            raise InputError(f"images.txt: image {iid} is missing its POINTS2D line")
        pts = lines[i].split()
        i += 1
        if len(pts) % 3 != 0:
            raise InputError(f"images.txt: image {iid} has a malformed POINTS2D line")
        xys = np.array([(float(pts[k]), float(pts[k + 1])) for k in range(0, len(pts), 3)],
                       dtype=np.float64).reshape(-1, 2)
        pids = np.array([_parse_point3d_id(pts[k + 2]) for k in range(0, len(pts), 3)],
                        dtype=np.uint64)
        model.images[iid] = ColmapImage(iid, qvec, tvec, cam_id, name, xys, pids)

    for line in _data_lines(directory / "points3D.txt"):
        elems = line.split()
        if len(elems) < 8 or len(elems) % 2 != 0:
            raise InputError(f"points3D.txt: bad line {line!r}")
        pid = int(elems[0])
        xyz = np.array([float(e) for e in elems[1:4]])
        rgb = np.array([int(e) for e in elems[4:7]], dtype=np.uint8)
        err = float(elems[7])
        model.points3D[pid] = ColmapPoint3D(
            pid, xyz, rgb, err,
            np.array([int(e) for e in elems[8::2]], dtype=np.uint32),
            np.array([int(e) for e in elems[9::2]], dtype=np.uint32))

    return model


def _data_lines(path: Path):
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield stripped
