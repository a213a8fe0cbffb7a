"""Depth-map file IO (PFM, 16-bit PNG) and ASCII PLY point-cloud output."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputError
from .geometry import DepthMap, PointCloud
from .util import atomic_output, atomic_write_bytes, format_float


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM ("Pf") into a float32 (H, W) array.

    Rows are stored bottom-to-top in the file and flipped on load; the header
    scale's magnitude multiplies the samples, its sign selects endianness.
    """
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise InputError(f"{path}: truncated PFM header")
    pos += 1  # single whitespace byte terminates the header

    magic = tokens[0]
    if magic == b"PF":
        raise InputError(f"{path}: color PFM is not a valid depth map")
    if magic != b"Pf":
        raise InputError(f"{path}: not a PFM file (magic {magic!r})")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise InputError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or scale == 0:
        raise InputError(f"{path}: invalid PFM dimensions or scale")

    count = width * height
    raw = data[pos:pos + 4 * count]
    if len(raw) != 4 * count:
        raise InputError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    arr = np.flipud(arr).astype(np.float32)
    if abs(scale) != 1.0:
        arr = arr * np.float32(abs(scale))
    return arr


def write_pfm(path, values: np.ndarray) -> None:
    """Write a float32 (H, W) array as little-endian grayscale PFM (scale -1)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise InputError(f"PFM payload must be 2-D, got shape {arr.shape}")
    header = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    atomic_write_bytes(path, header + np.flipud(arr).astype("<f4").tobytes())


def read_depth_png16(path, depth_scale: float) -> np.ndarray:
    """Read a 16-bit grayscale PNG as float32 depth = value * depth_scale."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I;16B", "I"):
                raise InputError(f"{path}: expected a 16-bit grayscale PNG, got mode {im.mode!r}")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"{path}: cannot decode image ({exc})") from exc
    return (arr.astype(np.float64) * float(depth_scale)).astype(np.float32)


def load_depth(path, depth_scale: float | None = None) -> DepthMap:
    """Load a depth map; PFM is primary, 16-bit PNG needs an explicit scale."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return DepthMap(read_pfm(path))
    if suffix == ".png":
        if depth_scale is None:
            raise InputError(f"{path}: PNG depth input requires a depth scale")
        return DepthMap(read_depth_png16(path, depth_scale))
    raise InputError(f"{path}: unsupported depth format {suffix!r} (expected .pfm or .png)")


def write_ply(path, cloud: PointCloud) -> None:
    """Debug dump of a point cloud as ASCII PLY (x y z red green blue)."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(cloud.positions, cloud.colors):
        lines.append(f"{format_float(x)} {format_float(y)} {format_float(z)} {r} {g} {b}")
    with atomic_output(path) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="ascii")
