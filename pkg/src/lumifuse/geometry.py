"""Depth back-projection, voxelized multi-view fusion, and point-cloud bootstrap.

Pixel convention: integer pixel (u, v) samples the ray through the pixel
center (u + 0.5, v + 0.5). Fusion accumulates per voxel cell in a pinned
order (source cloud index, then row-major pixel order), so results are
bit-reproducible regardless of backend or thread count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import CameraIntrinsics, Pose, quat_to_rotmat
from .colmap import INVALID_POINT3D_ID, ColmapPoint3D
from .errors import InputError
from .imaging import ImageBuffer, quantize_u8
from .util import round_half_away

log = logging.getLogger("lumifuse.geometry")

#: Default size of the randomly bootstrapped cloud.
DEFAULT_RANDOM_POINT_COUNT = 100_000

#: Color assigned when no color source is available (mid-gray).
DEFAULT_POINT_COLOR = (128, 128, 128)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel float32 depth; a pixel is valid iff its depth is finite and > 0."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"depth map must be a non-empty 2-D array, got shape {arr.shape}")
        if np.any(np.isfinite(arr) & (arr < 0)):
            raise InputError("depth map contains negative finite depths")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.data) & (self.data > 0)


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8
    observations: np.ndarray  # (N,) uint32, source views fused into each point

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        obs = np.asarray(self.observations, dtype=np.uint32).reshape(-1)
        if not (pos.shape[0] == col.shape[0] == obs.shape[0]):
            raise InputError("point cloud arrays have mismatched lengths")
        if not np.all(np.isfinite(pos)):
            raise InputError("point cloud positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "observations", obs)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)), np.empty((0, 3), dtype=np.uint8), np.empty(0, dtype=np.uint32))


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray  # (3,) float64
    max: np.ndarray  # (3,) float64

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise InputError("bounding box must be finite")
        if np.any(lo > hi):
            raise InputError(f"bounding box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


class VoxelAccumulator:
    """Streaming reference for voxelized fusion: a dict of per-cell running sums.

    `voxel_fuse` is the fast path; this accumulator produces bit-identical
    results when fed the same points in the same order.
    """

    def __init__(self, voxel_size: float):
        if not (voxel_size > 0 and np.isfinite(voxel_size)):
            raise InputError(f"voxel size must be positive and finite, got {voxel_size}")
        self.voxel_size = float(voxel_size)
        self.cells: dict[tuple[int, int, int], list] = {}

    def add_cloud(self, cloud: PointCloud) -> None:
        keys = np.floor(cloud.positions / self.voxel_size).astype(np.int64)
        colors = cloud.colors.astype(np.float64)
        for i in range(len(cloud)):
            key = (int(keys[i, 0]), int(keys[i, 1]), int(keys[i, 2]))
            cell = self.cells.get(key)
            if cell is None:
                # Sums start at zero so they match the fast path bit for bit.
                cell = self.cells[key] = [np.zeros(3), np.zeros(3), 0]
            cell[0] += cloud.positions[i]
            cell[1] += colors[i]
            cell[2] += 1

    def to_cloud(self, min_obs: int = 1) -> PointCloud:
        kept = [(k, c) for k, c in sorted(self.cells.items()) if c[2] >= min_obs]
        if not kept:
            return PointCloud.empty()
        pos = np.array([c[0] / c[2] for _, c in kept])
        col = round_half_away(np.array([c[1] / c[2] for _, c in kept])).astype(np.uint8)
        obs = np.array([c[2] for _, c in kept], dtype=np.uint32)
        return PointCloud(pos, col, obs)


def back_project(
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    pose: Pose,
    color_source: ImageBuffer | None = None,
    stride: int = 1,
    return_pixels: bool = False,
):
    """Lift valid depth pixels into world space through the inverse pinhole model.

    Pixels are visited row-major at the given stride. Camera-space point:
    d * ((u+0.5-cx)/fx, (v+0.5-cy)/fy, 1); world point: R^T (p_cam - t).
    Colors are sampled at the same pixels (mid-gray without a color source);
    observation counts start at 1. With return_pixels, also returns the
    (u, v) integer source coordinates of each point.
    """
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    if depth.width != intrinsics.width or depth.height != intrinsics.height:
        raise InputError(
            f"depth map {depth.width}x{depth.height} does not match "
            f"intrinsics {intrinsics.width}x{intrinsics.height}"
        )
    if color_source is not None and (
        color_source.width != depth.width or color_source.height != depth.height
    ):
        raise InputError("color source dimensions do not match the depth map")

    rot = quat_to_rotmat(pose.qvec)
    pos, us, vs = _kernels.backproject_points(
        depth.data, int(stride),
        float(intrinsics.fx), float(intrinsics.fy),
        float(intrinsics.cx), float(intrinsics.cy),
        rot, pose.tvec,
    )
    if pos.shape[0] == 0:
        log.warning("depth map has no valid pixels; producing an empty cloud")
        cloud = PointCloud.empty()
        return (cloud, us, vs) if return_pixels else cloud
    if color_source is not None:
        colors = quantize_u8(color_source.data)[vs, us]
    else:
        colors = np.empty((pos.shape[0], 3), dtype=np.uint8)
        colors[:] = DEFAULT_POINT_COLOR
    cloud = PointCloud(pos, colors, np.ones(pos.shape[0], dtype=np.uint32))
    return (cloud, us, vs) if return_pixels else cloud


def project(point, intrinsics: CameraIntrinsics, pose: Pose):
    """Pinhole forward model: world point -> continuous pixel coords and depth.

    Returned (u, v) are continuous image coordinates in which integer pixel
    (i, j) has its center at (i + 0.5, j + 0.5), matching back_project.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    cam = quat_to_rotmat(pose.qvec) @ p + pose.tvec
    z = float(cam[2])
    if z <= 0:
        raise InputError(f"point {p} is behind the camera (depth {z})")
    u = float(intrinsics.fx * cam[0] / z + intrinsics.cx)
    v = float(intrinsics.fy * cam[1] / z + intrinsics.cy)
    return u, v, z


def voxel_keys(positions: np.ndarray, voxel_size: float) -> np.ndarray:
    """Integer voxel index per point: floor(position / voxel_size) per axis."""
    return np.floor(positions / voxel_size).astype(np.int64)


def voxel_fuse(
    clouds,
    voxel_size: float,
    min_obs: int = 2,
    return_membership: bool = False,
):
    """Fuse point clouds on a voxel grid: average within cells, drop thin ones.

    Points are keyed by floor(position / voxel_size); each retained cell
    (count >= min_obs) emits the arithmetic mean position and color (colors
    rounded half away from zero). Output is ordered by lexicographic voxel
    key. With return_membership, also returns one array per output point
    holding the indices of its source points in the concatenated input order.
    """
    if not (voxel_size > 0 and np.isfinite(voxel_size)):
        raise InputError(f"voxel size must be positive and finite, got {voxel_size}")
    if min_obs < 1:
        raise InputError(f"min_obs must be >= 1, got {min_obs}")

    clouds = list(clouds)
    n_total = sum(len(c) for c in clouds)
    if n_total == 0:
        return (PointCloud.empty(), []) if return_membership else PointCloud.empty()

    positions = np.concatenate([c.positions for c in clouds]) if len(clouds) > 1 else clouds[0].positions
    colors = np.concatenate([c.colors for c in clouds]) if len(clouds) > 1 else clouds[0].colors

    keys = voxel_keys(positions, voxel_size)
    # lexsort is stable: within a cell, sorted order == concatenated input order.
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    new_cell = np.empty(n_total, dtype=bool)
    new_cell[0] = True
    new_cell[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    cell_of_sorted = np.cumsum(new_cell) - 1
    n_cells = int(cell_of_sorted[-1]) + 1
    inverse = np.empty(n_total, dtype=np.int64)
    inverse[order] = cell_of_sorted

    pos_sums = np.zeros((n_cells, 3), dtype=np.float64)
    col_sums = np.zeros((n_cells, 3), dtype=np.float64)
    _kernels.scatter_add_3(pos_sums, inverse, positions)
    _kernels.scatter_add_3(col_sums, inverse, colors.astype(np.float64))
    counts = np.bincount(inverse, minlength=n_cells)

    keep = counts >= min_obs
    kept_counts = counts[keep]
    if kept_counts.size == 0:
        fused = PointCloud.empty()
        return (fused, []) if return_membership else fused

    denom = kept_counts[:, None].astype(np.float64)
    fused = PointCloud(
        pos_sums[keep] / denom,
        round_half_away(col_sums[keep] / denom).astype(np.uint8),
        kept_counts.astype(np.uint32),
    )
    if not return_membership:
        return fused

    starts = np.flatnonzero(new_cell)
    ends = np.append(starts[1:], n_total)
    membership = [order[s:e] for s, e, k in zip(starts, ends, keep) if k]
    return fused, membership


def compute_aabb(cloud: PointCloud, padding_fraction: float = 0.0) -> Aabb:
    """Axis-aligned bounds, expanded symmetrically by a fraction of each extent."""
    if len(cloud) == 0:
        raise InputError("cannot compute a bounding box of an empty cloud")
    if padding_fraction < 0:
        raise InputError(f"padding fraction must be >= 0, got {padding_fraction}")
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    pad = padding_fraction * (hi - lo)
    return Aabb(lo - pad, hi + pad)


def random_init(bbox: Aabb, n: int = DEFAULT_RANDOM_POINT_COUNT, seed: int = 0) -> PointCloud:
    """Uniform random points in a box from a pinned, platform-independent stream.

    The stream is the raw PCG64 output for `seed`, mapped to doubles by the
    standard 53-bit conversion u = (word >> 11) * 2**-53 and consumed in
    point-major, axis-minor order. Colors are mid-gray, observations 1.
    """
    if n < 1:
        raise InputError(f"point count must be >= 1, got {n}")
    raw = np.random.PCG64(seed).random_raw(3 * n)
    unit = (raw >> np.uint64(11)) * 2.0**-53
    positions = bbox.min + unit.reshape(n, 3) * (bbox.max - bbox.min)
    colors = np.empty((n, 3), dtype=np.uint8)
    colors[:] = DEFAULT_POINT_COLOR
    return PointCloud(positions, colors, np.ones(n, dtype=np.uint32))


def cloud_to_colmap(cloud: PointCloud, starting_id: int = 1) -> list[ColmapPoint3D]:
    """Sequentially numbered COLMAP points (error 0, empty tracks), order preserved."""
    if starting_id < 0 or starting_id + len(cloud) - 1 >= INVALID_POINT3D_ID:
        raise InputError(f"point ids starting at {starting_id} overflow the valid id range")
    return [
        ColmapPoint3D(point3D_id=starting_id + i, xyz=cloud.positions[i], rgb=cloud.colors[i])
        for i in range(len(cloud))
    ]
