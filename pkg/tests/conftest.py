"""Shared fixtures/builders for the test suite, plus acceptance reporting."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from lumifuse.colmap import ColmapCamera, ColmapImage, ColmapModel, ColmapPoint3D
from lumifuse.geometry import PointCloud
from lumifuse.imaging import ImageBuffer


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    status = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {name}: {status}", flush=True)


def random_model(rng: np.random.Generator, max_points: int = 1000,
                 max_images: int = 40) -> ColmapModel:
    """Randomized COLMAP model with mixed camera models, 2D points, and tracks."""
    model = ColmapModel()
    n_cameras = int(rng.integers(1, 5))
    for cid in range(1, n_cameras + 1):
        if rng.random() < 0.5:
            f = float(rng.uniform(100, 2000))
            params = [f, float(rng.uniform(0, 2000)), float(rng.uniform(0, 2000))]
            model.cameras[cid] = ColmapCamera(cid, 0, int(rng.integers(2, 4000)),
                                              int(rng.integers(2, 4000)), np.array(params))
        else:
            params = rng.uniform(1, 4000, size=4)
            model.cameras[cid] = ColmapCamera(cid, 1, int(rng.integers(2, 4000)),
                                              int(rng.integers(2, 4000)), params)

    n_images = int(rng.integers(0, max_images + 1))
    for iid in range(1, n_images + 1):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        name = f"frame_{iid:03d}_{rng.integers(0, 10**6)}.png"
        if rng.random() < 0.2:
            name = f"видео_{iid}.png"  # exercise non-ASCII names in the binary form
        n2d = int(rng.integers(0, 20))
        xys = rng.uniform(0, 2000, size=(n2d, 2))
        pids = rng.integers(0, 50, size=n2d).astype(np.uint64)
        pids[rng.random(n2d) < 0.5] = np.uint64(2**64 - 1)
        model.images[iid] = ColmapImage(iid, q, rng.standard_normal(3),
                                        int(rng.integers(1, n_cameras + 1)), name, xys, pids)

    n_points = int(rng.integers(0, max_points + 1))
    for pid in range(1, n_points + 1):
        if n_images and rng.random() < 0.4:
            tlen = int(rng.integers(1, 5))
            image_ids = rng.integers(1, n_images + 1, size=tlen).astype(np.uint32)
            idxs = rng.integers(0, 100, size=tlen).astype(np.uint32)
        else:
            image_ids = np.empty(0, dtype=np.uint32)
            idxs = np.empty(0, dtype=np.uint32)
        model.points3D[pid] = ColmapPoint3D(pid, rng.standard_normal(3) * 10,
                                            rng.integers(0, 256, size=3).astype(np.uint8),
                                            float(rng.uniform(0, 2)), image_ids, idxs)
    return model


def random_cloud(rng: np.random.Generator, n: int, extent: float = 2.0) -> PointCloud:
    return PointCloud(
        rng.uniform(-extent, extent, size=(n, 3)),
        rng.integers(0, 256, size=(n, 3)).astype(np.uint8),
        np.ones(n, dtype=np.uint32),
    )


def random_image(rng: np.random.Generator, h: int, w: int) -> ImageBuffer:
    return ImageBuffer(rng.random((h, w, 3)))


def balanced_random_image(rng: np.random.Generator, h: int, w: int) -> ImageBuffer:
    """Random image whose per-channel histograms are as flat as possible.

    Every 8-bit level occurs floor(n/256) or ceil(n/256) times per channel, so
    each level carries at most 1/256 + 1/n of the probability mass.
    """
    n = h * w
    base = np.arange(n) % 256
    data = np.empty((h, w, 3))
    for c in range(3):
        data[:, :, c] = (rng.permutation(base) / 255.0).reshape(h, w)
    return ImageBuffer(data)


def build_two_view_scene(root):
    """Synthetic two-view fixture: a textured fronto-parallel plane at z = 2.

    Both cameras look down +z with a pure x baseline of 0.2 (ten ground-sample
    distances at f = 100), so their back-projected sample grids coincide in
    world space and every voxel receives points from both views. Depth is
    analytically constant (2.0) because the plane is fronto-parallel.

    Returns a dict with the fixture paths and its geometric constants.
    """
    import json as _json

    from PIL import Image as _Image

    from lumifuse.depthio import write_pfm

    root = Path(root)
    width = height = 64
    focal = 100.0
    plane_z = 2.0
    baseline = 0.2

    c2w0 = np.eye(4)
    c2w1 = np.eye(4)
    c2w1[0, 3] = baseline
    doc = {
        "fl_x": focal,
        "w": width,
        "h": height,
        "frames": [
            {"file_path": "view0.png", "transform_matrix": c2w0.tolist()},
            {"file_path": "view1.png", "transform_matrix": c2w1.tolist()},
        ],
    }
    json_path = root / "transforms.json"
    json_path.write_text(_json.dumps(doc, indent=1))

    depth_dir = root / "depth"
    images_dir = root / "images"
    depth_dir.mkdir(parents=True, exist_ok=True)
    images_dir.mkdir(parents=True, exist_ok=True)

    us = np.arange(width) + 0.5
    vs = np.arange(height) + 0.5
    for k, origin_x in enumerate((0.0, baseline)):
        write_pfm(depth_dir / f"view{k}.pfm",
                  np.full((height, width), plane_z, dtype=np.float32))
        # World-anchored texture so co-located samples agree across views.
        wx = origin_x + plane_z * (us - width / 2) / focal
        wy = plane_z * (vs - height / 2) / focal
        r = (np.sin(40.0 * wx)[None, :] + 1.0) / 2.0
        g = (np.sin(40.0 * wy)[:, None] + 1.0) / 2.0
        rgb = np.empty((height, width, 3))
        rgb[:, :, 0] = np.broadcast_to(r, (height, width))
        rgb[:, :, 1] = np.broadcast_to(g, (height, width))
        rgb[:, :, 2] = 0.5
        arr = np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
        _Image.fromarray(arr).save(images_dir / f"view{k}.png")

    return {
        "json": json_path,
        "depth_dir": depth_dir,
        "images_dir": images_dir,
        "width": width,
        "height": height,
        "focal": focal,
        "plane_z": plane_z,
        "baseline": baseline,
    }


def brute_force_fuse(positions, colors, voxel_size, min_obs):
    """Independent fusion oracle: sort points by voxel key, group, average.

    Accumulates per cell sequentially in input order (matching the pinned
    order contract) with plain Python floats, so results must be bit-identical
    to the library's fused output.
    """
    import math

    cells: dict[tuple, list] = {}
    for i in range(len(positions)):
        key = (
            math.floor(positions[i][0] / voxel_size),
            math.floor(positions[i][1] / voxel_size),
            math.floor(positions[i][2] / voxel_size),
        )
        cells.setdefault(key, []).append(i)

    out_pos, out_col, out_obs = [], [], []
    for key in sorted(cells):
        idxs = cells[key]
        if len(idxs) < min_obs:
            continue
        pos = [0.0, 0.0, 0.0]
        col = [0.0, 0.0, 0.0]
        for i in idxs:
            for c in range(3):
                pos[c] += float(positions[i][c])
                col[c] += float(colors[i][c])
        n = len(idxs)
        out_pos.append([pos[c] / n for c in range(3)])
        out_col.append([math.floor(col[c] / n + 0.5) for c in range(3)])
        out_obs.append(n)
    return (
        np.array(out_pos, dtype=np.float64).reshape(-1, 3),
        np.array(out_col, dtype=np.int64).reshape(-1, 3),
        np.array(out_obs, dtype=np.int64),
    )
