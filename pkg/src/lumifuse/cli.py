"""Subcommand front-end tying the modules into a reconstruction workflow.

Exit codes: 0 success, 1 user error (bad flags or input data), 2 internal
error. All file outputs are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, colmap, depthio, enhance, geometry, quality
from .camera import CONVENTIONS, parse_camera_json
from .config import PipelineConfig, load_config
from .errors import InputError
from .imaging import list_images, load_image, save_image
from .util import atomic_write_text

log = logging.getLogger("lumifuse.cli")

LOG_ENV_VAR = "LUMIFUSE_LOG"


def _configure_logging() -> None:
    name = os.environ.get(LOG_ENV_VAR, "warning").strip().lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
             "error": logging.ERROR}.get(name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")

    parser = argparse.ArgumentParser(
        prog="lumifuse",
        description="Depth fusion into COLMAP point clouds and photometric post-processing.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("convert-cameras", parents=[common],
                       help="convert a camera rig JSON into a COLMAP model (no points)")
    p.add_argument("--json", required=True, metavar="PATH", help="camera rig JSON document")
    p.add_argument("--convention", choices=CONVENTIONS, help="transform_matrix semantics")
    p.add_argument("--out", metavar="DIR", help="output model directory (or config output_dir)")
    p.add_argument("--format", choices=("binary", "text"), default="binary")

    p = sub.add_parser("fuse-depth", parents=[common],
                       help="back-project depth maps and fuse them into a COLMAP model")
    p.add_argument("--json", required=True, metavar="PATH", help="camera rig JSON document")
    p.add_argument("--convention", choices=CONVENTIONS)
    p.add_argument("--depth", required=True, metavar="DIR",
                   help="depth maps (<frame>.pfm or 16-bit <frame>.png)")
    p.add_argument("--images", metavar="DIR", help="color images matched by frame basename")
    p.add_argument("--out", metavar="DIR", help="output model directory (or config output_dir)")
    p.add_argument("--voxel-size", type=float, metavar="F", help="absolute voxel size")
    p.add_argument("--voxel-size-rel", type=float, metavar="F",
                   help="voxel size as a fraction of the scene AABB diagonal")
    p.add_argument("--min-obs", type=int, metavar="N", help="minimum observations per voxel")
    p.add_argument("--stride", type=int, metavar="N", help="pixel sampling stride")
    p.add_argument("--depth-scale", type=float, metavar="F",
                   help="scene units per PNG16 depth unit (required for PNG depth)")
    p.add_argument("--with-tracks", action="store_true",
                   help="populate per-image 2D observations and point tracks")
    p.add_argument("--ply", metavar="PATH", help="also dump the fused cloud as ASCII PLY")
    p.add_argument("--format", choices=("binary", "text"), default="binary")

    p = sub.add_parser("init-random", parents=[common],
                       help="seed a COLMAP model with uniform random points in a box")
    p.add_argument("--out", metavar="DIR", help="output model directory (or config output_dir)")
    p.add_argument("--count", type=int, metavar="N", help="number of points")
    p.add_argument("--seed", type=int, metavar="S", help="random seed")
    p.add_argument("--bbox", type=float, nargs=6, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"),
                   help="bounding box; alternative to --from-model")
    p.add_argument("--from-model", metavar="DIR",
                   help="derive the box from an existing model's points")
    p.add_argument("--padding", type=float, default=0.0, metavar="F",
                   help="padding fraction for --from-model boxes")
    p.add_argument("--ply", metavar="PATH")
    p.add_argument("--format", choices=("binary", "text"), default="binary")

    p = sub.add_parser("enhance", parents=[common],
                       help="run the photometric chain over a directory of images")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", metavar="DIR", help="output directory (or config output_dir)")
    p.add_argument("--ref", metavar="DIR|FILE", help="histogram-matching reference")
    p.add_argument("--beta", type=float, metavar="F")
    p.add_argument("--alpha", type=float, metavar="F")
    p.add_argument("--sat", type=float, metavar="F")
    p.add_argument("--gamma", type=float, metavar="F")
    p.add_argument("--order", metavar="CSV", help="stage order, e.g. brightness,contrast,saturation,gamma")

    p = sub.add_parser("match-hist", parents=[common],
                       help="histogram-match images against a reference")
    p.add_argument("--in", dest="in_path", required=True, metavar="DIR|FILE")
    p.add_argument("--ref", required=True, metavar="DIR|FILE")
    p.add_argument("--out", metavar="DIR", help="output directory (or config output_dir)")

    p = sub.add_parser("metrics", parents=[common],
                       help="PSNR/SSIM of predictions against ground truth")
    p.add_argument("--pred", required=True, metavar="DIR")
    p.add_argument("--gt", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="PATH", help="report JSON path")

    p = sub.add_parser("select", parents=[common],
                       help="evaluate rendering branches and pick the best")
    p.add_argument("--gt", required=True, metavar="DIR")
    p.add_argument("--branch", action="append", required=True, metavar="LABEL=DIR")
    p.add_argument("--criterion", choices=quality.SELECTION_CRITERIA, default="psnr")
    p.add_argument("--override", metavar="LABEL", help="force this branch instead of the argmax")
    p.add_argument("--out", required=True, metavar="PATH", help="selection JSON path")

    return parser


def _effective(args, cfg: PipelineConfig, flag: str, field: str | None = None):
    value = getattr(args, flag)
    return value if value is not None else getattr(cfg, field or flag)


def _out_dir(args, cfg: PipelineConfig) -> Path:
    out = args.out if args.out is not None else cfg.output_dir
    if out is None:
        raise InputError("no output directory: pass --out or set output_dir in the config")
    return Path(out)


def _write_model(model: colmap.ColmapModel, out_dir, fmt: str) -> None:
    if fmt == "text":
        colmap.write_text(model, out_dir)
    else:
        colmap.write_binary(model, out_dir)
    log.info("wrote %s model with %d cameras, %d images, %d points to %s",
             fmt, len(model.cameras), len(model.images), len(model.points3D), out_dir)


def _cmd_convert_cameras(args, cfg: PipelineConfig) -> int:
    rig = parse_camera_json(Path(args.json).read_bytes(),
                            _effective(args, cfg, "convention"))
    model = colmap.model_from_rig(rig)
    _write_model(model, _out_dir(args, cfg), args.format)
    return 0


def _frame_stem(name: str) -> str:
    return Path(name.replace("\\", "/")).stem


def _find_depth_file(depth_dir: Path, stem: str) -> Path:
    for suffix in (".pfm", ".png"):
        candidate = depth_dir / (stem + suffix)
        if candidate.is_file():
            return candidate
    raise InputError(f"no depth map {stem}.pfm or {stem}.png in {depth_dir}")


def _cmd_fuse_depth(args, cfg: PipelineConfig) -> int:
    if args.voxel_size is not None and args.voxel_size_rel is not None:
        raise InputError("--voxel-size and --voxel-size-rel are mutually exclusive")
    convention = _effective(args, cfg, "convention")
    stride = int(_effective(args, cfg, "stride"))
    min_obs = int(_effective(args, cfg, "min_obs"))
    depth_scale = _effective(args, cfg, "depth_scale")

    rig = parse_camera_json(Path(args.json).read_bytes(), convention)
    if not rig.frames:
        raise InputError(f"{args.json}: rig has no frames")
    depth_dir = Path(args.depth)
    images_dir = Path(args.images) if args.images else None

    clouds = []
    pixel_us = []
    pixel_vs = []
    for frame in rig.frames:
        stem = _frame_stem(frame.name)
        depth = depthio.load_depth(_find_depth_file(depth_dir, stem), depth_scale)
        color = None
        if images_dir is not None:
            color_path = images_dir / (stem + ".png")
            if not color_path.is_file():
                raise InputError(f"no color image {color_path}")
            color = load_image(color_path)
        cloud, us, vs = geometry.back_project(
            depth, rig.intrinsics_of(frame), frame.pose,
            color_source=color, stride=stride, return_pixels=True)
        clouds.append(cloud)
        pixel_us.append(us)
        pixel_vs.append(vs)

    # Flag > config; an explicit relative flag overrides an absolute config value.
    if args.voxel_size is not None:
        voxel_size = args.voxel_size
    elif args.voxel_size_rel is None and cfg.voxel_size is not None:
        voxel_size = cfg.voxel_size
    else:
        rel = args.voxel_size_rel if args.voxel_size_rel is not None else cfg.voxel_size_rel
        diagonal = _union_diagonal(clouds)
        voxel_size = rel * diagonal
        log.debug("relative voxel sizing: %.6g * %.6g = %.6g", rel, diagonal, voxel_size)

    model = colmap.model_from_rig(rig)
    membership = None
    if args.with_tracks:
        fused, membership = geometry.voxel_fuse(clouds, voxel_size, min_obs,
                                                return_membership=True)
    else:
        fused = geometry.voxel_fuse(clouds, voxel_size, min_obs)
    if len(fused) == 0:
        log.warning("fusion produced an empty point cloud")
    points = geometry.cloud_to_colmap(fused)
    if membership is not None:
        _attach_tracks(model, points, membership, clouds, pixel_us, pixel_vs)
    for pt in points:
        model.points3D[pt.point3D_id] = pt

    _write_model(model, _out_dir(args, cfg), args.format)
    if args.ply:
        depthio.write_ply(args.ply, fused)
    return 0


def _union_diagonal(clouds) -> float:
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for c in clouds:
        if len(c):
            lo = np.minimum(lo, c.positions.min(axis=0))
            hi = np.maximum(hi, c.positions.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise InputError("no valid depth samples; cannot derive a voxel size")
    diagonal = float(np.linalg.norm(hi - lo))
    if diagonal == 0.0:
        raise InputError("degenerate scene bounds; pass --voxel-size explicitly")
    return diagonal


def _attach_tracks(model, points, membership, clouds, pixel_us, pixel_vs) -> None:
    """Populate per-image 2D observations and per-point tracks from fusion membership.

    Member indices refer to the concatenated input clouds; 2D observations use
    COLMAP's continuous pixel coordinates (pixel center at index + 0.5).
    """
    if not membership:
        return
    us_all = np.concatenate(pixel_us)
    vs_all = np.concatenate(pixel_vs)
    offsets = np.cumsum([0] + [len(c) for c in clouds])

    counts = np.array([m.shape[0] for m in membership], dtype=np.int64)
    members = np.concatenate(membership)
    cell_of = np.repeat(np.arange(len(membership), dtype=np.int64), counts)
    cloud_of = np.searchsorted(offsets, members, side="right") - 1

    # Rank of each member within its image, preserving member order.
    perm = np.argsort(cloud_of, kind="stable")
    grouped = cloud_of[perm]
    group_start = np.zeros(len(grouped), dtype=np.int64)
    boundaries = np.flatnonzero(np.diff(grouped, prepend=np.int64(-1)))
    group_start[boundaries] = boundaries
    group_start = np.maximum.accumulate(group_start)
    rank_sorted = np.arange(len(grouped), dtype=np.int64) - group_start
    point2d_idx = np.empty(len(members), dtype=np.int64)
    point2d_idx[perm] = rank_sorted

    x = us_all[members] + 0.5
    y = vs_all[members] + 0.5
    point_ids = cell_of + 1  # matches cloud_to_colmap's starting_id=1

    for image_index in range(len(clouds)):
        sel = perm[grouped == image_index]
        img = model.images[image_index + 1]
        img.xys = np.column_stack([x[sel], y[sel]]).reshape(-1, 2)
        img.point3D_ids = point_ids[sel].astype(np.uint64)

    bounds = np.concatenate([[0], np.cumsum(counts)])
    for j, pt in enumerate(points):
        s, e = bounds[j], bounds[j + 1]
        pt.image_ids = (cloud_of[s:e] + 1).astype(np.uint32)
        pt.point2D_idxs = point2d_idx[s:e].astype(np.uint32)


def _cmd_init_random(args, cfg: PipelineConfig) -> int:
    count = int(_effective(args, cfg, "count", "random_count"))
    seed = int(_effective(args, cfg, "seed", "random_seed"))
    if (args.bbox is None) == (args.from_model is None):
        raise InputError("exactly one of --bbox or --from-model is required")
    if args.bbox is not None:
        lo = np.array(args.bbox[:3])
        hi = np.array(args.bbox[3:])
        bbox = geometry.Aabb(np.minimum(lo, hi), np.maximum(lo, hi))
    else:
        source = colmap.read_binary(args.from_model)
        if not source.points3D:
            raise InputError(f"{args.from_model}: model has no points to bound")
        xyz = np.array([pt.xyz for pt in source.points3D.values()])
        cloud = geometry.PointCloud(xyz, np.zeros((len(xyz), 3), dtype=np.uint8),
                                    np.ones(len(xyz), dtype=np.uint32))
        bbox = geometry.compute_aabb(cloud, args.padding)

    cloud = geometry.random_init(bbox, count, seed)
    model = colmap.ColmapModel()
    for pt in geometry.cloud_to_colmap(cloud):
        model.points3D[pt.point3D_id] = pt
    _write_model(model, _out_dir(args, cfg), args.format)
    if args.ply:
        depthio.write_ply(args.ply, cloud)
    return 0


def _resolve_reference(ref_arg: str | None, image_name: str):
    if ref_arg is None:
        return None
    ref_path = Path(ref_arg)
    if ref_path.is_dir():
        candidate = ref_path / image_name
        if not candidate.is_file():
            raise InputError(f"no reference image {candidate}")
        return candidate
    if ref_path.is_file():
        return ref_path
    raise InputError(f"reference {ref_path} does not exist")


def _cmd_enhance(args, cfg: PipelineConfig) -> int:
    order = tuple(args.order.split(",")) if args.order is not None else tuple(cfg.order)
    params = enhance.EnhanceParams(
        beta=float(_effective(args, cfg, "beta")),
        alpha=float(_effective(args, cfg, "alpha")),
        sat=float(_effective(args, cfg, "sat")),
        gamma=float(_effective(args, cfg, "gamma")),
        order=order,
        reference=args.ref,
    )
    out_dir = _out_dir(args, cfg)
    for path in list_images(args.in_dir):
        ref_path = _resolve_reference(params.reference, path.name)
        ref = load_image(ref_path) if ref_path is not None else None
        result = enhance.enhance_pipeline(load_image(path), params, ref)
        save_image(result, out_dir / path.name)
        log.info("enhanced %s", path.name)
    return 0


def _cmd_match_hist(args, cfg: PipelineConfig) -> int:
    in_path = Path(args.in_path)
    paths = [in_path] if in_path.is_file() else list_images(in_path)
    out_dir = _out_dir(args, cfg)
    for path in paths:
        ref_path = _resolve_reference(args.ref, path.name)
        result = enhance.histogram_match(load_image(path), load_image(ref_path))
        save_image(result, out_dir / path.name)
    return 0


def _cmd_metrics(args, cfg: PipelineConfig) -> int:
    report = quality.evaluate_dir(args.pred, args.gt)
    atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n")
    log.info("mean PSNR %.4f dB, mean SSIM %.4f over %d images",
             report.mean_psnr, report.mean_ssim, report.image_count)
    return 0


def _cmd_select(args, cfg: PipelineConfig) -> int:
    reports = {}
    for entry in args.branch:
        label, sep, directory = entry.partition("=")
        if not sep or not label or not directory:
            raise InputError(f"--branch expects LABEL=DIR, got {entry!r}")
        if label in reports:
            raise InputError(f"duplicate branch label {label!r}")
        reports[label] = quality.evaluate_dir(directory, args.gt)

    if args.override is not None:
        if args.override not in reports:
            raise InputError(f"--override names unknown branch {args.override!r}")
        result = quality.SelectionResult(chosen=args.override, criterion="manual",
                                         reports=reports)
    else:
        result = quality.select_branch(reports, args.criterion)
    atomic_write_text(args.out, json.dumps(result.to_dict(), indent=2, allow_nan=False) + "\n")
    log.info("selected branch %r by %s", result.chosen, result.criterion)
    return 0


_COMMANDS = {
    "convert-cameras": _cmd_convert_cameras,
    "fuse-depth": _cmd_fuse_depth,
    "init-random": _cmd_init_random,
    "enhance": _cmd_enhance,
    "match-hist": _cmd_match_hist,
    "metrics": _cmd_metrics,
    "select": _cmd_select,
}


def run(argv=None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        cfg = load_config(args.config)
        log.debug("kernel backend: %s", _kernels.active_backend())
        log.debug("effective config: %r", cfg)
        return _COMMANDS[args.command](args, cfg)
    except (InputError, OSError) as exc:
        print(f"lumifuse: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and convert to exit code
        log.exception("internal error")
        print(f"lumifuse: internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
