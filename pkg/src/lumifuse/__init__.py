"""Deterministic tooling for low-light scene reconstruction pipelines.

Covers the non-neural stages around a Gaussian-splatting workflow: camera rig
conversion to COLMAP poses, depth-map back-projection with voxelized fusion
into COLMAP sparse models, a luminance-guided photometric post-processing
chain with histogram matching, and PSNR/SSIM evaluation with branch selection.
"""

__version__ = "0.1.0"

from ._kernels import active_backend
from .camera import (
    CameraIntrinsics,
    CameraModelType,
    CameraRig,
    Pose,
    RigFrame,
    matrix_to_pose,
    parse_camera_json,
    pose_to_matrix,
)
from .colmap import (
    INVALID_POINT3D_ID,
    ColmapCamera,
    ColmapImage,
    ColmapModel,
    ColmapPoint3D,
    read_binary,
    read_text,
    write_binary,
    write_text,
)
from .enhance import EnhanceParams, enhance_pipeline, histogram_match
from .errors import InputError
from .geometry import (
    Aabb,
    DepthMap,
    PointCloud,
    VoxelAccumulator,
    back_project,
    cloud_to_colmap,
    compute_aabb,
    project,
    random_init,
    voxel_fuse,
)
from .imaging import ImageBuffer, load_image, luminance, save_image
from .quality import MetricReport, SelectionResult, evaluate_dir, psnr, select_branch, ssim

__all__ = [
    "__version__",
    "active_backend",
    "CameraIntrinsics",
    "CameraModelType",
    "CameraRig",
    "Pose",
    "RigFrame",
    "matrix_to_pose",
    "parse_camera_json",
    "pose_to_matrix",
    "INVALID_POINT3D_ID",
    "ColmapCamera",
    "ColmapImage",
    "ColmapModel",
    "ColmapPoint3D",
    "read_binary",
    "read_text",
    "write_binary",
    "write_text",
    "EnhanceParams",
    "enhance_pipeline",
    "histogram_match",
    "InputError",
    "Aabb",
    "DepthMap",
    "PointCloud",
    "VoxelAccumulator",
    "back_project",
    "cloud_to_colmap",
    "compute_aabb",
    "project",
    "random_init",
    "voxel_fuse",
    "ImageBuffer",
    "load_image",
    "luminance",
    "save_image",
    "MetricReport",
    "SelectionResult",
    "evaluate_dir",
    "psnr",
    "select_branch",
    "ssim",
]
