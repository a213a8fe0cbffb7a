"""Pipeline configuration: JSON file + built-in defaults, strict schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .camera import CONVENTIONS
from .enhance import DEFAULT_STAGE_ORDER, EnhanceParams
from .errors import InputError
from .geometry import DEFAULT_RANDOM_POINT_COUNT


@dataclass
class PipelineConfig:
    voxel_size: float | None = None  # absolute, scene units; overrides voxel_size_rel
    voxel_size_rel: float = 0.01  # fraction of the scene AABB diagonal
    min_obs: int = 2
    stride: int = 2
    depth_scale: float | None = None  # scene units per PNG16 depth unit
    random_count: int = DEFAULT_RANDOM_POINT_COUNT
    random_seed: int = 0
    beta: float = 0.0
    alpha: float = 1.0
    sat: float = 1.0
    gamma: float = 1.0
    order: tuple[str, ...] = DEFAULT_STAGE_ORDER
    convention: str = "opencv_c2w"
    output_dir: str | None = None

    def validate(self) -> None:
        if self.voxel_size is not None and not self.voxel_size > 0:
            raise InputError(f"voxel_size: must be > 0, got {self.voxel_size}")
        if not self.voxel_size_rel > 0:
            raise InputError(f"voxel_size_rel: must be > 0, got {self.voxel_size_rel}")
        if self.min_obs < 1:
            raise InputError(f"min_obs: must be >= 1, got {self.min_obs}")
        if self.stride < 1:
            raise InputError(f"stride: must be >= 1, got {self.stride}")
        if self.depth_scale is not None and not self.depth_scale > 0:
            raise InputError(f"depth_scale: must be > 0, got {self.depth_scale}")
        if self.random_count < 1:
            raise InputError(f"random_count: must be >= 1, got {self.random_count}")
        if not 0 <= self.random_seed < 2**64:
            raise InputError(f"random_seed: must fit in uint64, got {self.random_seed}")
        if self.convention not in CONVENTIONS:
            raise InputError(f"convention: expected one of {CONVENTIONS}, got {self.convention!r}")
        # Delegates the per-field range checks for the photometric parameters.
        self.enhance_params()

    def enhance_params(self) -> EnhanceParams:
        return EnhanceParams(beta=self.beta, alpha=self.alpha, sat=self.sat,
                             gamma=self.gamma, order=tuple(self.order))


_FIELD_NAMES = {f.name for f in fields(PipelineConfig)}


def load_config(path=None) -> PipelineConfig:
    """Config from a JSON file (or pure defaults); unknown keys are rejected."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: config does not parse: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError(f"{path}: config root must be an object")
        unknown = sorted(set(doc) - _FIELD_NAMES)
        if unknown:
            raise InputError(f"{path}: unknown config keys: {', '.join(unknown)}")
        for key, value in doc.items():
            if key == "order":
                value = tuple(value)
            setattr(cfg, key, value)
    cfg.validate()
    return cfg
