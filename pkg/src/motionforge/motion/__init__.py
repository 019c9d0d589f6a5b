"""Stage-1 networks: encoders, hierarchical aggregation, warp renderer."""

from .encoder import (
    LANDMARK_DIM,
    MORPHABLE_MODEL_DIM,
    FeaturePyramid,
    HALAggregator,
    IdentityEncoder,
    ImageEncoder,
    MotionEncoder,
    TopLevelAggregator,
    compose_motion_direction,
    level_channels,
    orthonormal_rows,
    pyramid_sides,
)
from .model import (
    Stage1Model,
    Stage1ModelConfig,
    load_manifest,
    load_stage1,
    save_stage1,
    tensor_checksum,
)
from .renderer import FlowMaskPredictor, Renderer
from .warp import warp_bilinear

__all__ = [
    "LANDMARK_DIM",
    "MORPHABLE_MODEL_DIM",
    "FeaturePyramid",
    "FlowMaskPredictor",
    "HALAggregator",
    "IdentityEncoder",
    "ImageEncoder",
    "MotionEncoder",
    "Renderer",
    "Stage1Model",
    "Stage1ModelConfig",
    "TopLevelAggregator",
    "compose_motion_direction",
    "level_channels",
    "load_manifest",
    "load_stage1",
    "orthonormal_rows",
    "pyramid_sides",
    "save_stage1",
    "tensor_checksum",
    "warp_bilinear",
]
