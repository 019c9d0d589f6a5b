"""Procedural talking-shapes corpus: generation, rasterization, measurement."""

from .analyze import (
    FrameAnalysis,
    analyze_frame,
    analyze_frames,
    aperture_series,
    centroid_x_series,
    yaw_series,
)
from .core import (
    CONTROL_PER_FRAME,
    AttributeTrack,
    FactorTrack,
    IdentitySpec,
    SynthClip,
    aperture_from_control,
    extract_attributes,
    gen_clip,
    identity_for_index,
)
from .render import FACTOR_NAMES, FACTOR_RANGES, SHAPE_FAMILIES, render_factors
from .store import Corpus, CorpusEntry, build_corpus, load_clip, load_corpus, save_clip

__all__ = [
    "CONTROL_PER_FRAME",
    "FACTOR_NAMES",
    "FACTOR_RANGES",
    "SHAPE_FAMILIES",
    "AttributeTrack",
    "Corpus",
    "CorpusEntry",
    "FactorTrack",
    "FrameAnalysis",
    "IdentitySpec",
    "SynthClip",
    "analyze_frame",
    "analyze_frames",
    "aperture_from_control",
    "aperture_series",
    "build_corpus",
    "centroid_x_series",
    "extract_attributes",
    "gen_clip",
    "identity_for_index",
    "load_clip",
    "load_corpus",
    "render_factors",
    "save_clip",
    "yaw_series",
]
