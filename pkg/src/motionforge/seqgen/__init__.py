"""Stage-2 sequence generation: diffusion schedule and sampling, conformer
encoders, control encoding, variance adapter, and EMA."""

from .adapter import ATTRIBUTE_COUNT, ATTRIBUTE_ORDER, AttributeBlock, VarianceAdapter
from .conformer import ConformerConfig, ConformerEncoder, RelPositionalEncoding
from .control import ControlEncoder
from .generator import (
    INPUT_LAYOUT,
    DiffusionMotionGenerator,
    GeneratorConditioning,
    GeneratorWidths,
    build_generator_input,
    sinusoidal_time_embedding,
)
from .model import Stage2Model, Stage2ModelConfig, load_stage2, save_stage2, stage1_fingerprint
from .schedule import (
    DiffusionSchedule,
    EmaTracker,
    ddim_sample,
    ddim_step_sequence,
    diffusion_loss,
    ema_update,
    invert_q_sample,
    make_schedule,
    q_sample,
)
from .sequences import MotionSequence

__all__ = [
    "ATTRIBUTE_COUNT",
    "ATTRIBUTE_ORDER",
    "AttributeBlock",
    "ConformerConfig",
    "ConformerEncoder",
    "ControlEncoder",
    "DiffusionMotionGenerator",
    "DiffusionSchedule",
    "EmaTracker",
    "GeneratorConditioning",
    "GeneratorWidths",
    "INPUT_LAYOUT",
    "MotionSequence",
    "RelPositionalEncoding",
    "Stage2Model",
    "Stage2ModelConfig",
    "VarianceAdapter",
    "build_generator_input",
    "ddim_sample",
    "ddim_step_sequence",
    "diffusion_loss",
    "ema_update",
    "invert_q_sample",
    "load_stage2",
    "make_schedule",
    "q_sample",
    "save_stage2",
    "sinusoidal_time_embedding",
    "stage1_fingerprint",
]
