"""Adaptive-resolution intra codec with a trainable up-sampler."""

from .coder import (
    CtuDecision,
    EncodeOptions,
    EncodeResult,
    LrReference,
    ModelSet,
    decode_frame,
    encode_frame,
    load_models_exact,
    load_models_nearest,
    stage1_upsample,
    stage2_upsample,
)
from .errors import (
    AricError,
    ArgumentError,
    BitstreamError,
    ConfigurationError,
    EvaluationError,
    ModelFormatError,
    TrainingDivergedError,
)
from .frame import Frame, frame_from_planes, load_frame, save_frame
from .nn import ArchConfig, UpsamplerNet, load_model, save_model
from .resample import BoundaryContext, downsample_2x, downsample_frame, upsample_dctif

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "ArgumentError",
    "AricError",
    "BitstreamError",
    "BoundaryContext",
    "ConfigurationError",
    "CtuDecision",
    "EncodeOptions",
    "EncodeResult",
    "EvaluationError",
    "Frame",
    "LrReference",
    "ModelFormatError",
    "ModelSet",
    "TrainingDivergedError",
    "UpsamplerNet",
    "decode_frame",
    "downsample_2x",
    "downsample_frame",
    "encode_frame",
    "frame_from_planes",
    "load_frame",
    "load_model",
    "load_models_exact",
    "load_models_nearest",
    "save_frame",
    "save_model",
    "stage1_upsample",
    "stage2_upsample",
    "upsample_dctif",
]
