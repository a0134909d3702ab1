"""hairblend: unified hair editing by proxy feature blending in a hierarchical
generator, with deterministic toy backends for desk-scale verification."""

from .core import (
    BinaryMask,
    FeatureMap,
    Image,
    LatentFS,
    LatentW,
    LatentWPlus,
    blend_features,
    dilate_mask,
    downsample_mask,
    downsample_mask_any,
    mask_intersection_nonhair,
)
from .errors import HairblendError, ShapeMismatchError, StageError, ValidationError
from .generator import GeneratorBackend, GeneratorStage, ToyGenerator, truncation_init
from .losses import AugmentationSet, LossWeights
from .pipeline import (
    EditReport,
    EditRequest,
    EngineContext,
    ReferenceSpec,
    RgbSpec,
    TextSpec,
    run_edit,
    toy_context,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationSet",
    "BinaryMask",
    "EditReport",
    "EditRequest",
    "EngineContext",
    "FeatureMap",
    "GeneratorBackend",
    "GeneratorStage",
    "HairblendError",
    "Image",
    "LatentFS",
    "LatentW",
    "LatentWPlus",
    "LossWeights",
    "ReferenceSpec",
    "RgbSpec",
    "ShapeMismatchError",
    "StageError",
    "TextSpec",
    "ToyGenerator",
    "ValidationError",
    "blend_features",
    "dilate_mask",
    "downsample_mask",
    "downsample_mask_any",
    "mask_intersection_nonhair",
    "run_edit",
    "toy_context",
    "truncation_init",
]
