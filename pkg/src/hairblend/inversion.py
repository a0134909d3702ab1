"""Optimization-based embedding of images into latent and feature spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import torch

from .backends import PatchDistanceBackend, ToyPatchDistance
from .core import FeatureMap, Image, LatentFS, LatentWPlus, image_tensor
from .errors import ValidationError
from .generator import GeneratorBackend, OUTPUT, STYLE
from .optim import OptimizationTrace, minimize


@dataclass(frozen=True)
class InversionConfig:
    learning_rate: float = 0.01
    steps: int = 200
    fs_steps: int = 100
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.steps < 1:
            raise ValidationError("inversion budget must be >= 1 step")
        if self.fs_steps < 0:
            raise ValidationError("feature refinement budget must be >= 0 steps")
        if self.optimizer != "adam":
            raise ValidationError(f"unsupported optimizer {self.optimizer!r}")


def _reconstruction_loss(synth: torch.Tensor, target: torch.Tensor, patch) -> torch.Tensor:
    return ((synth - target) ** 2).mean() + patch.distance(synth, target)


def invert_wplus_traced(
    img: Image,
    gen: GeneratorBackend,
    cfg: InversionConfig,
    patch: Optional[PatchDistanceBackend] = None,
    progress=None,
) -> Tuple[LatentWPlus, OptimizationTrace]:
    """Optimize a latent stack so its synthesis reconstructs the image.

    Starts from the mean latent; returns the best-loss iterate. A budget that
    never improves the initial loss is flagged on the trace (latent is still
    returned).
    """
    target = image_tensor(img)
    size = gen.output_size
    if target.shape[0] != size or target.shape[1] != size:
        raise ValidationError(
            f"image resolution {tuple(target.shape[:2])} does not match backend output {size}"
        )
    patch = patch if patch is not None else ToyPatchDistance()
    leaf = LatentWPlus.broadcast(gen.mean_latent).layers.clone().requires_grad_()
    target = target.to(leaf.dtype)

    def loss(_step):
        synth = gen.synth_to_stage(LatentWPlus(leaf), OUTPUT).data
        return _reconstruction_loss(synth, target, patch)

    trace = minimize([leaf], loss, cfg.steps, cfg.learning_rate, progress, label="invert_wplus")
    return LatentWPlus(leaf.detach().clone()), trace


def invert_wplus(img, gen, cfg: InversionConfig, patch=None) -> LatentWPlus:
    w, _ = invert_wplus_traced(img, gen, cfg, patch)
    return w


FEATURE_PRIOR_WEIGHT = 0.3


def embed_fs_traced(
    img: Image,
    w: LatentWPlus,
    gen: GeneratorBackend,
    cfg: InversionConfig,
    patch: Optional[PatchDistanceBackend] = None,
    progress=None,
) -> Tuple[LatentFS, OptimizationTrace]:
    """Refine the style-stage feature map for reconstruction, keeping the
    latent tail fixed. Zero refinement steps return the latent's own features.

    A proximity term anchors the features to their generator-produced
    initialization: free-form feature optimization reconstructs well but
    deforms the features off the generator manifold, which cripples every
    later edit that reinterprets them. The term is zero at the
    initialization, so the best iterate still never reconstructs worse than
    the pure-latent solution.
    """
    target = image_tensor(img)
    patch = patch if patch is not None else ToyPatchDistance()
    f_init = gen.synth_to_stage(w, STYLE)
    anchor = f_init.data.detach().clone()
    tail = w.layer_range(8, 18)
    leaf = anchor.clone().requires_grad_()
    target = target.to(leaf.dtype)

    def loss(_step):
        synth = gen.synth_from_stage(FeatureMap(STYLE, leaf), tail, STYLE, OUTPUT).data
        prior = FEATURE_PRIOR_WEIGHT * ((leaf - anchor) ** 2).mean()
        return _reconstruction_loss(synth, target, patch) + prior

    trace = minimize([leaf], loss, cfg.fs_steps, cfg.learning_rate, progress, label="embed_fs")
    return LatentFS(f7=FeatureMap(STYLE, leaf.detach().clone()), s=tail), trace


def embed_fs(img, w, gen, cfg: InversionConfig, patch=None) -> LatentFS:
    fs, _ = embed_fs_traced(img, w, gen, cfg, patch)
    return fs
