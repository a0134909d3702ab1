"""Loss terms used by proxy generation and color blending.

Every function is pure and differentiable with respect to its tensor inputs;
masks passed as BinaryMask are treated as constants, raw tensors may carry
gradients (soft masks).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import torch
import torch.nn.functional as F

from .backends import (
    FaceParsingBackend,
    KeypointBackend,
    PatchDistanceBackend,
    PerceptualFeatureBackend,
    TextImageSimilarityBackend,
    gram_matrix,
)
from .core import LatentWPlus, image_tensor, mask_tensor
from .errors import ValidationError


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights; defaults are the engine's standard balances."""

    clip: float = 1.0
    pose: float = 200.0
    shape: float = 1.0
    style: float = 2000.0
    reg: float = 1.0
    mse: float = 0.5
    lpips: float = 0.8
    m_par: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValidationError(f"loss weight {name} must be nonnegative, got {value}")


@dataclass(frozen=True)
class AugmentationSet:
    """Deterministic random-resized-crop plus mild rotation transforms.

    Each member i of the set is fully determined by (seed, i); callers reseed
    per optimization step.
    """

    count: int = 4
    seed: int = 0
    scale_range: tuple = (0.8, 1.0)
    max_rotate_deg: float = 5.0

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("augmentation count must be >= 1")

    def apply(self, img) -> List[torch.Tensor]:
        t = image_tensor(img)
        nchw = t.permute(2, 0, 1).unsqueeze(0)
        g = torch.Generator().manual_seed(self.seed)
        outs = []
        lo, hi = self.scale_range
        for _ in range(self.count):
            r = torch.rand(4, generator=g)
            scale = lo + (hi - lo) * float(r[0])
            theta = (2.0 * float(r[1]) - 1.0) * self.max_rotate_deg * torch.pi / 180.0
            # Keep the sampled window inside the frame.
            margin = 1.0 - scale
            tx = (2.0 * float(r[2]) - 1.0) * margin
            ty = (2.0 * float(r[3]) - 1.0) * margin
            cos, sin = torch.cos(torch.tensor(theta)), torch.sin(torch.tensor(theta))
            mat = torch.tensor(
                [[scale * cos, -scale * sin, tx], [scale * sin, scale * cos, ty]],
                dtype=t.dtype,
            ).unsqueeze(0)
            grid = F.affine_grid(mat, list(nchw.shape), align_corners=False)
            sampled = F.grid_sample(
                nchw, grid, mode="bilinear", padding_mode="border", align_corners=False
            )
            outs.append(sampled.squeeze(0).permute(1, 2, 0))
        return outs


def clip_loss(image, text: str, augs: AugmentationSet, sim: TextImageSimilarityBackend) -> torch.Tensor:
    """Mean (1 - cosine) between augmented image embeddings and the text embedding."""
    if augs.count < 1:
        raise ValidationError("clip loss needs at least one augmentation")
    text_embed = sim.embed_text(text).detach()
    views = augs.apply(image)
    terms = [1.0 - F.cosine_similarity(sim.embed_image(v), text_embed, dim=0) for v in views]
    return torch.stack(terms).mean()


def pose_loss(src, gen, kp: KeypointBackend) -> torch.Tensor:
    """Summed squared keypoint displacement, normalized by keypoint count."""
    a = kp.extract(src)
    b = kp.extract(gen)
    return ((a - b) ** 2).sum() / kp.n_keypoints


def style_loss(ref, gen, m_ref, m_gen, pf: PerceptualFeatureBackend) -> torch.Tensor:
    """Mean over feature layers of squared gram-matrix differences of the
    masked hair regions."""
    ref_t = image_tensor(ref) * mask_tensor(m_ref).unsqueeze(-1)
    gen_t = image_tensor(gen) * mask_tensor(m_gen).unsqueeze(-1)
    f_ref = pf.features(ref_t)
    f_gen = pf.features(gen_t)
    terms = [((gram_matrix(a) - gram_matrix(b)) ** 2).sum() for a, b in zip(f_ref, f_gen)]
    return torch.stack(terms).mean()


def reg_loss(w_t, w_prev) -> torch.Tensor:
    """Squared step magnitude in latent space."""
    a = w_t.layers if isinstance(w_t, LatentWPlus) else torch.as_tensor(w_t)
    b = w_prev.layers if isinstance(w_prev, LatentWPlus) else torch.as_tensor(w_prev)
    return ((a - b) ** 2).sum()


def shape_loss(gen_hair_mask, target_hair_mask) -> torch.Tensor:
    """Mean squared difference between hair masks (soft masks carry gradient)."""
    a = mask_tensor(gen_hair_mask)
    b = mask_tensor(target_hair_mask)
    if a.shape != b.shape:
        raise ValidationError(f"shape loss needs equal resolutions, got {a.shape} vs {b.shape}")
    return ((a - b) ** 2).mean()


def bg_loss(i_style, i_color, m_nonhair) -> torch.Tensor:
    """Squared difference summed over the masked (non-hair) pixels."""
    a, b = image_tensor(i_style), image_tensor(i_color)
    if a.shape != b.shape:
        raise ValidationError("background loss needs equal image shapes")
    m = mask_tensor(m_nonhair).unsqueeze(-1)
    return (((a - b) * m) ** 2).sum()


def blend_loss(i_final, i_color, i_style, m_color, pd: PatchDistanceBackend) -> torch.Tensor:
    """Anchor i_final to i_color inside the mask and to i_style outside it,
    with an L2 and a patch-distance term on each side, all weighted one."""
    f = image_tensor(i_final)
    c = image_tensor(i_color)
    s = image_tensor(i_style)
    m = mask_tensor(m_color).to(f.dtype).unsqueeze(-1)
    inside_l2 = ((f - c) ** 2 * m).sum() / (m.sum() * 3.0 + 1e-8)
    outside_l2 = ((f - s) ** 2 * (1.0 - m)).sum() / ((1.0 - m).sum() * 3.0 + 1e-8)
    inside_pd = pd.distance(f * m, c * m)
    outside_pd = pd.distance(f * (1.0 - m), s * (1.0 - m))
    return inside_l2 + inside_pd + outside_l2 + outside_pd


def avg_color_loss(gen, hair_mask, target_rgb) -> torch.Tensor:
    """Squared distance between the hair region's mean color and the target."""
    t = image_tensor(gen)
    m = mask_tensor(hair_mask).to(t.dtype)
    total = m.sum()
    if float(total) == 0.0:
        return torch.zeros((), dtype=t.dtype)
    mean = (t * m.unsqueeze(-1)).sum(dim=(0, 1)) / total
    target = torch.as_tensor(target_rgb, dtype=t.dtype)
    return ((mean - target) ** 2).sum()


def multi_level_parsing_loss(pred, target, parsing: FaceParsingBackend) -> torch.Tensor:
    """Sum over semantic levels of (1 - cosine) between parsing features.

    Clamped at zero: float cosine of identical vectors can round above one.
    """
    f_pred = parsing.multi_level_features(pred)
    f_target = parsing.multi_level_features(target)
    terms = [
        torch.clamp(1.0 - F.cosine_similarity(a.flatten(), b.flatten(), dim=0), min=0.0)
        for a, b in zip(f_pred, f_target)
    ]
    return torch.stack(terms).sum()


def sketch_trainer_loss(
    pred,
    target,
    parsing: FaceParsingBackend,
    pd: PatchDistanceBackend,
    w: LossWeights,
) -> torch.Tensor:
    """Summed squared pixel error + patch distance + multi-level parsing loss.

    The pixel term is a bare squared norm (not a mean); it carries the
    training signal, with the patch and parsing terms as refinements.
    """
    p, t = image_tensor(pred), image_tensor(target)
    if p.shape != t.shape:
        raise ValidationError("sketch trainer loss needs equal image shapes")
    sq = ((p - t) ** 2).sum()
    patch = pd.distance(p, t)
    m_par = multi_level_parsing_loss(p, t, parsing)
    return w.mse * sq + w.lpips * patch + w.m_par * m_par
