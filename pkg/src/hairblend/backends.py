"""Pluggable perceptual model interfaces and their deterministic toy stand-ins.

The toy implementations are built from smooth image statistics of the shared
procedural portrait world, so every loss that consumes them stays
differentiable with respect to the image.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List

import torch
import torch.nn.functional as F

from . import toyworld as tw
from .core import BinaryMask, FeatureMap, image_tensor
from .errors import ValidationError


class TextImageSimilarityBackend(ABC):
    @abstractmethod
    def embed_image(self, img) -> torch.Tensor: ...

    @abstractmethod
    def embed_text(self, text: str) -> torch.Tensor: ...

    def similarity(self, text: str, img) -> torch.Tensor:
        return F.cosine_similarity(self.embed_image(img), self.embed_text(text), dim=0)


class KeypointBackend(ABC):
    n_keypoints: int

    @abstractmethod
    def extract(self, img) -> torch.Tensor:
        """(n_keypoints, 3) points."""


class FaceParsingBackend(ABC):
    @abstractmethod
    def parse(self, img) -> torch.Tensor:
        """Hard per-pixel labels at input resolution."""

    @abstractmethod
    def hair_mask(self, img) -> BinaryMask: ...

    @abstractmethod
    def ear_mask(self, img) -> BinaryMask: ...

    @abstractmethod
    def soft_hair_mask(self, img) -> torch.Tensor:
        """Differentiable hair probability map."""

    @abstractmethod
    def multi_level_features(self, img) -> List[torch.Tensor]:
        """Five semantic-level feature tensors, coarse to fine."""

    def nonhair_mask(self, img) -> BinaryMask:
        return self.hair_mask(img).complement()


class PerceptualFeatureBackend(ABC):
    @abstractmethod
    def features(self, img) -> List[torch.Tensor]:
        """Four feature tensors (H_i, W_i, C_i), shallow to deep."""


class PatchDistanceBackend(ABC):
    @abstractmethod
    def distance(self, a, b) -> torch.Tensor: ...


class IdentityBackend(ABC):
    @abstractmethod
    def embed(self, img) -> torch.Tensor:
        """Unit-norm identity embedding."""


def gram_matrix(f) -> torch.Tensor:
    """Channel inner-product matrix, normalized by pixel count. f is (H, W, C)."""
    t = f.data if isinstance(f, FeatureMap) else torch.as_tensor(f)
    if t.ndim != 3 or t.numel() == 0:
        raise ValidationError("gram_matrix expects a nonempty (H, W, C) tensor")
    n = t.shape[0] * t.shape[1]
    return torch.einsum("hwc,hwd->cd", t, t) / n


def _text_seed(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class ToyTextImageSimilarity(TextImageSimilarityBackend):
    """Hashes each text to a target portrait (hair color + band extent) and
    scores images by smooth summary statistics, so text-guided optimization
    has a reachable optimum at desk scale.

    Statistics are centered and scaled before normalization; without that,
    every portrait embeds nearly parallel and cosine similarity saturates.
    """

    EMBED_DIM = 9

    def __init__(self, stat_sharpness: float = 10.0):
        self.stat_sharpness = stat_sharpness

    def _stats(self, img: torch.Tensor) -> torch.Tensor:
        h, w, _ = img.shape
        s_hair = tw.soft_hair_mask(img, self.stat_sharpness)
        scores = tw.soft_class_scores(img, self.stat_sharpness)
        s_face = scores[..., 1] + scores[..., 2]
        s_bg = scores[..., 3]
        hsum = s_hair.sum() + 1.0
        fsum = s_face.sum() + 1.0
        hair_rgb = (s_hair.unsqueeze(-1) * img).sum(dim=(0, 1)) / hsum
        rows = torch.arange(h, dtype=img.dtype).unsqueeze(1) / h
        hair_row = (s_hair * rows).sum() / hsum
        face_row = (s_face * rows).sum() / fsum
        bsum = s_bg.sum() + 1.0
        bg_rgb = (s_bg.unsqueeze(-1) * img).sum(dim=(0, 1)) / bsum
        base_hair = torch.tensor(tw.BASE_COLORS["hair"], dtype=img.dtype)
        base_bg = torch.tensor(tw.BASE_COLORS["background"], dtype=img.dtype)
        # Relative geometry (hair/face ratio, hair-above-face drop) is stable
        # under the crop/rotate augmentations, the way real cross-modal
        # embeddings are; absolute areas are not.
        area_ratio = s_hair.sum() / (s_face.sum() + 1.0)
        row_drop = face_row - hair_row
        parts = [
            ((area_ratio - 0.8) / 0.4).reshape(1),
            (hair_rgb - base_hair) / 0.08,
            ((row_drop - 0.45) / 0.08).reshape(1),
            (bg_rgb - base_bg) / 0.04,
            torch.full((1,), 0.25, dtype=img.dtype),
        ]
        return torch.cat(parts)

    def embed_image(self, img) -> torch.Tensor:
        v = self._stats(image_tensor(img))
        return v / v.norm()

    def target_rendering(self, text: str) -> torch.Tensor:
        g = torch.Generator().manual_seed(_text_seed(text))
        u = torch.rand(4, generator=g) * 2.0 - 1.0
        extent = 12.0 + 8.0 * u[0]
        # 0.8 keeps target colors strictly inside the generator's reachable cell.
        hair_logits = tw.base_logits()[tw.HAIR] + tw.LOGIT_SPREAD["hair"] * 0.8 * u[1:4]
        return tw.render_flat_portrait(float(extent), torch.sigmoid(hair_logits).tolist())

    def embed_text(self, text: str) -> torch.Tensor:
        return self.embed_image(self.target_rendering(text))


class ToyKeypoints(KeypointBackend):
    """Five pseudo-3D points from the soft face region: centroid, horizontal
    and vertical spread extremes, with mean face luminance as depth."""

    n_keypoints = 5

    def extract(self, img) -> torch.Tensor:
        t = image_tensor(img)
        h, w, _ = t.shape
        s = tw.soft_face_mask(t) + 1e-6
        ys = (torch.arange(h, dtype=t.dtype).unsqueeze(1) + 0.5) / h
        xs = (torch.arange(w, dtype=t.dtype).unsqueeze(0) + 0.5) / w
        m = s.sum()
        cy = (s * ys).sum() / m
        cx = (s * xs).sum() / m
        sy = torch.sqrt((s * (ys - cy) ** 2).sum() / m + 1e-8)
        sx = torch.sqrt((s * (xs - cx) ** 2).sum() / m + 1e-8)
        lum = 0.299 * t[..., 0] + 0.587 * t[..., 1] + 0.114 * t[..., 2]
        # Depth is a tone proxy; halved so geometry dominates the loss.
        z = 0.5 * (s * lum).sum() / m
        pts = [
            (cx, cy, z),
            (cx - sx, cy, z),
            (cx + sx, cy, z),
            (cx, cy - sy, z),
            (cx, cy + sy, z),
        ]
        return torch.stack([torch.stack(p) for p in pts])


class ToyFaceParsing(FaceParsingBackend):
    """Closed-form parser for the procedural portrait world's color cells."""

    LEVEL_POOLS = (16, 8, 4, 2, 1)

    def parse(self, img) -> torch.Tensor:
        return tw.classify(image_tensor(img).detach())

    def hair_mask(self, img) -> BinaryMask:
        return BinaryMask((self.parse(img) == tw.HAIR).to(torch.float32))

    def ear_mask(self, img) -> BinaryMask:
        return BinaryMask((self.parse(img) == tw.EAR).to(torch.float32))

    def soft_hair_mask(self, img) -> torch.Tensor:
        return tw.soft_hair_mask(image_tensor(img))

    def multi_level_features(self, img) -> List[torch.Tensor]:
        scores = tw.soft_class_scores(image_tensor(img))
        nchw = scores.permute(2, 0, 1).unsqueeze(0)
        feats = []
        for pool in self.LEVEL_POOLS:
            lvl = F.avg_pool2d(nchw, pool, ceil_mode=True) if pool > 1 else nchw
            feats.append(lvl.squeeze(0).permute(1, 2, 0))
        return feats


class ToyPerceptualFeatures(PerceptualFeatureBackend):
    """Four fixed random conv layers over progressively pooled inputs."""

    CHANNELS = (4, 6, 8, 8)

    def __init__(self, seed: int = 101):
        g = torch.Generator().manual_seed(seed)
        self._kernels = [
            torch.randn(c, 3, 3, 3, generator=g) * (1.0 / 27.0**0.5) for c in self.CHANNELS
        ]

    def features(self, img) -> List[torch.Tensor]:
        t = image_tensor(img)
        nchw = t.permute(2, 0, 1).unsqueeze(0)
        out = []
        for i, k in enumerate(self._kernels):
            x = F.avg_pool2d(nchw, 2**i, ceil_mode=True) if i > 0 else nchw
            y = torch.tanh(F.conv2d(x, k.to(t.dtype), padding=1))
            out.append(y.squeeze(0).permute(1, 2, 0))
        return out


class ToyPatchDistance(PatchDistanceBackend):
    """Mean squared difference of 4x4 local means."""

    def distance(self, a, b) -> torch.Tensor:
        ta, tb = image_tensor(a), image_tensor(b)
        if ta.shape != tb.shape:
            raise ValidationError(f"patch distance needs equal shapes, got {ta.shape} vs {tb.shape}")
        pa = F.avg_pool2d(ta.permute(2, 0, 1).unsqueeze(0), 4, ceil_mode=True)
        pb = F.avg_pool2d(tb.permute(2, 0, 1).unsqueeze(0), 4, ceil_mode=True)
        return ((pa - pb) ** 2).mean()


class ToyIdentity(IdentityBackend):
    """Fixed random projection of a pooled grayscale-plus-color thumbnail."""

    DIM = 24

    def __init__(self, seed: int = 202):
        g = torch.Generator().manual_seed(seed)
        self._proj = torch.randn(self.DIM, 12 * 12 * 3, generator=g) / (12 * 12 * 3) ** 0.5

    def embed(self, img) -> torch.Tensor:
        t = image_tensor(img)
        thumb = F.adaptive_avg_pool2d(t.permute(2, 0, 1).unsqueeze(0), (12, 12))
        v = self._proj.to(t.dtype) @ thumb.flatten()
        return v / (v.norm() + 1e-12)


@dataclass
class BackendBundle:
    similarity: TextImageSimilarityBackend
    keypoints: KeypointBackend
    parsing: FaceParsingBackend
    perceptual: PerceptualFeatureBackend
    patch: PatchDistanceBackend
    identity: IdentityBackend


def toy_bundle() -> BackendBundle:
    return BackendBundle(
        similarity=ToyTextImageSimilarity(),
        keypoints=ToyKeypoints(),
        parsing=ToyFaceParsing(),
        perceptual=ToyPerceptualFeatures(),
        patch=ToyPatchDistance(),
        identity=ToyIdentity(),
    )
