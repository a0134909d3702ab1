"""Core value types (latents, feature maps, masks, images) and blending primitives.

All types are immutable value wrappers around torch tensors. Operations are
pure functions; masked blends are plain arithmetic so that cells where the
mask is 0 or 1 reproduce the corresponding operand bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import ShapeMismatchError, ValidationError

LATENT_DIM = 512
NUM_LAYERS = 18


def _as_tensor(data, dtype=None) -> torch.Tensor:
    if isinstance(data, torch.Tensor):
        t = data
    else:
        t = torch.as_tensor(data)
    if not t.dtype.is_floating_point:
        t = t.to(torch.float32)
    if dtype is not None:
        t = t.to(dtype)
    return t


def _require_finite(t: torch.Tensor, what: str) -> None:
    if not bool(torch.isfinite(t.detach()).all()):
        raise ValidationError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class LatentW:
    """Single 512-dimensional generator latent vector."""

    values: torch.Tensor

    def __post_init__(self):
        t = _as_tensor(self.values)
        if t.shape != (LATENT_DIM,):
            raise ValidationError(f"latent vector must have shape ({LATENT_DIM},), got {tuple(t.shape)}")
        _require_finite(t, "latent vector")
        object.__setattr__(self, "values", t)


@dataclass(frozen=True)
class LatentWPlus:
    """Stack of 18 per-layer latent vectors, the editing latent code.

    Layer indices follow the 18-layer generator convention and are 1-based
    inclusive wherever ranges appear (e.g. layers 1-7, 8-18).
    """

    layers: torch.Tensor

    def __post_init__(self):
        t = _as_tensor(self.layers)
        if t.shape != (NUM_LAYERS, LATENT_DIM):
            raise ValidationError(
                f"latent stack must have shape ({NUM_LAYERS}, {LATENT_DIM}), got {tuple(t.shape)}"
            )
        _require_finite(t, "latent stack")
        object.__setattr__(self, "layers", t)

    @classmethod
    def broadcast(cls, w: LatentW) -> "LatentWPlus":
        return cls(w.values.unsqueeze(0).repeat(NUM_LAYERS, 1))

    def layer_range(self, start: int, end: int) -> torch.Tensor:
        """Tensor view of layers start..end, 1-based inclusive."""
        if not (1 <= start <= end <= NUM_LAYERS):
            raise ValidationError(f"layer range {start}-{end} out of bounds 1-{NUM_LAYERS}")
        return self.layers[start - 1 : end]

    def replace_range(self, start: int, end: int, values: torch.Tensor) -> "LatentWPlus":
        """New code with layers start..end (1-based inclusive) replaced."""
        block = self.layer_range(start, end)
        values = _as_tensor(values, dtype=self.layers.dtype)
        if values.shape != block.shape:
            raise ShapeMismatchError(f"replacement block {tuple(values.shape)} != {tuple(block.shape)}")
        out = self.layers.clone()
        out[start - 1 : end] = values
        return LatentWPlus(out)


@dataclass(frozen=True)
class FeatureMap:
    """Spatial feature tensor (H, W, C) at a named generator stage."""

    stage: str
    data: torch.Tensor

    def __post_init__(self):
        t = _as_tensor(self.data)
        if t.ndim != 3:
            raise ValidationError(f"feature map must be (H, W, C), got {tuple(t.shape)}")
        _require_finite(t, "feature map")
        object.__setattr__(self, "data", t)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return tuple(self.data.shape)


@dataclass(frozen=True)
class BinaryMask:
    """Spatial {0,1} map stored as reals so blending stays pure arithmetic."""

    data: torch.Tensor

    def __post_init__(self):
        t = _as_tensor(self.data)
        if t.ndim != 2:
            raise ValidationError(f"mask must be (H, W), got {tuple(t.shape)}")
        bad = (t != 0.0) & (t != 1.0)
        if bool(bad.any()):
            raise ValidationError("mask entries must be exactly 0 or 1")
        object.__setattr__(self, "data", t)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return tuple(self.data.shape)

    @classmethod
    def ones(cls, h: int, w: int, dtype=torch.float32) -> "BinaryMask":
        return cls(torch.ones(h, w, dtype=dtype))

    @classmethod
    def zeros(cls, h: int, w: int, dtype=torch.float32) -> "BinaryMask":
        return cls(torch.zeros(h, w, dtype=dtype))

    def complement(self) -> "BinaryMask":
        return BinaryMask(1.0 - self.data)

    def count(self) -> int:
        return int(self.data.sum().item())


@dataclass(frozen=True)
class Image:
    """RGB image, values in [0, 1], shape (H, W, 3)."""

    data: torch.Tensor

    def __post_init__(self):
        t = _as_tensor(self.data)
        if t.ndim != 3 or t.shape[2] != 3:
            raise ValidationError(f"image must be (H, W, 3), got {tuple(t.shape)}")
        _require_finite(t, "image")
        d = t.detach()
        if bool((d < -1e-6).any()) or bool((d > 1.0 + 1e-6).any()):
            raise ValidationError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", t)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LatentFS:
    """Hybrid embedding: style-stage features plus the trailing 11 latent layers."""

    f7: FeatureMap
    s: torch.Tensor = field(repr=False)

    def __post_init__(self):
        t = _as_tensor(self.s)
        if t.shape != (NUM_LAYERS - 7, LATENT_DIM):
            raise ValidationError(f"s must hold layers 8-{NUM_LAYERS}, shape (11, {LATENT_DIM})")
        _require_finite(t, "s block")
        object.__setattr__(self, "s", t)


def image_tensor(img) -> torch.Tensor:
    """Accept Image or raw (H, W, 3) tensor; return the tensor."""
    if isinstance(img, Image):
        return img.data
    return _as_tensor(img)


def mask_tensor(m) -> torch.Tensor:
    """Accept BinaryMask or raw (H, W) tensor (soft masks allowed); return the tensor."""
    if isinstance(m, BinaryMask):
        return m.data
    return _as_tensor(m)


def blend_features(a: FeatureMap, b: FeatureMap, m: BinaryMask) -> FeatureMap:
    """Masked blend a*m + b*(1-m), applied per channel.

    Where m is 1 the output equals a bitwise, where m is 0 it equals b bitwise.
    """
    if a.stage != b.stage or a.shape != b.shape:
        raise ShapeMismatchError(
            f"cannot blend stage {a.stage}{a.shape} with stage {b.stage}{b.shape}"
        )
    if (m.height, m.width) != (a.height, a.width):
        raise ShapeMismatchError(
            f"mask {m.shape} does not match feature resolution {(a.height, a.width)}"
        )
    w = m.data.to(a.data.dtype).unsqueeze(-1)
    return FeatureMap(a.stage, a.data * w + b.data * (1.0 - w))


def blend_images(a, b, m: BinaryMask) -> Image:
    """Masked image blend with the same exactness guarantees as blend_features."""
    ta, tb = image_tensor(a), image_tensor(b)
    if ta.shape != tb.shape:
        raise ShapeMismatchError(f"image shapes {tuple(ta.shape)} != {tuple(tb.shape)}")
    if (m.height, m.width) != (ta.shape[0], ta.shape[1]):
        raise ShapeMismatchError("mask resolution does not match images")
    w = m.data.to(ta.dtype).unsqueeze(-1)
    return Image(ta * w + tb * (1.0 - w))


def downsample_mask(m: BinaryMask, target_h: int, target_w: int) -> BinaryMask:
    """Area-average the mask, then threshold at 0.5 (ties round to 1)."""
    if target_h <= 0 or target_w <= 0:
        raise ValidationError("target resolution must be positive")
    if target_h > m.height or target_w > m.width:
        raise ValidationError(
            f"cannot upsample mask {m.shape} to ({target_h}, {target_w})"
        )
    avg = F.adaptive_avg_pool2d(m.data.unsqueeze(0).unsqueeze(0), (target_h, target_w))
    out = (avg.squeeze(0).squeeze(0) >= 0.5).to(m.data.dtype)
    return BinaryMask(out)


def downsample_mask_any(m: BinaryMask, target_h: int, target_w: int) -> BinaryMask:
    """Coverage downsample: a target cell is 1 when any source pixel in its
    block is 1. Used for thin-structure regions (sketch strokes) that an
    area-average threshold would erase."""
    if target_h <= 0 or target_w <= 0:
        raise ValidationError("target resolution must be positive")
    if target_h > m.height or target_w > m.width:
        raise ValidationError(
            f"cannot upsample mask {m.shape} to ({target_h}, {target_w})"
        )
    avg = F.adaptive_avg_pool2d(m.data.unsqueeze(0).unsqueeze(0), (target_h, target_w))
    out = (avg.squeeze(0).squeeze(0) > 0.0).to(m.data.dtype)
    return BinaryMask(out)


def dilate_mask(m: BinaryMask, radius: int) -> BinaryMask:
    """Morphological dilation with a square structuring element of side 2*radius+1."""
    if radius < 0:
        raise ValidationError("dilation radius must be >= 0")
    if radius == 0:
        return m
    k = 2 * radius + 1
    out = F.max_pool2d(m.data.unsqueeze(0).unsqueeze(0), kernel_size=k, stride=1, padding=radius)
    return BinaryMask(out.squeeze(0).squeeze(0))


def mask_intersection_nonhair(hair_a: BinaryMask, hair_b: BinaryMask) -> BinaryMask:
    """Intersection of the two non-hair regions: (1-a)*(1-b)."""
    if hair_a.shape != hair_b.shape:
        raise ShapeMismatchError(f"mask shapes {hair_a.shape} != {hair_b.shape}")
    return BinaryMask((1.0 - hair_a.data) * (1.0 - hair_b.data))
