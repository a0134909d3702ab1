"""Hierarchical generator backends with injectable intermediate features.

A backend synthesizes images from 18-layer latent stacks and exposes two tap
points: the style stage (hairstyle blending) and the color stage (hair color
blending). Synthesis from an injected feature map resumes the exact code path
used for direct synthesis, so injection round-trips are bitwise.
"""

from __future__ import annotations

import importlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from . import toyworld as tw
from .core import LATENT_DIM, FeatureMap, Image, LatentW, LatentWPlus
from .errors import ShapeMismatchError, ValidationError

STYLE, COLOR, OUTPUT = "style", "color", "output"
_STAGE_ORDER = {STYLE: 0, COLOR: 1, OUTPUT: 2}

# Tail layer ranges consumed between stages, 1-based inclusive.
TAIL_RANGES = {(STYLE, COLOR): (8, 14), (STYLE, OUTPUT): (8, 18), (COLOR, OUTPUT): (15, 18)}


@dataclass(frozen=True)
class GeneratorStage:
    name: str
    feature_shape: tuple


class GeneratorBackend(ABC):
    """Deterministic latent-to-image synthesis with stage taps."""

    @property
    @abstractmethod
    def mean_latent(self) -> LatentW: ...

    @abstractmethod
    def stages(self) -> list[GeneratorStage]: ...

    @abstractmethod
    def sample_random_latent(self, seed: int) -> LatentW: ...

    @abstractmethod
    def synth_to_stage(self, w: LatentWPlus, stage) -> FeatureMap: ...

    @abstractmethod
    def synth_from_stage(self, f: FeatureMap, w_tail: torch.Tensor, from_stage, to_stage): ...

    def stage(self, name: str) -> GeneratorStage:
        for s in self.stages():
            if s.name == name:
                return s
        raise ValidationError(f"unknown generator stage {name!r}")

    def synthesize(self, w: LatentWPlus) -> Image:
        return Image(self.synth_to_stage(w, OUTPUT).data)

    @property
    def output_size(self) -> int:
        return self.stage(OUTPUT).feature_shape[0]


def _stage_name(stage) -> str:
    return stage.name if isinstance(stage, GeneratorStage) else str(stage)


def truncation_init(w_mean: LatentW, w_random: LatentW, psi: float) -> LatentWPlus:
    """Interpolate a random latent toward the mean and broadcast to all layers.

    Written as (1-psi)*mean + psi*random so both endpoints reproduce their
    input bitwise.
    """
    if not 0.0 <= psi <= 1.0:
        raise ValidationError(f"psi must lie in [0, 1], got {psi}")
    vec = (1.0 - psi) * w_mean.values + psi * w_random.values
    return LatentWPlus.broadcast(LatentW(vec))


class ToyGenerator(GeneratorBackend):
    """Fixed-weight procedural portrait generator, differentiable end to end.

    Layers 1-7 control structure (hair extent, face placement, texture phase),
    layers 8-14 modulate per-class colors inside their cells, and layers 15-18
    apply a mild global tone. Everything after the style stage is spatially
    local (nearest upsampling and per-pixel arithmetic), so feature-level edits
    map onto pixel blocks exactly.
    """

    N_STRUCT = 6

    def __init__(self, seed: int = 7, dtype=torch.float32):
        self.seed = seed
        self.dtype = dtype
        g = torch.Generator().manual_seed(seed)
        scale = (7.0 / LATENT_DIM) ** 0.5
        self._p_struct = torch.randn(7, self.N_STRUCT, LATENT_DIM, generator=g) * scale
        # Color projections run 3x hotter: paired with the /10 modulation slope
        # they keep a wide non-flat band that reconstruction can pin latents in.
        self._p_color = torch.randn(7, 4, 3, LATENT_DIM, generator=g) * (3.0 * scale)
        # Layer-to-class gains: hair color lives mostly on layers 10-13, the
        # other classes on 8, 9, 14, with a small leak either way. The leak is
        # what makes latent-only color edits disturb non-hair regions; it must
        # stay small or the background term's quadratic cost freezes color
        # motion partway (the sum over pixels amplifies any leak).
        gains = torch.full((7, 4), 0.15)
        gains[2:6, 0] = 1.0
        gains[(0, 1, 6), 1:] = 1.0
        gains[(0, 1, 6), 0] = 0.3
        self._color_gains = gains
        self._p_tone = torch.randn(4, 2, LATENT_DIM, generator=g) * (1.0 / LATENT_DIM**0.5)
        self._conv = torch.randn(8, 8, 3, 3, generator=g) * (1.0 / 72.0**0.5)
        # Mean latent chosen so the mean face carries a mid-sized hair band
        # and centered geometry: least-norm solution of A w = p_target.
        # Quantized so the constant is identical across BLAS thread counts.
        a = self._p_struct.mean(dim=0).to(torch.float64)
        p_target = torch.zeros(self.N_STRUCT, dtype=torch.float64)
        p_target[0] = 0.4
        mean = torch.linalg.lstsq(a, p_target.unsqueeze(1)).solution.squeeze(1)
        self._mean = ((mean * 1e6).round() / 1e6).to(dtype)
        self._p_struct = self._p_struct.to(dtype)
        self._p_color = self._p_color.to(dtype)
        self._p_tone = self._p_tone.to(dtype)
        self._conv = self._conv.to(dtype)
        self._color_gains = self._color_gains.to(dtype)
        self._base_logits = tw.base_logits(dtype=dtype)
        self._spreads = tw.spreads(dtype=dtype)
        self._stages = [
            GeneratorStage(STYLE, (tw.STYLE_SIZE, tw.STYLE_SIZE, 16)),
            GeneratorStage(COLOR, (tw.COLOR_SIZE, tw.COLOR_SIZE, 8)),
            GeneratorStage(OUTPUT, (tw.OUTPUT_SIZE, tw.OUTPUT_SIZE, 3)),
        ]

    @property
    def mean_latent(self) -> LatentW:
        return LatentW(self._mean.clone())

    def stages(self) -> list[GeneratorStage]:
        return list(self._stages)

    def sample_random_latent(self, seed: int) -> LatentW:
        g = torch.Generator().manual_seed(seed)
        return LatentW(torch.randn(LATENT_DIM, generator=g).to(self.dtype))

    def structure_params(self, w_head: torch.Tensor) -> torch.Tensor:
        """Structure parameter vector from layers 1-7, shape (N_STRUCT,)."""
        return torch.einsum("lkd,ld->k", self._p_struct, w_head.to(self.dtype)) / 7.0

    def balding_direction(self) -> torch.Tensor:
        """Least-norm latent direction that moves only the hair-extent parameter.

        Quantized for cross-environment reproducibility, like the mean latent.
        """
        a = self._p_struct.mean(dim=0).to(torch.float64)
        e0 = torch.zeros(self.N_STRUCT, dtype=torch.float64)
        e0[0] = 1.0
        d = torch.linalg.lstsq(a, e0.unsqueeze(1)).solution.squeeze(1)
        return ((d * 1e6).round() / 1e6).to(self.dtype)

    def _geometry(self, p: torch.Tensor) -> dict:
        return {
            "hair_extent": tw.HAIR_MAX_EXTENT * torch.sigmoid(p[0]),
            "cy": tw.FACE_CENTER[0] + 2.0 * torch.tanh(p[2]),
            "cx": tw.FACE_CENTER[1] + 3.0 * torch.tanh(p[1]),
            "semi_x": tw.FACE_SEMI_X * (1.0 + 0.15 * torch.tanh(p[3])),
            "semi_y": tw.FACE_SEMI_Y * (1.0 + 0.15 * torch.tanh(p[4])),
            "phase": p[5],
        }

    def _style(self, w: LatentWPlus) -> torch.Tensor:
        p = self.structure_params(w.layer_range(1, 7))
        geo = self._geometry(p)
        y, x = tw.grid(tw.STYLE_SIZE, dtype=self.dtype)
        hair, face, ear = tw.occupancy_fields(
            y, x, geo["hair_extent"], geo["cy"], geo["cx"], geo["semi_x"], geo["semi_y"]
        )
        bg = (1.0 - hair) * (1.0 - face) * (1.0 - ear)
        tex1 = 0.5 + 0.5 * torch.sin(0.35 * y + 2.0 * geo["phase"])
        tex2 = 0.5 + 0.5 * torch.sin(0.30 * x - 1.3 * geo["phase"])
        base = torch.stack(
            [hair, face, ear, bg, tex1, tex2, y / tw.OUTPUT_SIZE, x / tw.OUTPUT_SIZE], dim=-1
        )
        nchw = base.permute(2, 0, 1).unsqueeze(0)
        extra = torch.tanh(F.conv2d(nchw, self._conv, padding=1))
        return torch.cat([base, extra.squeeze(0).permute(1, 2, 0)], dim=-1)

    def _class_logits(self, w_tail_8_14: torch.Tensor) -> torch.Tensor:
        per_layer = torch.einsum("lkcd,ld->lkc", self._p_color, w_tail_8_14.to(self.dtype))
        v = (self._color_gains.unsqueeze(-1) * per_layer).sum(dim=0) / 7.0
        # The /10 keeps usable gradient even for latents that free-form
        # inversion has pushed far from the prior.
        return self._base_logits + self._spreads.unsqueeze(1) * torch.tanh(v / 10.0)

    def _color(self, f7: torch.Tensor, w_tail_8_14: torch.Tensor) -> torch.Tensor:
        if w_tail_8_14.shape != (7, LATENT_DIM):
            raise ShapeMismatchError("style->color tail must hold layers 8-14")
        up = f7.permute(2, 0, 1).unsqueeze(0)
        up = F.interpolate(up, scale_factor=4, mode="nearest").squeeze(0).permute(1, 2, 0)
        a_hair, a_face, a_ear, a_bg = tw.paint_weights(up[..., 0], up[..., 1], up[..., 2])
        logits = self._class_logits(w_tail_8_14)
        weights = torch.stack([a_hair, a_face, a_ear, a_bg], dim=-1)
        painted = torch.einsum("hwk,kc->hwc", weights, logits)
        tex = (up[..., 4] - 0.5) * tw.TEXTURE_LOGIT_AMPLITUDE * a_hair
        return torch.cat(
            [painted, torch.stack([a_hair, a_face, a_ear, a_bg], dim=-1), tex.unsqueeze(-1)],
            dim=-1,
        )

    def _output(self, fc: torch.Tensor, w_tail_15_18: torch.Tensor) -> torch.Tensor:
        if w_tail_15_18.shape != (4, LATENT_DIM):
            raise ShapeMismatchError("color->output tail must hold layers 15-18")
        up = fc.permute(2, 0, 1).unsqueeze(0)
        up = F.interpolate(up, scale_factor=2, mode="nearest").squeeze(0).permute(1, 2, 0)
        logits = up[..., 0:3] + up[..., 7:8]
        tail = w_tail_15_18.to(self.dtype)
        for layer in range(4):
            scale = 1.0 + tw.TONE_SCALE * torch.tanh(self._p_tone[layer, 0] @ tail[layer])
            offset = tw.TONE_OFFSET * torch.tanh(self._p_tone[layer, 1] @ tail[layer])
            logits = logits * scale + offset
        return torch.sigmoid(logits)

    def synth_to_stage(self, w: LatentWPlus, stage) -> FeatureMap:
        name = _stage_name(stage)
        if name not in _STAGE_ORDER:
            raise ValidationError(f"unknown generator stage {name!r}")
        f7 = self._style(w)
        if name == STYLE:
            return FeatureMap(STYLE, f7)
        fc = self._color(f7, w.layer_range(8, 14))
        if name == COLOR:
            return FeatureMap(COLOR, fc)
        return FeatureMap(OUTPUT, self._output(fc, w.layer_range(15, 18)))

    def synth_from_stage(self, f: FeatureMap, w_tail: torch.Tensor, from_stage, to_stage):
        src, dst = _stage_name(from_stage), _stage_name(to_stage)
        if src not in _STAGE_ORDER or dst not in _STAGE_ORDER:
            raise ValidationError(f"unknown stage in {src!r} -> {dst!r}")
        if _STAGE_ORDER[src] >= _STAGE_ORDER[dst]:
            raise ValidationError(f"stage order must be ascending, got {src!r} -> {dst!r}")
        if f.stage != src or f.shape != self.stage(src).feature_shape:
            raise ShapeMismatchError(
                f"feature {f.stage}{f.shape} does not match stage {src!r} "
                f"{self.stage(src).feature_shape}"
            )
        lo, hi = TAIL_RANGES[(src, dst)]
        w_tail = torch.as_tensor(w_tail, dtype=self.dtype)
        if w_tail.shape != (hi - lo + 1, LATENT_DIM):
            raise ShapeMismatchError(
                f"tail for {src}->{dst} must hold layers {lo}-{hi}, got {tuple(w_tail.shape)}"
            )
        data = f.data
        if src == STYLE:
            data = self._color(data, w_tail[: 14 - 8 + 1])
            if dst == COLOR:
                return FeatureMap(COLOR, data)
            data = self._output(data, w_tail[14 - 8 + 1 :])
        else:
            data = self._output(data, w_tail)
        return Image(data)


class PretrainedAdapter(GeneratorBackend):
    """Contract for real pretrained weights: delegate to a plugin factory.

    The plugin is a dotted path "module:factory"; the factory receives the
    weights path and must return a GeneratorBackend taping the style stage at
    (32, 32, 512) and the color stage at (256, 256, 128).
    """

    FULL_SCALE_STAGES = [
        GeneratorStage(STYLE, (32, 32, 512)),
        GeneratorStage(COLOR, (256, 256, 128)),
        GeneratorStage(OUTPUT, (1024, 1024, 3)),
    ]

    def __init__(self, weights_path: str, plugin: str):
        if ":" not in plugin:
            raise ValidationError("pretrained plugin must be 'module:factory'")
        mod_name, attr = plugin.split(":", 1)
        factory = getattr(importlib.import_module(mod_name), attr)
        self._inner = factory(weights_path)

    @property
    def mean_latent(self) -> LatentW:
        return self._inner.mean_latent

    def stages(self) -> list[GeneratorStage]:
        return self._inner.stages()

    def sample_random_latent(self, seed: int) -> LatentW:
        return self._inner.sample_random_latent(seed)

    def synth_to_stage(self, w: LatentWPlus, stage) -> FeatureMap:
        return self._inner.synth_to_stage(w, stage)

    def synth_from_stage(self, f: FeatureMap, w_tail, from_stage, to_stage):
        return self._inner.synth_from_stage(f, w_tail, from_stage, to_stage)
