"""Editing-condition proxies: bald, text, reference, and sketch.

Each proxy packages a latent code, its style-stage features, and the region
mask the blending pipeline will use. Text and reference proxies come from
latent optimization; the sketch proxy is a single feed-forward pass through a
trained stroke-to-latent inverter.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch

from .backends import BackendBundle
from .core import (
    LATENT_DIM,
    NUM_LAYERS,
    BinaryMask,
    FeatureMap,
    Image,
    LatentWPlus,
    downsample_mask,
    downsample_mask_any,
    dilate_mask,
    blend_features,
    image_tensor,
)
from .errors import ShapeMismatchError, ValidationError
from .generator import GeneratorBackend, OUTPUT, STYLE, truncation_init
from .inversion import InversionConfig, invert_wplus_traced
from .losses import (
    AugmentationSet,
    LossWeights,
    clip_loss,
    pose_loss,
    reg_loss,
    shape_loss,
    sketch_trainer_loss,
    style_loss,
)
from .optim import OptimizationTrace, minimize, new_adam
from .sketch import SketchInput

log = logging.getLogger(__name__)

TRUNCATION_PSI = 0.3
LOCAL_DILATION_RADIUS = 1
STROKE_DROPOUT_P = 0.3


@dataclass(frozen=True)
class Proxy:
    kind: str
    region: BinaryMask
    w: Optional[LatentWPlus] = None
    f_style: Optional[FeatureMap] = None
    trace: Optional[OptimizationTrace] = None


class BaldingMapper(ABC):
    @abstractmethod
    def apply(self, w: LatentWPlus) -> LatentWPlus: ...


class ToyBaldingMapper(BaldingMapper):
    """Subtracts a fixed hair-extent direction from the structural layers so
    the procedural hair band empties."""

    def __init__(self, gen, strength: float = 10.0):
        self._direction = gen.balding_direction()
        self.strength = strength

    def apply(self, w: LatentWPlus) -> LatentWPlus:
        head = w.layer_range(1, 7) - self.strength * self._direction
        return w.replace_range(1, 7, head)


def make_bald_proxy(
    w_src: LatentWPlus,
    f_src: FeatureMap,
    m_bald: BinaryMask,
    mapper: BaldingMapper,
    gen: GeneratorBackend,
) -> Proxy:
    """Blend the balded features over the hair+ear region of the source.

    Outside the mask the source features pass through bitwise, which is what
    preserves irrelevant attributes for every later blend.
    """
    style_shape = gen.stage(STYLE).feature_shape
    if f_src.shape != style_shape:
        raise ShapeMismatchError(f"source features {f_src.shape} != style stage {style_shape}")
    if (m_bald.height, m_bald.width) != style_shape[:2]:
        raise ShapeMismatchError(f"bald mask {m_bald.shape} != style resolution {style_shape[:2]}")
    w_bald = mapper.apply(w_src)
    f_bald = gen.synth_to_stage(w_bald, STYLE)
    blended = blend_features(f_bald, f_src, m_bald)
    return Proxy(kind="bald", region=m_bald, w=None, f_style=blended)


def _proxy_region(img: Image, gen, backends: BackendBundle) -> BinaryMask:
    """Hair mask of a proxy's rendering, at style-stage resolution."""
    style_h, style_w = gen.stage(STYLE).feature_shape[:2]
    return downsample_mask(backends.parsing.hair_mask(img), style_h, style_w)


def make_text_proxy(
    text: str,
    i_src: Image,
    gen: GeneratorBackend,
    backends: BackendBundle,
    weights: LossWeights,
    opt: InversionConfig,
    target_mask: Optional[BinaryMask] = None,
    seed: int = 0,
    progress=None,
) -> Proxy:
    """Optimize a latent from a truncated random start until its rendering
    matches the text; pose is tethered to the source image."""
    w_init = truncation_init(gen.mean_latent, gen.sample_random_latent(seed), TRUNCATION_PSI)
    leaf = w_init.layers.clone().requires_grad_()
    src_t = image_tensor(i_src)

    def loss(step):
        img = gen.synth_to_stage(LatentWPlus(leaf), OUTPUT).data
        augs = AugmentationSet(count=4, seed=seed * 1_000_003 + step)
        total = weights.clip * clip_loss(img, text, augs, backends.similarity)
        total = total + weights.pose * pose_loss(src_t, img, backends.keypoints)
        if target_mask is not None:
            soft = backends.parsing.soft_hair_mask(img)
            total = total + weights.shape * shape_loss(soft, target_mask)
        return total

    trace = minimize([leaf], loss, opt.steps, opt.learning_rate, progress, label="text_proxy")
    w_text = LatentWPlus(leaf.detach().clone())
    rendered = gen.synthesize(w_text)
    return Proxy(
        kind="text",
        region=_proxy_region(rendered, gen, backends),
        w=w_text,
        f_style=gen.synth_to_stage(w_text, STYLE),
        trace=trace,
    )


def make_reference_proxy(
    i_ref: Image,
    i_src: Image,
    gen: GeneratorBackend,
    backends: BackendBundle,
    weights: LossWeights,
    opt: InversionConfig,
    target_mask: Optional[BinaryMask] = None,
    invert_cfg: Optional[InversionConfig] = None,
    progress=None,
) -> Proxy:
    """Align the inverted reference to the source pose while its hair style
    statistics stay anchored to the reference image."""
    invert_cfg = invert_cfg or InversionConfig(seed=opt.seed)
    w0, _ = invert_wplus_traced(i_ref, gen, invert_cfg, backends.patch)
    m_ref_hair = backends.parsing.hair_mask(i_ref)
    src_t = image_tensor(i_src)
    ref_t = image_tensor(i_ref)

    leaf = w0.layers.clone().requires_grad_()
    prev = w0.layers.clone()
    trace = OptimizationTrace()
    if opt.steps > 0:
        optimizer = new_adam([leaf], opt.learning_rate)
        # Warmup: the start point (the reference's inversion) is already near
        # a pose/style optimum, and Adam's first normalized steps would kick
        # the latent into a worse basin.
        warmup = torch.optim.lr_scheduler.LinearLR(
            optimizer, start_factor=0.05, total_iters=min(15, opt.steps)
        )
        best = leaf.detach().clone()
        for step in range(opt.steps):
            optimizer.zero_grad()
            img = gen.synth_to_stage(LatentWPlus(leaf), OUTPUT).data
            m_gen_hair = backends.parsing.hair_mask(img.detach())
            total = weights.style * style_loss(ref_t, img, m_ref_hair, m_gen_hair, backends.perceptual)
            total = total + weights.pose * pose_loss(src_t, img, backends.keypoints)
            total = total + weights.reg * reg_loss(leaf, prev)
            if target_mask is not None:
                soft = backends.parsing.soft_hair_mask(img)
                total = total + weights.shape * shape_loss(soft, target_mask)
            val = float(total.detach())
            trace.losses.append(val)
            if progress is not None:
                progress(step, val)
            if val < trace.best_loss:
                trace.best_loss, trace.best_step = val, step
                best = leaf.detach().clone()
            total.backward()
            # The next step's regularizer anchors to the pre-update iterate,
            # so the penalty drags on the step the optimizer is about to take.
            prev = leaf.detach().clone()
            optimizer.step()
            warmup.step()
            trace.step_norms.append(float((leaf.detach() - prev).norm()))
        with torch.no_grad():
            leaf.copy_(best)
        trace.converged = trace.best_loss < trace.losses[0] or trace.losses[0] <= 1e-9
        if not trace.converged:
            log.warning("reference proxy: loss not reduced over %d steps", opt.steps)

    w_ref = LatentWPlus(leaf.detach().clone())
    rendered = gen.synthesize(w_ref)
    return Proxy(
        kind="reference",
        region=_proxy_region(rendered, gen, backends),
        w=w_ref,
        f_style=gen.synth_to_stage(w_ref, STYLE),
        trace=trace,
    )


class SketchInverter(torch.nn.Module):
    """Feed-forward raster-to-latent encoder for sketch strokes."""

    def __init__(self, resolution: int, mean_latent: torch.Tensor, seed: int = 0):
        super().__init__()
        self.resolution = resolution
        self.register_buffer("mean_latent", mean_latent.detach().clone())
        self.conv = torch.nn.Sequential(
            torch.nn.Conv2d(1, 8, 3, stride=2, padding=1),
            torch.nn.Tanh(),
            torch.nn.Conv2d(8, 16, 3, stride=2, padding=1),
            torch.nn.Tanh(),
            torch.nn.Conv2d(16, 32, 3, stride=2, padding=1),
            torch.nn.Tanh(),
        )
        flat = 32 * (resolution // 8) ** 2
        self.head = torch.nn.Sequential(
            torch.nn.Linear(flat, 128),
            torch.nn.Tanh(),
            torch.nn.Linear(128, NUM_LAYERS * LATENT_DIM),
        )
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.randn(p.shape, generator=g) * 0.05)
        self.training_curve: List[float] = []

    DELTA_BOUND = 1.5

    def forward(self, raster: torch.Tensor) -> torch.Tensor:
        x = raster.reshape(1, 1, self.resolution, self.resolution)
        h = self.conv(x).flatten()
        delta = self.head(h).reshape(NUM_LAYERS, LATENT_DIM)
        # Soft-bounded delta keeps predictions inside the latent region the
        # generator responds to; unbounded heads drift into saturation.
        bound = self.DELTA_BOUND
        return self.mean_latent + bound * torch.tanh(delta / bound)

    def predict(self, sketch: SketchInput) -> LatentWPlus:
        if (sketch.height, sketch.width) != (self.resolution, self.resolution):
            raise ShapeMismatchError(
                f"sketch canvas {(sketch.height, sketch.width)} != inverter resolution "
                f"{self.resolution}"
            )
        with torch.no_grad():
            return LatentWPlus(self.forward(sketch.raster.data))

    def save(self, path) -> None:
        torch.save(
            {"resolution": self.resolution, "state": self.state_dict(), "curve": self.training_curve},
            path,
        )

    @classmethod
    def load(cls, path) -> "SketchInverter":
        payload = torch.load(path, weights_only=True)
        res = payload["resolution"]
        inv = cls(res, payload["state"]["mean_latent"])
        inv.load_state_dict(payload["state"])
        inv.training_curve = list(payload.get("curve", []))
        return inv


@dataclass(frozen=True)
class SketchTrainConfig:
    steps: int = 2000
    learning_rate: float = 0.001
    stroke_dropout: float = STROKE_DROPOUT_P
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("training budget must be >= 1 step")
        if not 0.0 <= self.stroke_dropout < 1.0:
            raise ValidationError("stroke dropout must lie in [0, 1)")


def _dropout_strokes(sketch: SketchInput, p: float, g: torch.Generator) -> SketchInput:
    if p <= 0.0 or len(sketch.strokes) == 1:
        return sketch
    keep = [s for s in sketch.strokes if float(torch.rand((), generator=g)) >= p]
    if not keep:
        idx = int(torch.randint(len(sketch.strokes), (), generator=g))
        keep = [sketch.strokes[idx]]
    if len(keep) == len(sketch.strokes):
        return sketch
    return sketch.with_strokes(keep)


def train_sketch_inverter(
    dataset: List[Tuple[SketchInput, Image]],
    gen: GeneratorBackend,
    backends: BackendBundle,
    weights: LossWeights,
    cfg: SketchTrainConfig,
    progress=None,
) -> SketchInverter:
    """Train the stroke-to-latent encoder so synthesized portraits match the
    paired targets; strokes are randomly dropped to cover coarse sketches."""
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("sketch training needs a nonempty dataset")
    resolution = dataset[0][0].height
    inverter = SketchInverter(resolution, LatentWPlus.broadcast(gen.mean_latent).layers, cfg.seed)
    # Wide eps damps Adam's sign-normalized steps on samples the net already
    # fits; without it training random-walks into saturated latents.
    optimizer = new_adam(list(inverter.parameters()), cfg.learning_rate, eps=1e-4)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=cfg.steps, eta_min=cfg.learning_rate * 0.05
    )
    g = torch.Generator().manual_seed(cfg.seed)
    for step in range(cfg.steps):
        idx = int(torch.randint(len(dataset), (), generator=g))
        sketch, target = dataset[idx]
        sketch = _dropout_strokes(sketch, cfg.stroke_dropout, g)
        optimizer.zero_grad()
        w = inverter.forward(sketch.raster.data)
        pred = gen.synth_to_stage(LatentWPlus(w), OUTPUT).data
        loss = sketch_trainer_loss(pred, target, backends.parsing, backends.patch, weights)
        loss.backward()
        optimizer.step()
        scheduler.step()
        val = float(loss.detach())
        inverter.training_curve.append(val)
        if progress is not None:
            progress(step, val)
    inverter.eval()
    return inverter


def make_sketch_proxy(sketch: SketchInput, inverter: SketchInverter, gen: GeneratorBackend) -> Proxy:
    """Single feed-forward pass; the region is the dilated, downsampled raster."""
    if not sketch.strokes:
        raise ValidationError("sketch proxy needs at least one stroke")
    if sketch.height != gen.output_size or sketch.width != gen.output_size:
        raise ShapeMismatchError(
            f"sketch canvas {(sketch.height, sketch.width)} != generator output {gen.output_size}"
        )
    w = inverter.predict(sketch)
    style_h, style_w = gen.stage(STYLE).feature_shape[:2]
    # Coverage downsample: strokes are thin, an area-average threshold would
    # erase them before the dilation could act.
    region = dilate_mask(downsample_mask_any(sketch.raster, style_h, style_w), LOCAL_DILATION_RADIUS)
    return Proxy(
        kind="sketch",
        region=region,
        w=w,
        f_style=gen.synth_to_stage(w, STYLE),
    )
