"""Edit orchestration: bald proxy, hairstyle blending at the style stage,
color blending at the color stage, and the final image.

The style path composes Eq.-style masked blends whose out-of-mask cells pass
through bitwise; the color path optimizes a small latent slice, blends the two
color-stage branches under the color mask, then jointly refines the blended
features and the output tail.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Union

import torch
import torch.nn.functional as F

from .backends import BackendBundle
from .core import (
    BinaryMask,
    FeatureMap,
    Image,
    LatentWPlus,
    blend_features,
    dilate_mask,
    downsample_mask,
    image_tensor,
    mask_intersection_nonhair,
)
from .errors import ShapeMismatchError, StageError, ValidationError
from .generator import COLOR, GeneratorBackend, OUTPUT, STYLE
from .inversion import InversionConfig, embed_fs_traced, invert_wplus_traced
from .losses import AugmentationSet, LossWeights, avg_color_loss, bg_loss, blend_loss, clip_loss
from .optim import OptimizationTrace, minimize
from .proxies import (
    BaldingMapper,
    Proxy,
    SketchInverter,
    make_bald_proxy,
    make_reference_proxy,
    make_sketch_proxy,
    make_text_proxy,
)
from .sketch import SketchInput

log = logging.getLogger(__name__)

ProgressFn = Optional[Callable[[str, int, float], None]]


@dataclass(frozen=True)
class TextSpec:
    text: str


@dataclass(frozen=True)
class ReferenceSpec:
    image: Image


@dataclass(frozen=True)
class RgbSpec:
    rgb: tuple

    def __post_init__(self):
        rgb = tuple(float(v) for v in self.rgb)
        if len(rgb) != 3 or any(not 0.0 <= v <= 1.0 for v in rgb):
            raise ValidationError("rgb color must be three values in [0, 1]")
        object.__setattr__(self, "rgb", rgb)


HairstyleCondition = Union[TextSpec, ReferenceSpec]
ColorCondition = Union[TextSpec, ReferenceSpec, RgbSpec]


@dataclass(frozen=True)
class EditRequest:
    hairstyle: Optional[HairstyleCondition] = None
    sketch: Optional[SketchInput] = None
    sketch_only: bool = False
    shape_mask: Optional[BinaryMask] = None
    color: Optional[ColorCondition] = None
    color_mask: Optional[BinaryMask] = None

    def __post_init__(self):
        has_sketch_edit = self.sketch is not None and self.sketch_only
        if self.hairstyle is None and self.color is None and not has_sketch_edit:
            raise ValidationError("edit request needs a hairstyle or color condition")
        if self.sketch is not None and self.hairstyle is None and not self.sketch_only:
            raise ValidationError("a sketch needs a hairstyle condition or the standalone flag")
        if isinstance(self.color, RgbSpec) is False and self.color is not None:
            if not isinstance(self.color, (TextSpec, ReferenceSpec)):
                raise ValidationError(f"unsupported color condition {type(self.color).__name__}")
        if self.hairstyle is not None and not isinstance(self.hairstyle, (TextSpec, ReferenceSpec)):
            raise ValidationError(f"unsupported hairstyle condition {type(self.hairstyle).__name__}")

    @property
    def wants_style_path(self) -> bool:
        return self.hairstyle is not None or self.sketch is not None


@dataclass(frozen=True)
class OptimizationBudgets:
    text_steps: int = 200
    ref_steps: int = 200
    color_steps: int = 300
    blend_steps: int = 100
    learning_rate: float = 0.01


@dataclass
class EngineContext:
    gen: GeneratorBackend
    backends: BackendBundle
    mapper: BaldingMapper
    weights: LossWeights = field(default_factory=LossWeights)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    budgets: OptimizationBudgets = field(default_factory=OptimizationBudgets)
    sketch_inverter: Optional[SketchInverter] = None
    seed: int = 0


def toy_context(seed: int = 0, gen_seed: int = 7, **overrides) -> EngineContext:
    from .backends import toy_bundle
    from .generator import ToyGenerator
    from .proxies import ToyBaldingMapper

    gen = ToyGenerator(seed=gen_seed)
    return EngineContext(
        gen=gen,
        backends=toy_bundle(),
        mapper=ToyBaldingMapper(gen),
        seed=seed,
        **overrides,
    )


@dataclass
class StageReport:
    name: str
    seconds: float = 0.0
    scalars: dict = field(default_factory=dict)
    losses: List[float] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    masks: dict = field(default_factory=dict)


@dataclass
class EditReport:
    stages: List[StageReport] = field(default_factory=list)
    seed: int = 0

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self, include_timings: bool = True) -> dict:
        return {
            "seed": self.seed,
            "stages": [
                {
                    "name": s.name,
                    **({"seconds": s.seconds} if include_timings else {}),
                    "scalars": s.scalars,
                    "losses": s.losses,
                    "flags": s.flags,
                    "masks": s.masks,
                }
                for s in self.stages
            ],
        }


def _mask_descriptor(m: BinaryMask) -> dict:
    return {"height": m.height, "width": m.width, "ones": m.count()}


def blend_global_style(f_proxy: FeatureMap, f_bald: FeatureMap, m_global: BinaryMask) -> FeatureMap:
    """Global hairstyle blend: proxy features inside the hair region, bald
    (irrelevant-attribute) features outside."""
    return blend_features(f_proxy, f_bald, m_global)


def blend_local_sketch(f_sketch: FeatureMap, f_global: FeatureMap, m_local: BinaryMask) -> FeatureMap:
    """Local sketch blend on top of the globally blended features."""
    return blend_features(f_sketch, f_global, m_local)


def synth_style_only(f_style: FeatureMap, w_src: LatentWPlus, gen: GeneratorBackend) -> Image:
    """Final image when no color edit is requested."""
    return gen.synth_from_stage(f_style, w_src.layer_range(8, 18), STYLE, OUTPUT)


@dataclass
class ColorProxyState:
    """Color-proxy latents and blended color-stage features.

    w_color_tail holds layers 8-18; only layers 10-13 are ever optimized here.
    The output tail used by finalize_color starts from the source layers and
    is stored separately once optimized.
    """

    base_feature: FeatureMap
    w_src_tail: torch.Tensor
    w_color_tail: torch.Tensor
    f_blend: Optional[FeatureMap] = None
    final_tail: Optional[torch.Tensor] = None
    modal_trace: Optional[OptimizationTrace] = None
    blend_trace: Optional[OptimizationTrace] = None

    OPTIMIZABLE = (10, 13)
    TAIL = (15, 18)


def _upsample_mask_to(m: BinaryMask, h: int, w: int, dtype) -> torch.Tensor:
    t = m.data.to(dtype).unsqueeze(0).unsqueeze(0)
    return F.interpolate(t, size=(h, w), mode="nearest").squeeze(0).squeeze(0)


def optimize_color_proxy(
    f_style: FeatureMap,
    w_src: LatentWPlus,
    condition: ColorCondition,
    gen: GeneratorBackend,
    backends: BackendBundle,
    opt: OptimizationBudgets,
    seed: int = 0,
    progress=None,
) -> ColorProxyState:
    """Optimize latent layers 10-13 so the recolored rendering satisfies the
    color condition while non-hair regions stay close to the style rendering."""
    w_src_tail = w_src.layer_range(8, 18).detach().clone()
    i_style = gen.synth_from_stage(f_style, w_src_tail, STYLE, OUTPUT)
    style_t = image_tensor(i_style).detach()
    # Guard band: hair boundaries carry blended pixels that the parser labels
    # non-hair but that still move with the hair color; without the dilation
    # the background term pins them and freezes the recoloring partway.
    guard = max(1, gen.output_size // gen.stage(STYLE).feature_shape[0])
    m_style_hair = dilate_mask(backends.parsing.hair_mask(style_t), guard)

    if isinstance(condition, ReferenceSpec):
        ref_hair = backends.parsing.hair_mask(condition.image)
        if ref_hair.count() == 0:
            raise ValidationError("reference color image has no detectable hair region")
        ref_t = image_tensor(condition.image)
        target_rgb = (ref_t * ref_hair.data.unsqueeze(-1)).sum(dim=(0, 1)) / ref_hair.data.sum()
    elif isinstance(condition, RgbSpec):
        target_rgb = torch.tensor(condition.rgb)
    elif isinstance(condition, TextSpec):
        target_rgb = None
    else:
        raise ValidationError(f"unsupported color condition {type(condition).__name__}")

    leaf = w_src.layer_range(10, 13).detach().clone().requires_grad_()

    def color_tail() -> torch.Tensor:
        return torch.cat([w_src_tail[0:2], leaf, w_src_tail[6:7]], dim=0)

    def loss(step):
        tail = torch.cat([color_tail(), w_src_tail[7:11]], dim=0)
        i_color = gen.synth_from_stage(f_style, tail, STYLE, OUTPUT).data
        hair = backends.parsing.hair_mask(i_color.detach())
        nonhair = mask_intersection_nonhair(m_style_hair, dilate_mask(hair, guard))
        if target_rgb is None:
            augs = AugmentationSet(count=4, seed=seed * 911 + step)
            modal = clip_loss(i_color, condition.text, augs, backends.similarity)
        else:
            modal = avg_color_loss(i_color, hair, target_rgb)
        return modal + bg_loss(style_t, i_color, nonhair)

    trace = minimize([leaf], loss, opt.color_steps, opt.learning_rate, progress, label="color_proxy")
    w_color_tail = torch.cat(
        [w_src_tail[0:2], leaf.detach().clone(), w_src_tail[6:11]], dim=0
    )
    return ColorProxyState(
        base_feature=f_style,
        w_src_tail=w_src_tail,
        w_color_tail=w_color_tail,
        modal_trace=trace,
    )


def blend_color_features(
    state: ColorProxyState,
    f_style: FeatureMap,
    w_src: LatentWPlus,
    m_color: BinaryMask,
    gen: GeneratorBackend,
) -> ColorProxyState:
    """Blend the recolored and source color-stage branches under the color mask."""
    color_shape = gen.stage(COLOR).feature_shape
    if (m_color.height, m_color.width) != color_shape[:2]:
        raise ShapeMismatchError(
            f"color mask {m_color.shape} != color-stage resolution {color_shape[:2]}"
        )
    branch_color = gen.synth_from_stage(f_style, state.w_color_tail[0:7], STYLE, COLOR)
    branch_src = gen.synth_from_stage(f_style, w_src.layer_range(8, 14), STYLE, COLOR)
    blended = blend_features(branch_color, branch_src, m_color)
    return replace(state, base_feature=f_style, f_blend=blended)


def finalize_color(
    state: ColorProxyState,
    i_style: Image,
    i_color: Image,
    m_color: BinaryMask,
    gen: GeneratorBackend,
    backends: BackendBundle,
    opt: OptimizationBudgets,
    progress=None,
) -> tuple[Image, ColorProxyState]:
    """Jointly refine the blended color features and the output tail so the
    final image tracks the recolored rendering inside the mask and the style
    rendering outside it."""
    if state.f_blend is None:
        raise ValidationError("finalize_color needs blend_color_features to have run")
    style_t = image_tensor(i_style).detach()
    color_t = image_tensor(i_color).detach()
    h, w = style_t.shape[0], style_t.shape[1]
    m_img = _upsample_mask_to(m_color, h, w, style_t.dtype)

    leaf_f = state.f_blend.data.detach().clone().requires_grad_()
    leaf_tail = state.w_src_tail[7:11].detach().clone().requires_grad_()

    def loss(_step):
        img = gen.synth_from_stage(FeatureMap(COLOR, leaf_f), leaf_tail, COLOR, OUTPUT).data
        return blend_loss(img, color_t, style_t, m_img, backends.patch)

    trace = minimize(
        [leaf_f, leaf_tail], loss, opt.blend_steps, opt.learning_rate, progress, label="finalize_color"
    )
    final_state = replace(
        state,
        f_blend=FeatureMap(COLOR, leaf_f.detach().clone()),
        final_tail=leaf_tail.detach().clone(),
        blend_trace=trace,
    )
    img = gen.synth_from_stage(final_state.f_blend, final_state.final_tail, COLOR, OUTPUT)
    return img, final_state


def _wire_progress(progress: ProgressFn, stage: str):
    if progress is None:
        return None
    return lambda step, loss: progress(stage, step, loss)


@dataclass
class PrecomputedSource:
    """Cached per-image work shared by repeated edits in a session."""

    w_src: LatentWPlus
    f_src: FeatureMap
    f_bald: FeatureMap
    m_bald: BinaryMask


def precompute_source(i_src: Image, ctx: EngineContext, progress: ProgressFn = None) -> PrecomputedSource:
    gen, backends = ctx.gen, ctx.backends
    style_h, style_w = gen.stage(STYLE).feature_shape[:2]
    w_src, _ = invert_wplus_traced(
        i_src, gen, ctx.inversion, backends.patch, progress=_wire_progress(progress, "invert")
    )
    fs, _ = embed_fs_traced(i_src, w_src, gen, ctx.inversion, backends.patch)
    hair = backends.parsing.hair_mask(i_src)
    ear = backends.parsing.ear_mask(i_src)
    union = BinaryMask(torch.clamp(hair.data + ear.data, max=1.0))
    m_bald = downsample_mask(union, style_h, style_w)
    bald = make_bald_proxy(w_src, fs.f7, m_bald, ctx.mapper, gen)
    return PrecomputedSource(w_src=w_src, f_src=fs.f7, f_bald=bald.f_style, m_bald=m_bald)


def run_edit(
    i_src: Image,
    req: EditRequest,
    ctx: EngineContext,
    progress: ProgressFn = None,
    precomputed: Optional[PrecomputedSource] = None,
) -> tuple[Image, EditReport]:
    """Execute a full edit: inversion, bald proxy, optional hairstyle and
    sketch blending, optional color path."""
    report = EditReport(seed=ctx.seed)
    gen, backends = ctx.gen, ctx.backends
    style_h, style_w = gen.stage(STYLE).feature_shape[:2]
    color_h, color_w = gen.stage(COLOR).feature_shape[:2]

    def run_stage(name: str, fn):
        stage = StageReport(name=name)
        t0 = time.perf_counter()
        try:
            result = fn(stage)
        except (ValidationError, ShapeMismatchError) as exc:
            # The report so far is the best partial artifact a client can show.
            raise StageError(name, str(exc), partial=report) from exc
        stage.seconds = time.perf_counter() - t0
        report.stages.append(stage)
        return result

    def invert_stage(stage):
        if precomputed is not None:
            stage.flags.append("cached")
            return precomputed.w_src, precomputed.f_src
        w_src, trace = invert_wplus_traced(i_src, gen, ctx.inversion, backends.patch,
                                           progress=_wire_progress(progress, "invert"))
        stage.losses = trace.losses
        stage.scalars["reconstruction_loss"] = trace.best_loss
        if not trace.converged:
            stage.flags.append("non_convergent")
        fs, fs_trace = embed_fs_traced(i_src, w_src, gen, ctx.inversion, backends.patch)
        stage.scalars["fs_reconstruction_loss"] = (
            fs_trace.best_loss if fs_trace.losses else trace.best_loss
        )
        return w_src, fs.f7

    w_src, f_src = run_stage("invert", invert_stage)

    def bald_stage(stage):
        if precomputed is not None:
            stage.flags.append("cached")
            stage.masks["m_bald"] = _mask_descriptor(precomputed.m_bald)
            return Proxy(kind="bald", region=precomputed.m_bald, f_style=precomputed.f_bald)
        hair = backends.parsing.hair_mask(i_src)
        ear = backends.parsing.ear_mask(i_src)
        union = BinaryMask(torch.clamp(hair.data + ear.data, max=1.0))
        m_bald = downsample_mask(union, style_h, style_w)
        proxy = make_bald_proxy(w_src, f_src, m_bald, ctx.mapper, gen)
        stage.masks["m_bald"] = _mask_descriptor(m_bald)
        return proxy

    bald = run_stage("bald", bald_stage)

    f_style = None
    if req.wants_style_path:
        base = bald.f_style

        if req.hairstyle is not None:

            def hairstyle_stage(stage):
                if isinstance(req.hairstyle, TextSpec):
                    proxy = make_text_proxy(
                        req.hairstyle.text, i_src, gen, backends, ctx.weights,
                        InversionConfig(
                            learning_rate=ctx.budgets.learning_rate,
                            steps=ctx.budgets.text_steps,
                            seed=ctx.seed,
                        ),
                        target_mask=req.shape_mask,
                        seed=ctx.seed,
                        progress=_wire_progress(progress, "hairstyle"),
                    )
                else:
                    proxy = make_reference_proxy(
                        req.hairstyle.image, i_src, gen, backends, ctx.weights,
                        InversionConfig(
                            learning_rate=ctx.budgets.learning_rate,
                            steps=ctx.budgets.ref_steps,
                            seed=ctx.seed,
                        ),
                        target_mask=req.shape_mask,
                        progress=_wire_progress(progress, "hairstyle"),
                    )
                if proxy.trace is not None:
                    stage.losses = proxy.trace.losses
                    stage.scalars["proxy_loss"] = proxy.trace.best_loss
                    if not proxy.trace.converged:
                        stage.flags.append("non_convergent")
                stage.masks["m_global"] = _mask_descriptor(proxy.region)
                return proxy

            proxy = run_stage("hairstyle", hairstyle_stage)
            base = blend_global_style(proxy.f_style, bald.f_style, proxy.region)
        else:
            # Standalone sketch edits keep the source hair outside the strokes.
            base = f_src

        if req.sketch is not None:

            def sketch_stage(stage):
                if ctx.sketch_inverter is None:
                    raise ValidationError("no sketch inverter available in this context")
                sk = make_sketch_proxy(req.sketch, ctx.sketch_inverter, gen)
                stage.masks["m_local"] = _mask_descriptor(sk.region)
                return sk

            sk = run_stage("sketch", sketch_stage)
            base = blend_local_sketch(sk.f_style, base, sk.region)

        f_style = base

    if req.color is None:
        def render_stage(stage):
            return synth_style_only(f_style, w_src, gen)

        image = run_stage("render", render_stage)
        return image, report

    base_f = f_style if f_style is not None else f_src
    i_style = synth_style_only(base_f, w_src, gen)

    def color_stage(stage):
        state = optimize_color_proxy(
            base_f, w_src, req.color, gen, backends, ctx.budgets, seed=ctx.seed,
            progress=_wire_progress(progress, "color"),
        )
        if state.modal_trace is not None:
            stage.losses = state.modal_trace.losses
            stage.scalars["color_loss"] = state.modal_trace.best_loss
            if not state.modal_trace.converged:
                stage.flags.append("non_convergent")
        if req.color_mask is not None:
            m_color = downsample_mask(req.color_mask, color_h, color_w)
        else:
            m_color = downsample_mask(backends.parsing.hair_mask(i_style), color_h, color_w)
        stage.masks["m_color"] = _mask_descriptor(m_color)
        state = blend_color_features(state, base_f, w_src, m_color, gen)
        return state, m_color

    state, m_color = run_stage("color", color_stage)

    def finalize_stage(stage):
        i_color = gen.synth_from_stage(base_f, state.w_color_tail, STYLE, OUTPUT)
        image, final_state = finalize_color(
            state, i_style, i_color, m_color, gen, backends, ctx.budgets,
            progress=_wire_progress(progress, "finalize"),
        )
        if final_state.blend_trace is not None:
            stage.losses = final_state.blend_trace.losses
            stage.scalars["blend_loss"] = final_state.blend_trace.best_loss
            if not final_state.blend_trace.converged:
                stage.flags.append("non_convergent")
        return image

    image = run_stage("finalize", finalize_stage)
    return image, report
