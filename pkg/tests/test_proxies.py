import pytest
import torch

from hairblend import optim as optim_mod
from hairblend.core import BinaryMask, LatentWPlus, downsample_mask
from hairblend.errors import ShapeMismatchError, ValidationError
from hairblend.generator import STYLE, truncation_init
from hairblend.inversion import InversionConfig, invert_wplus_traced
from hairblend.losses import pose_loss
from hairblend.proxies import (
    ToyBaldingMapper,
    make_bald_proxy,
    make_reference_proxy,
    make_sketch_proxy,
    make_text_proxy,
)
from hairblend.serialization import load_latent, load_mask
from hairblend.sketch import load_sketch

from conftest import FIXTURES


@pytest.fixture(scope="module")
def inverted_src(gen, ctx, src_image):
    w, _ = invert_wplus_traced(src_image, gen, ctx.inversion, ctx.backends.patch)
    from hairblend.inversion import embed_fs_traced

    fs, _ = embed_fs_traced(src_image, w, gen, ctx.inversion, ctx.backends.patch)
    return w, fs.f7


def style_mask(gen, fill):
    h, w = gen.stage(STYLE).feature_shape[:2]
    return BinaryMask(torch.full((h, w), float(fill)))


class TestBaldProxy:
    def test_zero_mask_keeps_source_features(self, gen, ctx, inverted_src):
        w_src, f_src = inverted_src
        proxy = make_bald_proxy(w_src, f_src, style_mask(gen, 0), ctx.mapper, gen)
        assert torch.equal(proxy.f_style.data, f_src.data)

    def test_full_mask_gives_balded_features(self, gen, ctx, inverted_src):
        w_src, f_src = inverted_src
        proxy = make_bald_proxy(w_src, f_src, style_mask(gen, 1), ctx.mapper, gen)
        expected = gen.synth_to_stage(ctx.mapper.apply(w_src), STYLE)
        assert torch.equal(proxy.f_style.data, expected.data)

    def test_outside_mask_bitwise_preserved(self, gen, ctx, inverted_src):
        w_src, f_src = inverted_src
        g = torch.Generator().manual_seed(5)
        h, w = gen.stage(STYLE).feature_shape[:2]
        m = BinaryMask((torch.rand(h, w, generator=g) < 0.4).float())
        proxy = make_bald_proxy(w_src, f_src, m, ctx.mapper, gen)
        outside = m.data == 0
        assert torch.equal(proxy.f_style.data[outside], f_src.data[outside])

    def test_wrong_mask_resolution_rejected(self, gen, ctx, inverted_src):
        w_src, f_src = inverted_src
        with pytest.raises(ShapeMismatchError):
            make_bald_proxy(w_src, f_src, BinaryMask(torch.ones(4, 4)), ctx.mapper, gen)

    def test_mapper_empties_hair_band(self, gen, ctx):
        w = LatentWPlus.broadcast(gen.mean_latent)
        balded = ctx.mapper.apply(w)
        img = gen.synthesize(balded)
        assert ctx.backends.parsing.hair_mask(img).count() == 0

    def test_mapper_only_touches_structure_layers(self, gen, ctx):
        w = LatentWPlus.broadcast(gen.mean_latent)
        balded = ctx.mapper.apply(w)
        assert torch.equal(balded.layer_range(8, 18), w.layer_range(8, 18))
        assert not torch.equal(balded.layer_range(1, 7), w.layer_range(1, 7))


class TestTextProxy:
    def test_loss_decreases_and_region_present(self, gen, ctx, src_image):
        opt = InversionConfig(steps=60, seed=0)
        proxy = make_text_proxy("short dark crop", src_image, gen, ctx.backends, ctx.weights, opt, seed=0)
        assert proxy.trace.best_loss < proxy.trace.losses[0]
        assert proxy.kind == "text"
        assert proxy.region.shape == gen.stage(STYLE).feature_shape[:2]

    def test_f_style_matches_latent_bitwise(self, gen, ctx, src_image):
        opt = InversionConfig(steps=20, seed=1)
        proxy = make_text_proxy("bob", src_image, gen, ctx.backends, ctx.weights, opt, seed=1)
        assert torch.equal(proxy.f_style.data, gen.synth_to_stage(proxy.w, STYLE).data)

    def test_distinct_seeds_distinct_latents(self, gen, ctx, src_image):
        opt = InversionConfig(steps=10, seed=0)
        a = make_text_proxy("bob", src_image, gen, ctx.backends, ctx.weights, opt, seed=0)
        b = make_text_proxy("bob", src_image, gen, ctx.backends, ctx.weights, opt, seed=1)
        assert not torch.equal(a.w.layers, b.w.layers)

    def test_init_point_psi_identity(self, gen):
        mean, rnd = gen.mean_latent, gen.sample_random_latent(4)
        w = truncation_init(mean, rnd, 0.3)
        denom = float((rnd.values - mean.values).norm())
        num = float((w.layers[0] - mean.values).norm())
        assert num == pytest.approx(0.3 * denom, rel=1e-6)

    def test_shape_term_activates_with_mask(self, gen, ctx, src_image):
        opt = InversionConfig(steps=8, seed=0)
        target = BinaryMask(torch.zeros(64, 64))
        with_mask = make_text_proxy(
            "bob", src_image, gen, ctx.backends, ctx.weights, opt, target_mask=target, seed=0
        )
        without = make_text_proxy("bob", src_image, gen, ctx.backends, ctx.weights, opt, seed=0)
        assert with_mask.trace.losses[0] != without.trace.losses[0]


class TestReferenceProxy:
    def test_pose_decreases_toward_source(self, gen, ctx, src_image):
        # Reference chosen with a clearly misaligned face so there is pose
        # error to remove; well-aligned pairs start at the quantization floor.
        ref = gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(12)))
        opt = InversionConfig(steps=60, seed=0)
        proxy = make_reference_proxy(
            ref, src_image, gen, ctx.backends, ctx.weights, opt, invert_cfg=ctx.inversion
        )
        w0, _ = invert_wplus_traced(ref, gen, ctx.inversion, ctx.backends.patch)
        pose_before = float(pose_loss(src_image, gen.synthesize(w0), ctx.backends.keypoints))
        pose_after = float(pose_loss(src_image, gen.synthesize(proxy.w), ctx.backends.keypoints))
        assert pose_after < pose_before

    def test_zero_steps_returns_inversion(self, gen, ctx, src_image):
        opt = InversionConfig(steps=1, seed=0)
        # steps=1 is the smallest valid optimization budget; compare against
        # plain inversion via the no-op reconstruction route instead.
        proxy = make_reference_proxy(
            src_image, src_image, gen, ctx.backends, ctx.weights, opt, invert_cfg=ctx.inversion
        )
        recon = gen.synthesize(proxy.w)
        mse = float(((recon.data - src_image.data) ** 2).mean())
        assert mse < 5e-3  # transfer from self is a near no-op

    def test_step_regularization_shrinks_steps(self, gen, ctx, src_image, ref_image):
        from dataclasses import replace

        opt = InversionConfig(steps=25, seed=0)
        mean_step = {}
        for reg in (1.0, 1000.0):
            weights = replace(ctx.weights, reg=reg)
            proxy = make_reference_proxy(
                ref_image, src_image, gen, ctx.backends, weights, opt, invert_cfg=ctx.inversion
            )
            norms = proxy.trace.step_norms
            mean_step[reg] = sum(norms) / len(norms)
        assert mean_step[1000.0] < mean_step[1.0]

    def test_f_style_matches_latent_bitwise(self, gen, ctx, src_image, ref_image):
        opt = InversionConfig(steps=5, seed=0)
        proxy = make_reference_proxy(
            ref_image, src_image, gen, ctx.backends, ctx.weights, opt, invert_cfg=ctx.inversion
        )
        assert torch.equal(proxy.f_style.data, gen.synth_to_stage(proxy.w, STYLE).data)


class TestSketchProxy:
    def test_same_sketch_identical_proxy(self, gen, sketch_inverter, sketch_dataset):
        sk = sketch_dataset[0][0]
        a = make_sketch_proxy(sk, sketch_inverter, gen)
        b = make_sketch_proxy(sk, sketch_inverter, gen)
        assert torch.equal(a.w.layers, b.w.layers)
        assert torch.equal(a.region.data, b.region.data)

    def test_empty_strokes_rejected(self, gen, sketch_inverter):
        from hairblend.sketch import SketchInput

        empty = SketchInput((), height=64, width=64)
        with pytest.raises(ValidationError):
            make_sketch_proxy(empty, sketch_inverter, gen)

    def test_resolution_mismatch_rejected(self, gen, sketch_inverter):
        from hairblend.sketch import SketchInput, Stroke

        small = SketchInput((Stroke(width=2, points=((1, 1), (10, 1))),), height=32, width=32)
        with pytest.raises(ShapeMismatchError):
            make_sketch_proxy(small, sketch_inverter, gen)

    def test_no_optimizer_instantiated(self, gen, sketch_inverter, sketch_dataset):
        before = optim_mod.optimizer_instantiations()
        make_sketch_proxy(sketch_dataset[1][0], sketch_inverter, gen)
        assert optim_mod.optimizer_instantiations() == before

    def test_frozen_golden_latent(self, gen, sketch_inverter):
        sketch = load_sketch(FIXTURES / "fixture.sketch")
        proxy = make_sketch_proxy(sketch, sketch_inverter, gen)
        golden, _ = load_latent(FIXTURES / "fixture_sketch_latent.wlat")
        assert torch.allclose(proxy.w.layers, golden.layers, atol=1e-5)
        golden_region = load_mask(FIXTURES / "fixture_sketch_region.pgm")
        assert torch.equal(proxy.region.data, golden_region.data)

    def test_region_covers_raster(self, gen, sketch_inverter, sketch_dataset):
        sk = sketch_dataset[2][0]
        proxy = make_sketch_proxy(sk, sketch_inverter, gen)
        h, w = gen.stage(STYLE).feature_shape[:2]
        from hairblend.core import downsample_mask_any

        coarse = downsample_mask_any(sk.raster, h, w)
        assert bool((proxy.region.data >= coarse.data).all())

    def test_training_curve_decreases(self, sketch_inverter):
        curve = sketch_inverter.training_curve
        assert sum(curve[-25:]) / 25 < sum(curve[:25]) / 25

    def test_save_load_round_trip(self, gen, sketch_inverter, sketch_dataset, tmp_path):
        path = tmp_path / "inverter.pt"
        sketch_inverter.save(path)
        from hairblend.proxies import SketchInverter

        loaded = SketchInverter.load(path)
        sk = sketch_dataset[3][0]
        assert torch.equal(loaded.predict(sk).layers, sketch_inverter.predict(sk).layers)


class TestStrokeDropout:
    def test_zero_dropout_keeps_full_sketch(self, sketch_dataset):
        from hairblend.proxies import _dropout_strokes

        g = torch.Generator().manual_seed(0)
        sk = sketch_dataset[0][0]
        assert _dropout_strokes(sk, 0.0, g) is sk

    def test_dropout_keeps_at_least_one_stroke(self, sketch_dataset):
        from hairblend.proxies import _dropout_strokes

        g = torch.Generator().manual_seed(0)
        sk = sketch_dataset[0][0]
        for _ in range(50):
            out = _dropout_strokes(sk, 0.95, g)
            assert len(out.strokes) >= 1
