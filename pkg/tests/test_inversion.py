import pytest
import torch

from hairblend.core import LatentWPlus
from hairblend.errors import ValidationError
from hairblend.generator import OUTPUT, STYLE
from hairblend.inversion import (
    InversionConfig,
    embed_fs_traced,
    invert_wplus_traced,
)


class TestConfig:
    def test_defaults(self):
        cfg = InversionConfig()
        assert cfg.learning_rate == 0.01
        assert cfg.steps == 200
        assert cfg.fs_steps == 100
        assert cfg.optimizer == "adam"

    def test_zero_steps_rejected(self):
        with pytest.raises(ValidationError):
            InversionConfig(steps=0)

    def test_bad_lr_rejected(self):
        with pytest.raises(ValidationError):
            InversionConfig(learning_rate=0.0)

    def test_unknown_optimizer_rejected(self):
        with pytest.raises(ValidationError):
            InversionConfig(optimizer="sgd")


class TestInvertWPlus:
    def test_self_inversion_reconstructs(self, gen, ctx):
        w_true = LatentWPlus.broadcast(gen.sample_random_latent(21))
        img = gen.synthesize(w_true)
        cfg = InversionConfig(steps=150, fs_steps=0)
        w, trace = invert_wplus_traced(img, gen, cfg, ctx.backends.patch)
        recon = gen.synthesize(w)
        mse = float(((recon.data - img.data) ** 2).mean())
        assert mse < 1e-3
        assert trace.converged

    def test_loss_reduced_from_init(self, gen, ctx, src_image):
        cfg = InversionConfig(steps=40, fs_steps=0)
        _, trace = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        assert trace.best_loss < trace.losses[0]

    def test_wrong_resolution_rejected(self, gen, ctx):
        from hairblend.core import Image

        small = Image(torch.rand(32, 32, 3))
        with pytest.raises(ValidationError):
            invert_wplus_traced(small, gen, InversionConfig(steps=5), ctx.backends.patch)

    def test_deterministic(self, gen, ctx, src_image):
        cfg = InversionConfig(steps=25, fs_steps=0, seed=3)
        w1, _ = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        w2, _ = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        assert torch.equal(w1.layers, w2.layers)

    def test_initial_loss_is_mean_latent_loss(self, gen, ctx, src_image):
        from hairblend.inversion import _reconstruction_loss

        cfg = InversionConfig(steps=5, fs_steps=0)
        _, trace = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        mean_img = gen.synthesize(LatentWPlus.broadcast(gen.mean_latent))
        expected = float(_reconstruction_loss(mean_img.data, src_image.data, ctx.backends.patch))
        assert trace.losses[0] == pytest.approx(expected, rel=1e-5)


class TestEmbedFS:
    def test_zero_steps_returns_latent_features(self, gen, ctx, src_image):
        cfg = InversionConfig(steps=20, fs_steps=0)
        w, _ = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        fs, trace = embed_fs_traced(src_image, w, gen, cfg, ctx.backends.patch)
        direct = gen.synth_to_stage(w, STYLE)
        assert torch.equal(fs.f7.data, direct.data)
        assert trace.losses == []

    def test_fs_never_worse_than_wplus(self, gen, ctx, src_image):
        from hairblend.inversion import _reconstruction_loss

        cfg = InversionConfig(steps=40, fs_steps=25)
        w, w_trace = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        fs, fs_trace = embed_fs_traced(src_image, w, gen, cfg, ctx.backends.patch)
        recon = gen.synth_from_stage(fs.f7, w.layer_range(8, 18), STYLE, OUTPUT)
        fs_loss = float(_reconstruction_loss(recon.data, src_image.data, ctx.backends.patch))
        assert fs_loss <= w_trace.best_loss + 1e-7

    def test_s_block_fixed_to_latent_tail(self, gen, ctx, src_image):
        cfg = InversionConfig(steps=20, fs_steps=10)
        w, _ = invert_wplus_traced(src_image, gen, cfg, ctx.backends.patch)
        fs, _ = embed_fs_traced(src_image, w, gen, cfg, ctx.backends.patch)
        assert torch.equal(fs.s, w.layer_range(8, 18))

    def test_monotone_budget_statistically(self, gen, ctx):
        """More steps never hurts in expectation (5 toy sources)."""
        short_cfg = InversionConfig(steps=10, fs_steps=0)
        long_cfg = InversionConfig(steps=60, fs_steps=0)
        short_losses, long_losses = [], []
        for seed in range(5):
            img = gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(40 + seed)))
            _, t_short = invert_wplus_traced(img, gen, short_cfg, ctx.backends.patch)
            _, t_long = invert_wplus_traced(img, gen, long_cfg, ctx.backends.patch)
            short_losses.append(t_short.best_loss)
            long_losses.append(t_long.best_loss)
        assert sum(long_losses) / 5 <= sum(short_losses) / 5
