import json
import math

import numpy as np
import pytest
import torch

from hairblend.core import BinaryMask, Image, LatentWPlus
from hairblend.errors import ValidationError
from hairblend.metrics import (
    EvalResult,
    aggregate,
    identity_similarity,
    masked_psnr,
    masked_ssim,
    run_benchmark,
    ssim_map,
)


def rand_image(seed, size=32):
    g = torch.Generator().manual_seed(seed)
    return Image(torch.rand(size, size, 3, generator=g))


def full_mask(size=32):
    return BinaryMask(torch.ones(size, size))


class TestMaskedPsnr:
    def test_identical_capped_at_100(self):
        img = rand_image(0)
        assert masked_psnr(img, img, full_mask()) == 100.0

    def test_uniform_difference_20db(self):
        a = Image(torch.full((16, 16, 3), 0.5))
        b = Image(torch.full((16, 16, 3), 0.6))
        assert masked_psnr(a, b, full_mask(16)) == pytest.approx(20.0, abs=0.01)

    def test_scalar_loop_oracle(self):
        a, b = rand_image(1, 8), rand_image(2, 8)
        g = torch.Generator().manual_seed(3)
        m = BinaryMask((torch.rand(8, 8, generator=g) < 0.6).float())
        got = masked_psnr(a, b, m)
        total, count = 0.0, 0
        for r in range(8):
            for c in range(8):
                if m.data[r, c] == 1.0:
                    for ch in range(3):
                        total += (float(a.data[r, c, ch]) - float(b.data[r, c, ch])) ** 2
                    count += 3
        expected = 10.0 * math.log10(1.0 / (total / count))
        assert got == pytest.approx(expected, abs=0.01)

    def test_empty_mask_rejected(self):
        img = rand_image(0)
        with pytest.raises(ValidationError):
            masked_psnr(img, img, BinaryMask(torch.zeros(32, 32)))

    def test_monotone_in_noise(self):
        base = Image(torch.full((16, 16, 3), 0.5))
        values = []
        for amp in (0.02, 0.05, 0.1, 0.2):
            noisy = Image((base.data + amp).clamp(0, 1))
            values.append(masked_psnr(base, noisy, full_mask(16)))
        assert values == sorted(values, reverse=True)


class TestMaskedSsim:
    def test_identical_is_one(self):
        img = rand_image(4)
        assert masked_ssim(img, img, full_mask()) == pytest.approx(1.0, abs=1e-6)

    def test_constant_images_closed_form(self):
        c1, c2 = 0.3, 0.7
        a = Image(torch.full((24, 24, 3), c1))
        b = Image(torch.full((24, 24, 3), c2))
        got = masked_ssim(a, b, full_mask(24))
        c1_l, c2_l = c1, c2  # luminance of a constant rgb is the constant
        C1 = 0.01**2
        expected = (2 * c1_l * c2_l + C1) / (c1_l**2 + c2_l**2 + C1)
        assert got == pytest.approx(expected, abs=1e-5)

    def test_windowed_oracle(self):
        a, b = rand_image(5, 16), rand_image(6, 16)
        smap = ssim_map(a, b).numpy()

        def lum(img):
            arr = img.data.numpy()
            return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]

        x, y = lum(a), lum(b)
        half = 5
        coords = np.arange(11) - half
        gk = np.exp(-(coords**2) / (2 * 1.5**2))
        gk = gk / gk.sum()
        window = np.outer(gk, gk)

        def reflect(i, n):
            # matches torch's F.pad reflect convention
            if i < 0:
                return -i
            if i >= n:
                return 2 * n - i - 2
            return i

        C1, C2 = 0.01**2, 0.03**2
        for r, c in [(0, 0), (3, 7), (8, 8), (15, 15)]:
            px = np.zeros((11, 11))
            py = np.zeros((11, 11))
            for i in range(11):
                for j in range(11):
                    px[i, j] = x[reflect(r + i - half, 16), reflect(c + j - half, 16)]
                    py[i, j] = y[reflect(r + i - half, 16), reflect(c + j - half, 16)]
            mx, my = (window * px).sum(), (window * py).sum()
            sx = (window * px * px).sum() - mx * mx
            sy = (window * py * py).sum() - my * my
            sxy = (window * px * py).sum() - mx * my
            expected = ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx**2 + my**2 + C1) * (sx + sy + C2))
            assert smap[r, c] == pytest.approx(expected, abs=1e-5)

    def test_empty_mask_rejected(self):
        img = rand_image(0)
        with pytest.raises(ValidationError):
            masked_ssim(img, img, BinaryMask(torch.zeros(32, 32)))

    def test_masked_average_property(self):
        a, b = rand_image(7), rand_image(8)
        g = torch.Generator().manual_seed(9)
        m = BinaryMask((torch.rand(32, 32, generator=g) < 0.5).float())
        got = masked_ssim(a, b, m)
        smap = ssim_map(a, b)
        expected = float((smap * m.data).sum() / m.data.sum())
        assert got == pytest.approx(expected, abs=1e-7)


class TestIdentitySimilarity:
    def test_identical_is_one(self, backends, src_image):
        assert identity_similarity(src_image, src_image, backends.identity) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_embeddings_zero(self):
        class Scripted:
            def __init__(self):
                self.queue = [torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0])]

            def embed(self, img):
                return self.queue.pop(0)

        a = rand_image(1)
        assert identity_similarity(a, a, Scripted()) == pytest.approx(0.0, abs=1e-7)

    def test_toy_fixture_frozen(self, gen, backends):
        a = gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(5)))
        b = gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(33)))
        value = identity_similarity(a, b, backends.identity)
        assert value == pytest.approx(0.9979866743087769, abs=1e-5)


class TestBenchmark:
    def test_identical_image_dataset(self, ctx, src_image):
        from hairblend.core import mask_intersection_nonhair

        hair = ctx.backends.parsing.hair_mask(src_image)
        nonhair = mask_intersection_nonhair(hair, hair)
        assert identity_similarity(src_image, src_image, ctx.backends.identity) == pytest.approx(1.0, abs=1e-6)
        assert masked_ssim(src_image, src_image, nonhair) == pytest.approx(1.0, abs=1e-6)
        assert masked_psnr(src_image, src_image, nonhair) == 100.0

    def test_run_benchmark_end_to_end(self, ctx, tmp_path, src_image, ref_image):
        from hairblend.serialization import save_image

        save_image(src_image, tmp_path / "a.png")
        save_image(ref_image, tmp_path / "b.png")
        recipe = {"color": {"type": "rgb", "rgb": [0.2, 0.25, 0.2]}}
        (tmp_path / "recipe.json").write_text(json.dumps(recipe))
        spec = {
            "items": [
                {"name": "a", "source": "a.png", "recipe": "recipe.json"},
                {"name": "b", "source": "b.png", "recipe": "recipe.json"},
                {"name": "missing", "source": "nope.png", "recipe": "recipe.json"},
            ]
        }
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        report_path = tmp_path / "report.json"
        results = run_benchmark(tmp_path / "spec.json", ctx, report_path)
        assert len(results) == 2  # unreadable item skipped
        assert report_path.exists() and report_path.with_suffix(".txt").exists()
        payload = json.loads(report_path.read_text())
        assert len(payload["items"]) == 2
        for item in payload["items"]:
            assert 0.0 <= item["ssim"] <= 1.0
            assert item["psnr_db"] > 10.0

    def test_aggregate_is_exact_mean(self):
        results = [
            EvalResult(ids=0.5, psnr_db=20.0, ssim=0.8, runtime_s=1.0),
            EvalResult(ids=1.0, psnr_db=40.0, ssim=1.0, runtime_s=3.0),
        ]
        agg = aggregate(results)
        assert agg["ids"] == 0.75
        assert agg["psnr_db"] == 30.0
        assert agg["ssim"] == pytest.approx(0.9)
        assert agg["runtime_s"] == 2.0
