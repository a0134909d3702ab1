import numpy as np
import pytest
import torch

from hairblend.errors import ValidationError
from hairblend.sketch import (
    SketchInput,
    Stroke,
    load_dataset,
    make_sketch_dataset,
    parse_sketch,
    save_dataset_entry,
    serialize_sketch,
)

from conftest import FIXTURES


def simple_sketch():
    return SketchInput(
        (Stroke(width=3, points=((10, 8), (40, 9), (52, 8))), Stroke(width=2, points=((12, 16), (50, 16)))),
        height=64,
        width=64,
    )


class TestRasterization:
    def test_raster_matches_distance_oracle(self):
        sk = SketchInput((Stroke(width=3, points=((5, 5), (20, 10))),), height=32, width=32)
        arr = sk.raster.data.numpy()
        a = np.array([5.5, 5.5])
        b = np.array([20.5, 10.5])
        d = b - a
        dd = d @ d
        expected = np.zeros((32, 32), dtype=np.float32)
        for r in range(32):
            for c in range(32):
                p = np.array([c + 0.5, r + 0.5])
                t = np.clip(((p - a) @ d) / dd, 0, 1)
                proj = a + t * d
                if ((p - proj) ** 2).sum() <= 1.5**2:
                    expected[r, c] = 1.0
        np.testing.assert_array_equal(arr, expected)

    def test_single_point_stroke_disc(self):
        sk = SketchInput((Stroke(width=4, points=((16, 16),)),), height=32, width=32)
        assert sk.raster.data[16, 16] == 1.0
        assert sk.raster.count() > 4

    def test_zero_width_rejected(self):
        with pytest.raises(ValidationError):
            Stroke(width=0, points=((1, 1),))

    def test_empty_points_rejected(self):
        with pytest.raises(ValidationError):
            Stroke(width=2, points=())


class TestInterchangeFormat:
    def test_round_trip_byte_identical(self):
        sk = simple_sketch()
        doc = serialize_sketch(sk)
        back = parse_sketch(doc)
        assert serialize_sketch(back) == doc
        assert back.strokes == sk.strokes
        assert torch.equal(back.raster.data, sk.raster.data)

    def test_document_shape(self):
        doc = serialize_sketch(simple_sketch())
        lines = doc.split("\n")
        assert lines[0] == "hairblend-sketch v1"
        assert lines[1] == "canvas 64 64"
        assert lines[2].startswith("stroke 3 10,8 40,9 52,8")
        assert doc.endswith("\n")

    def test_fixture_document_parses(self):
        text = (FIXTURES / "fixture.sketch").read_text()
        sk = parse_sketch(text)
        assert serialize_sketch(sk) == text

    def test_garbage_rejected(self):
        with pytest.raises(ValidationError):
            parse_sketch("not a sketch\n")
        with pytest.raises(ValidationError):
            parse_sketch("hairblend-sketch v1\nstroke 3 1,2\n")


class TestDataset:
    def test_procedural_pairs_have_strokes_in_band(self, ctx):
        pairs = make_sketch_dataset(ctx.gen, ctx.backends.parsing, 6, seed=11)
        assert len(pairs) == 6
        for sketch, image in pairs:
            hair = ctx.backends.parsing.hair_mask(image)
            raster = sketch.raster
            overlap = float((raster.data * hair.data).sum() / raster.data.sum())
            assert overlap > 0.5  # strokes trace the hair band

    def test_save_and_load_layout(self, ctx, tmp_path):
        pairs = make_sketch_dataset(ctx.gen, ctx.backends.parsing, 3, seed=2)
        for i, (sk, img) in enumerate(pairs):
            save_dataset_entry(tmp_path, f"pair{i:04d}", sk, img)
        loaded = load_dataset(tmp_path)
        assert len(loaded) == 3
        for (sk0, img0), (sk1, img1) in zip(pairs, loaded):
            assert sk0.strokes == sk1.strokes
            assert float((img0.data - img1.data).abs().max()) <= 1.0 / 255.0

    def test_missing_dir_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            load_dataset(tmp_path / "nope")
