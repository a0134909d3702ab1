from pathlib import Path

import pytest
import torch

from hairblend import toy_context
from hairblend.core import LatentWPlus
from hairblend.inversion import InversionConfig
from hairblend.pipeline import OptimizationBudgets
from hairblend.proxies import SketchTrainConfig, train_sketch_inverter
from hairblend.sketch import make_sketch_dataset

FIXTURES = Path(__file__).parent / "fixtures"

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def ctx():
    """Toy engine context with reduced budgets for unit tests."""
    return toy_context(
        seed=1,
        inversion=InversionConfig(steps=60, fs_steps=30),
        budgets=OptimizationBudgets(text_steps=60, ref_steps=60, color_steps=120, blend_steps=60),
    )


@pytest.fixture(scope="session")
def gen(ctx):
    return ctx.gen


@pytest.fixture(scope="session")
def backends(ctx):
    return ctx.backends


@pytest.fixture(scope="session")
def src_image(gen):
    return gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(5)))


@pytest.fixture(scope="session")
def ref_image(gen):
    return gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(33)))


@pytest.fixture(scope="session")
def sketch_dataset(ctx):
    return make_sketch_dataset(ctx.gen, ctx.backends.parsing, 50, seed=3)


@pytest.fixture(scope="session")
def sketch_inverter(ctx, sketch_dataset):
    """Short reference training run; matches tests/make_fixtures.py."""
    return train_sketch_inverter(
        sketch_dataset, ctx.gen, ctx.backends, ctx.weights, SketchTrainConfig(steps=300, seed=0)
    )
