"""Regenerate the frozen golden fixtures under tests/fixtures/.

Run from the repository root:  python3 tests/make_fixtures.py
Each artifact is produced once by the reference toy configuration and then
committed; tests compare against the frozen bytes.
"""

from pathlib import Path

import torch

torch.set_num_threads(1)

from hairblend.backends import toy_bundle
from hairblend.core import BinaryMask, LatentWPlus
from hairblend.generator import ToyGenerator
from hairblend.proxies import SketchTrainConfig, make_sketch_proxy, train_sketch_inverter
from hairblend.serialization import save_feature, save_image, save_latent, save_mask
from hairblend.sketch import make_sketch_dataset, save_sketch
from hairblend.losses import LossWeights

FIXTURES = Path(__file__).parent / "fixtures"

FIXTURE_SKETCH_INDEX = 7
INVERTER_STEPS = 300
DATASET_SEED = 3
TRAIN_SEED = 0


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    gen = ToyGenerator(seed=7)
    backends = toy_bundle()

    w_mean = LatentWPlus.broadcast(gen.mean_latent)
    save_feature(gen.synth_to_stage(w_mean, "style"), FIXTURES / "toy_mean_style.fmap")
    save_image(gen.synthesize(w_mean), FIXTURES / "toy_mean_output.png")

    zero_style = gen.stage("style").feature_shape
    from hairblend.core import FeatureMap

    zeros = FeatureMap("style", torch.zeros(zero_style))
    img = gen.synth_from_stage(zeros, w_mean.layer_range(8, 18), "style", "output")
    save_image(img, FIXTURES / "toy_zero_injection.png")

    save_latent(LatentWPlus.broadcast(gen.sample_random_latent(0)), FIXTURES / "toy_latent_seed0.wlat")

    # 256x256 hair-band-like mask for the downsample block-majority oracle.
    g = torch.Generator().manual_seed(99)
    ys = torch.arange(256).unsqueeze(1).expand(256, 256)
    band = ((ys >= 24) & (ys < 96)).float()
    noise = (torch.rand(256, 256, generator=g) < 0.12).float()
    mask = BinaryMask(torch.clamp(band - noise * band + (1 - band) * (torch.rand(256, 256, generator=g) < 0.04).float(), 0, 1))
    save_mask(mask, FIXTURES / "hair_mask_256.pgm")

    # Fixture sketch + the latent the reference-trained inverter maps it to.
    dataset = make_sketch_dataset(gen, backends.parsing, 50, seed=DATASET_SEED)
    sketch, image = dataset[FIXTURE_SKETCH_INDEX]
    save_sketch(sketch, FIXTURES / "fixture.sketch")
    save_image(image, FIXTURES / "fixture_sketch_target.png")
    inverter = train_sketch_inverter(
        dataset, gen, backends, LossWeights(), SketchTrainConfig(steps=INVERTER_STEPS, seed=TRAIN_SEED)
    )
    proxy = make_sketch_proxy(sketch, inverter, gen)
    save_latent(proxy.w, FIXTURES / "fixture_sketch_latent.wlat")
    save_mask(proxy.region, FIXTURES / "fixture_sketch_region.pgm")

    print("fixtures written to", FIXTURES)


if __name__ == "__main__":
    main()
