"""Command-line entry points: invert, edit, train-sketch, synth-dataset,
make-proxy, benchmark, serve.

Exit codes: 0 success, 1 engine failure, 2 validation/usage failure. With the
toy backends and a fixed seed every command is bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import torch

from .config import EngineConfig, build_context, load_config
from .errors import HairblendError, StageError, ValidationError
from .inversion import InversionConfig, embed_fs_traced, invert_wplus_traced
from .pipeline import run_edit
from .recipes import load_recipe_file
from .serialization import load_image, save_image, save_latent
from .sketch import load_dataset, make_sketch_dataset, save_dataset_entry
from .proxies import (
    SketchInverter,
    SketchTrainConfig,
    make_reference_proxy,
    make_sketch_proxy,
    make_text_proxy,
    train_sketch_inverter,
)

log = logging.getLogger(__name__)

EXIT_ENGINE = 1
EXIT_USAGE = 2


def _context(config_path, seed=None, backend=None):
    try:
        cfg = load_config(config_path)
        if backend is not None:
            cfg.generator.backend = backend
        if seed is not None:
            cfg = EngineConfig(
                generator=cfg.generator,
                backends=cfg.backends,
                loss_weights=cfg.loss_weights,
                inversion=cfg.inversion,
                budgets=cfg.budgets,
                service=cfg.service,
                sketch_inverter_path=cfg.sketch_inverter_path,
                seed=seed,
            )
        return cfg, build_context(cfg)
    except (ValidationError, OSError) as exc:
        raise click.exceptions.Exit(EXIT_USAGE) from _fail(str(exc))


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    return None


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--backend", type=click.Choice(["toy", "pretrained"]), default=None)
@click.option("--seed", type=int, default=None, help="Engine seed override.")
@click.pass_context
def main(ctx, config_path, backend, seed):
    logging.basicConfig(stream=sys.stderr, level=os.environ.get("HAIRBLEND_LOG", "WARNING"))
    torch.set_num_threads(1)  # bit-reproducibility of CLI runs
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, backend=backend, seed=seed)


def _ctx_from(ctx):
    return _context(ctx.obj["config_path"], ctx.obj["seed"], ctx.obj["backend"])


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.pass_context
def invert(ctx, image_path, out_path, steps):
    """Embed an image into the latent space and feature space."""
    cfg, engine = _ctx_from(ctx)
    if not Path(image_path).exists():
        _fail(f"image not found: {image_path}")
        raise click.exceptions.Exit(EXIT_USAGE)
    inv_cfg = engine.inversion
    if steps is not None:
        try:
            inv_cfg = InversionConfig(
                learning_rate=inv_cfg.learning_rate, steps=steps,
                fs_steps=inv_cfg.fs_steps, seed=inv_cfg.seed,
            )
        except ValidationError as exc:
            _fail(str(exc))
            raise click.exceptions.Exit(EXIT_USAGE) from exc
    try:
        img = load_image(image_path)
        w, trace = invert_wplus_traced(img, engine.gen, inv_cfg, engine.backends.patch)
        fs, _ = embed_fs_traced(img, w, engine.gen, inv_cfg, engine.backends.patch)
    except HairblendError as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_ENGINE) from exc
    save_latent(w, out_path, fs)
    click.echo(f"reconstruction loss {trace.best_loss:.6g} -> {out_path}")


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--recipe", "recipe_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def edit(ctx, image_path, recipe_path, out_path):
    """Run an edit recipe against an image; writes result image and report."""
    cfg, engine = _ctx_from(ctx)
    for p, kind in ((image_path, "image"), (recipe_path, "recipe")):
        if not Path(p).exists():
            _fail(f"{kind} not found: {p}")
            raise click.exceptions.Exit(EXIT_USAGE)
    try:
        req = load_recipe_file(recipe_path)
        img = load_image(image_path)
    except (ValidationError, OSError) as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_USAGE) from exc
    try:
        result, report = run_edit(img, req, engine)
    except StageError as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_ENGINE) from exc
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(result, out)
    report_path = out.with_suffix(".report.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(f"wrote {out} and {report_path}")


@main.command("train-sketch")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path())
@click.option("--steps", type=int, default=2000)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--train-seed", type=int, default=0)
@click.pass_context
def train_sketch(ctx, dataset_dir, steps, out_path, train_seed):
    """Train the stroke-to-latent inverter on a paired sketch dataset."""
    cfg, engine = _ctx_from(ctx)
    if steps < 1:
        _fail("training steps must be >= 1")
        raise click.exceptions.Exit(EXIT_USAGE)
    try:
        dataset = load_dataset(dataset_dir)
    except (ValidationError, OSError) as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_USAGE) from exc
    if not dataset:
        _fail(f"no sketch/image pairs under {dataset_dir}")
        raise click.exceptions.Exit(EXIT_USAGE)
    inverter = train_sketch_inverter(
        dataset, engine.gen, engine.backends, engine.weights,
        SketchTrainConfig(steps=steps, seed=train_seed),
    )
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    inverter.save(out)
    curve_path = out.with_suffix(".curve.json")
    curve_path.write_text(json.dumps(inverter.training_curve) + "\n")
    first = sum(inverter.training_curve[:50]) / min(50, len(inverter.training_curve))
    last = sum(inverter.training_curve[-50:]) / min(50, len(inverter.training_curve))
    click.echo(f"trained {steps} steps; loss {first:.4g} -> {last:.4g}; wrote {out}")


@main.command("synth-dataset")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", type=int, default=50)
@click.option("--data-seed", type=int, default=0)
@click.pass_context
def synth_dataset(ctx, out_dir, count, data_seed):
    """Generate the procedural sketch/portrait training pairs."""
    cfg, engine = _ctx_from(ctx)
    pairs = make_sketch_dataset(engine.gen, engine.backends.parsing, count, seed=data_seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (sketch, image) in enumerate(pairs):
        save_dataset_entry(out, f"pair{i:04d}", sketch, image)
    click.echo(f"wrote {len(pairs)} pairs to {out}")


@main.command("make-proxy")
@click.option("--kind", type=click.Choice(["text", "reference", "sketch"]), required=True)
@click.option("--image", "image_path", required=True, type=click.Path(),
              help="Source image the proxy aligns to.")
@click.option("--text", default=None)
@click.option("--reference", "reference_path", type=click.Path(), default=None)
@click.option("--sketch", "sketch_path", type=click.Path(), default=None)
@click.option("--inverter", "inverter_path", type=click.Path(), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def make_proxy(ctx, kind, image_path, text, reference_path, sketch_path, inverter_path, out_path):
    """Generate an editing proxy and save its latent code."""
    cfg, engine = _ctx_from(ctx)
    try:
        src = load_image(image_path)
        opt = InversionConfig(
            learning_rate=engine.budgets.learning_rate,
            steps=engine.budgets.text_steps,
            seed=engine.seed,
        )
        if kind == "text":
            if not text:
                raise ValidationError("--text is required for text proxies")
            proxy = make_text_proxy(text, src, engine.gen, engine.backends, engine.weights,
                                    opt, seed=engine.seed)
        elif kind == "reference":
            if not reference_path:
                raise ValidationError("--reference is required for reference proxies")
            proxy = make_reference_proxy(load_image(reference_path), src, engine.gen,
                                         engine.backends, engine.weights, opt)
        else:
            if not sketch_path or not inverter_path:
                raise ValidationError("--sketch and --inverter are required for sketch proxies")
            from .sketch import load_sketch

            proxy = make_sketch_proxy(load_sketch(sketch_path),
                                      SketchInverter.load(inverter_path), engine.gen)
    except (ValidationError, OSError) as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_USAGE) from exc
    except HairblendError as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_ENGINE) from exc
    save_latent(proxy.w, out_path)
    click.echo(f"{kind} proxy -> {out_path} (region cells: {proxy.region.count()})")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--report", "report_path", required=True, type=click.Path())
@click.pass_context
def benchmark(ctx, dataset_path, report_path):
    """Evaluate edits over a dataset spec; writes JSON and text reports."""
    cfg, engine = _ctx_from(ctx)
    if not Path(dataset_path).exists():
        _fail(f"dataset spec not found: {dataset_path}")
        raise click.exceptions.Exit(EXIT_USAGE)
    from .metrics import run_benchmark

    results = run_benchmark(dataset_path, engine, report_path)
    click.echo(f"evaluated {len(results)} items -> {report_path}")


@main.command()
@click.pass_context
def serve(ctx):
    """Run the HTTP service; bind address from HAIRBLEND_HOST/HAIRBLEND_PORT."""
    cfg, engine = _ctx_from(ctx)
    host = os.environ.get("HAIRBLEND_HOST", cfg.service.host)
    try:
        port = int(os.environ.get("HAIRBLEND_PORT", cfg.service.port))
        if not 0 < port < 65536:
            raise ValueError(f"port {port} out of range")
    except ValueError as exc:
        _fail(str(exc))
        raise click.exceptions.Exit(EXIT_USAGE) from exc
    import uvicorn

    from .service import EngineService, create_app

    service = EngineService(
        engine, cfg.service.data_dir, cfg.service.queue_limit, cfg.service.ttl_hours
    )
    app = create_app(service)
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        service.shutdown(drain=True)


if __name__ == "__main__":
    main()
