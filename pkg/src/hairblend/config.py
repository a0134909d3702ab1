"""Engine configuration: YAML file -> EngineContext.

Backend selection keys take "toy" or a plugin spec "module:factory"; the
factory is called with no arguments (perceptual backends) or the weights path
(generator).
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .backends import BackendBundle, toy_bundle
from .errors import ValidationError
from .generator import PretrainedAdapter, ToyGenerator
from .inversion import InversionConfig
from .losses import LossWeights
from .pipeline import EngineContext, OptimizationBudgets
from .proxies import SketchInverter, ToyBaldingMapper


@dataclass
class GeneratorConfig:
    backend: str = "toy"
    seed: int = 7
    weights_path: Optional[str] = None
    adapter: Optional[str] = None


@dataclass
class BackendsConfig:
    similarity: str = "toy"
    keypoints: str = "toy"
    parsing: str = "toy"
    perceptual: str = "toy"
    patch: str = "toy"
    identity: str = "toy"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "hairblend-data"
    queue_limit: int = 4
    ttl_hours: float = 24.0


@dataclass
class EngineConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    budgets: OptimizationBudgets = field(default_factory=OptimizationBudgets)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    sketch_inverter_path: Optional[str] = None
    seed: int = 0


def _merge_dataclass(cls, data: dict):
    if data is None:
        return cls()
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def load_config(path=None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a mapping")
    known = {
        "generator": GeneratorConfig,
        "backends": BackendsConfig,
        "loss_weights": LossWeights,
        "inversion": InversionConfig,
        "budgets": OptimizationBudgets,
        "service": ServiceConfig,
    }
    unknown = set(raw) - set(known) - {"sketch_inverter_path", "seed"}
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {key: _merge_dataclass(cls, raw.get(key)) for key, cls in known.items()}
    return EngineConfig(
        **kwargs,
        sketch_inverter_path=raw.get("sketch_inverter_path"),
        seed=int(raw.get("seed", 0)),
    )


def _plugin(spec: str):
    if ":" not in spec:
        raise ValidationError(f"plugin spec must be 'module:factory', got {spec!r}")
    mod, attr = spec.split(":", 1)
    return getattr(importlib.import_module(mod), attr)


def build_generator(cfg: GeneratorConfig):
    if cfg.backend == "toy":
        return ToyGenerator(seed=cfg.seed)
    if cfg.backend == "pretrained":
        if not cfg.weights_path or not cfg.adapter:
            raise ValidationError(
                "pretrained generator needs generator.weights_path and generator.adapter"
            )
        return PretrainedAdapter(cfg.weights_path, cfg.adapter)
    raise ValidationError(f"unknown generator backend {cfg.backend!r}")


def build_backends(cfg: BackendsConfig) -> BackendBundle:
    toy = toy_bundle()
    out = {}
    for name in ("similarity", "keypoints", "parsing", "perceptual", "patch", "identity"):
        spec = getattr(cfg, name)
        out[name] = getattr(toy, name) if spec == "toy" else _plugin(spec)()
    return BackendBundle(**out)


def build_context(cfg: EngineConfig) -> EngineContext:
    gen = build_generator(cfg.generator)
    inverter = None
    if cfg.sketch_inverter_path:
        inverter = SketchInverter.load(cfg.sketch_inverter_path)
    return EngineContext(
        gen=gen,
        backends=build_backends(cfg.backends),
        mapper=ToyBaldingMapper(gen),
        weights=cfg.loss_weights,
        inversion=cfg.inversion,
        budgets=cfg.budgets,
        sketch_inverter=inverter,
        seed=cfg.seed,
    )
