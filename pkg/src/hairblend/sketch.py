"""Sketch strokes, rasterization, the interchange document format, and the
procedural sketch/image training dataset.

The interchange format is a line-based text document with integer coordinates
so that independently written editors can produce byte-identical documents:

    hairblend-sketch v1
    canvas <width> <height>
    stroke <width> <x0>,<y0> <x1>,<y1> ...

Lines end with a single newline; the document ends with a trailing newline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import torch

from .core import BinaryMask, Image
from .errors import ValidationError

FORMAT_HEADER = "hairblend-sketch v1"


@dataclass(frozen=True)
class Stroke:
    width: int
    points: Tuple[Tuple[int, int], ...]  # (x, y) pixel coordinates

    def __post_init__(self):
        if self.width < 1:
            raise ValidationError("stroke width must be >= 1")
        if len(self.points) < 1:
            raise ValidationError("stroke needs at least one point")
        pts = tuple((int(x), int(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)


def _rasterize_strokes(strokes: Sequence[Stroke], height: int, width: int) -> torch.Tensor:
    """Anti-alias-free fill: a pixel is set when its center lies within
    width/2 of a stroke segment."""
    out = np.zeros((height, width), dtype=np.float32)
    ys, xs = np.mgrid[0:height, 0:width]
    centers = np.stack([xs + 0.5, ys + 0.5], axis=-1).astype(np.float64)
    for stroke in strokes:
        radius = stroke.width / 2.0
        pts = [(x + 0.5, y + 0.5) for x, y in stroke.points]
        segments = list(zip(pts, pts[1:])) if len(pts) > 1 else [(pts[0], pts[0])]
        for (x0, y0), (x1, y1) in segments:
            a = np.array([x0, y0])
            d = np.array([x1 - x0, y1 - y0])
            dd = float(d @ d)
            rel = centers - a
            if dd == 0.0:
                dist2 = (rel**2).sum(axis=-1)
            else:
                t = np.clip((rel @ d) / dd, 0.0, 1.0)
                proj = a + t[..., None] * d
                dist2 = ((centers - proj) ** 2).sum(axis=-1)
            out[dist2 <= radius * radius] = 1.0
    return torch.from_numpy(out)


@dataclass(frozen=True)
class SketchInput:
    strokes: Tuple[Stroke, ...]
    height: int
    width: int
    raster: BinaryMask = field(default=None, compare=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("sketch canvas must be positive")
        strokes = tuple(self.strokes)
        object.__setattr__(self, "strokes", strokes)
        raster = BinaryMask(_rasterize_strokes(strokes, self.height, self.width))
        object.__setattr__(self, "raster", raster)

    def with_strokes(self, strokes: Sequence[Stroke]) -> "SketchInput":
        return SketchInput(tuple(strokes), self.height, self.width)


def serialize_sketch(sketch: SketchInput) -> str:
    lines = [FORMAT_HEADER, f"canvas {sketch.width} {sketch.height}"]
    for stroke in sketch.strokes:
        pts = " ".join(f"{x},{y}" for x, y in stroke.points)
        lines.append(f"stroke {stroke.width} {pts}")
    return "\n".join(lines) + "\n"


def parse_sketch(text: str) -> SketchInput:
    lines = [ln for ln in text.split("\n") if ln.strip() != ""]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValidationError("not a sketch interchange document")
    if len(lines) < 2 or not lines[1].startswith("canvas "):
        raise ValidationError("sketch document missing canvas line")
    try:
        w, h = (int(tok) for tok in lines[1].split()[1:3])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"bad canvas line: {lines[1]!r}") from exc
    strokes = []
    for ln in lines[2:]:
        toks = ln.split()
        if toks[0] != "stroke":
            raise ValidationError(f"unexpected line in sketch document: {ln!r}")
        try:
            width = int(toks[1])
            pts = tuple(tuple(int(v) for v in tok.split(",")) for tok in toks[2:])
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"bad stroke line: {ln!r}") from exc
        strokes.append(Stroke(width=width, points=pts))
    return SketchInput(tuple(strokes), height=h, width=w)


def save_sketch(sketch: SketchInput, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(serialize_sketch(sketch).encode("ascii"))


def load_sketch(path) -> SketchInput:
    from pathlib import Path

    return parse_sketch(Path(path).read_text(encoding="ascii"))


def strokes_from_hair_band(
    hair_mask: torch.Tensor, rng: np.random.Generator, max_strokes: int = 4
) -> List[Stroke]:
    """Draw 2..max_strokes roughly horizontal strokes through a hair mask."""
    rows = torch.nonzero(hair_mask.sum(dim=1) > 0).flatten()
    cols = torch.nonzero(hair_mask.sum(dim=0) > 0).flatten()
    if len(rows) == 0 or len(cols) == 0:
        return []
    r_lo, r_hi = int(rows.min()), int(rows.max())
    c_lo, c_hi = int(cols.min()), int(cols.max())
    n = int(rng.integers(2, max_strokes + 1))
    strokes = []
    for _ in range(n):
        y = int(rng.integers(r_lo, r_hi + 1))
        xs = np.arange(c_lo, c_hi + 1, 8)
        pts = tuple((int(x), int(np.clip(y + rng.integers(-1, 2), 0, hair_mask.shape[0] - 1))) for x in xs)
        strokes.append(Stroke(width=int(rng.integers(2, 4)), points=pts))
    return strokes


def save_dataset_entry(out_dir, name: str, sketch: SketchInput, image: Image) -> None:
    """Dataset layout: paired <name>.sketch and <name>.png files."""
    from pathlib import Path

    from .serialization import save_image

    out_dir = Path(out_dir)
    save_sketch(sketch, out_dir / f"{name}.sketch")
    save_image(image, out_dir / f"{name}.png")


def load_dataset(dataset_dir) -> List[Tuple[SketchInput, Image]]:
    from pathlib import Path

    from .serialization import load_image

    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise ValidationError(f"dataset directory not found: {dataset_dir}")
    pairs = []
    for sketch_path in sorted(dataset_dir.glob("*.sketch")):
        image_path = sketch_path.with_suffix(".png")
        if not image_path.exists():
            raise ValidationError(f"missing image for {sketch_path.name}")
        pairs.append((load_sketch(sketch_path), load_image(image_path)))
    return pairs


def make_sketch_dataset(gen, parsing, count: int, seed: int = 0) -> List[Tuple[SketchInput, Image]]:
    """Procedural (sketch, portrait) pairs: strokes trace each portrait's hair band."""
    from .generator import truncation_init

    rng = np.random.default_rng(seed)
    size = gen.output_size
    pairs = []
    attempt = 0
    while len(pairs) < count:
        latent_seed = seed * 100_003 + attempt
        attempt += 1
        # Wide truncation: targets must be diverse enough that the untrained
        # (mean-predicting) inverter starts genuinely wrong.
        w = truncation_init(gen.mean_latent, gen.sample_random_latent(latent_seed), 0.85)
        img = gen.synthesize(w)
        hair = parsing.hair_mask(img).data
        strokes = strokes_from_hair_band(hair, rng)
        if not strokes:
            continue
        pairs.append((SketchInput(tuple(strokes), height=size, width=size), img))
    return pairs
