"""Recipe documents: the JSON form of EditRequest shared with clients.

recipe_to_request resolves file paths (CLI) and inline payloads; requests
serialize back to fully inline recipes so a round trip is lossless without a
filesystem.
"""

from __future__ import annotations

import base64
import json
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import jsonschema

from .core import BinaryMask, Image
from .errors import ValidationError
from .pipeline import EditRequest, ReferenceSpec, RgbSpec, TextSpec
from .serialization import (
    image_from_png_bytes,
    image_to_png_bytes,
    load_image,
    load_mask,
    mask_from_pgm_bytes,
    mask_to_pgm_bytes,
)
from .sketch import SketchInput, Stroke, load_sketch


def schema() -> dict:
    text = resources.files("hairblend.schemas").joinpath("edit_request.schema.json").read_text()
    return json.loads(text)


def validate_recipe(recipe: dict) -> None:
    try:
        jsonschema.validate(recipe, schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"recipe does not match the edit-request schema: {exc.message}") from exc


SessionResolver = Optional[Callable[[str], Image]]


def _load_condition(node, base_dir: Path, resolve_session: SessionResolver):
    if node is None:
        return None
    kind = node.get("type")
    if kind == "text":
        return TextSpec(text=node["text"])
    if kind == "rgb":
        return RgbSpec(rgb=tuple(node["rgb"]))
    if kind == "reference":
        if "png64" in node:
            return ReferenceSpec(image=image_from_png_bytes(base64.b64decode(node["png64"])))
        if "session" in node:
            if resolve_session is None:
                raise ValidationError("session references need a running service context")
            return ReferenceSpec(image=resolve_session(node["session"]))
        return ReferenceSpec(image=load_image(base_dir / node["image"]))
    raise ValidationError(f"unknown condition type {kind!r}")


def _load_mask(node, base_dir: Path) -> Optional[BinaryMask]:
    if node is None:
        return None
    if "pgm64" in node:
        return mask_from_pgm_bytes(base64.b64decode(node["pgm64"]))
    return load_mask(base_dir / node["path"])


def _load_sketch(node, base_dir: Path) -> Optional[SketchInput]:
    if node is None:
        return None
    if "path" in node:
        return load_sketch(base_dir / node["path"])
    w, h = node["canvas"]
    strokes = tuple(
        Stroke(width=s["width"], points=tuple((x, y) for x, y in s["points"]))
        for s in node["strokes"]
    )
    return SketchInput(strokes, height=h, width=w)


def recipe_to_request(
    recipe: dict,
    base_dir=".",
    resolve_session: SessionResolver = None,
) -> EditRequest:
    validate_recipe(recipe)
    base_dir = Path(base_dir)
    return EditRequest(
        hairstyle=_load_condition(recipe.get("hairstyle"), base_dir, resolve_session),
        sketch=_load_sketch(recipe.get("sketch"), base_dir),
        sketch_only=bool(recipe.get("sketch_only", False)),
        shape_mask=_load_mask(recipe.get("shape_mask"), base_dir),
        color=_load_condition(recipe.get("color"), base_dir, resolve_session),
        color_mask=_load_mask(recipe.get("color_mask"), base_dir),
    )


def _dump_condition(cond):
    if cond is None:
        return None
    if isinstance(cond, TextSpec):
        return {"type": "text", "text": cond.text}
    if isinstance(cond, RgbSpec):
        return {"type": "rgb", "rgb": list(cond.rgb)}
    if isinstance(cond, ReferenceSpec):
        return {"type": "reference", "png64": base64.b64encode(image_to_png_bytes(cond.image)).decode()}
    raise ValidationError(f"cannot serialize condition {type(cond).__name__}")


def _dump_mask(mask):
    if mask is None:
        return None
    return {"pgm64": base64.b64encode(mask_to_pgm_bytes(mask)).decode()}


def request_to_recipe(req: EditRequest) -> dict:
    sketch = None
    if req.sketch is not None:
        sketch = {
            "canvas": [req.sketch.width, req.sketch.height],
            "strokes": [
                {"width": s.width, "points": [[x, y] for x, y in s.points]}
                for s in req.sketch.strokes
            ],
        }
    recipe = {
        "hairstyle": _dump_condition(req.hairstyle),
        "sketch": sketch,
        "sketch_only": req.sketch_only,
        "shape_mask": _dump_mask(req.shape_mask),
        "color": _dump_condition(req.color),
        "color_mask": _dump_mask(req.color_mask),
    }
    validate_recipe(recipe)
    return recipe


def load_recipe_file(path, resolve_session: SessionResolver = None) -> EditRequest:
    path = Path(path)
    try:
        recipe = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"recipe {path} is not valid JSON: {exc}") from exc
    return recipe_to_request(recipe, base_dir=path.parent, resolve_session=resolve_session)
