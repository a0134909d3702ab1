"""On-disk formats: grayscale masks, RGB images, feature and latent containers.

Masks are single-channel 8-bit grayscale (0/255); the canonical fixture format
is binary PGM because its byte layout is fully determined by the pixel data.
Images are 8-bit RGB PNG. Feature maps and latents use small self-describing
binary containers with little-endian float32 payloads.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image as PILImage

from .core import LATENT_DIM, NUM_LAYERS, BinaryMask, FeatureMap, Image, LatentFS, LatentWPlus
from .errors import ValidationError

FEATURE_MAGIC = b"FMAP"
LATENT_MAGIC = b"WLAT"


def mask_to_pgm_bytes(m: BinaryMask) -> bytes:
    """Canonical binary PGM (P5) encoding, 0/255."""
    arr = (m.data.detach().cpu().numpy() * 255.0).round().astype(np.uint8)
    header = f"P5\n{m.width} {m.height}\n255\n".encode("ascii")
    return header + arr.tobytes()


def mask_from_pgm_bytes(raw: bytes) -> BinaryMask:
    if not raw.startswith(b"P5"):
        raise ValidationError("not a binary PGM document")
    # Header is three whitespace-separated tokens after the magic, comments allowed.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte before pixel data
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValidationError("mask PGM must use maxval 255")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos).reshape(h, w)
    return BinaryMask(torch.from_numpy((data >= 128).astype(np.float32)))


def save_mask(m: BinaryMask, path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".png", ".bmp"):
        arr = (m.data.detach().cpu().numpy() * 255.0).round().astype(np.uint8)
        PILImage.fromarray(arr, mode="L").save(path)
    else:
        path.write_bytes(mask_to_pgm_bytes(m))


def load_mask(path) -> BinaryMask:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(b"P5"):
        return mask_from_pgm_bytes(raw)
    with PILImage.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(torch.from_numpy((arr >= 128).astype(np.float32)))


def image_to_png_bytes(img: Image) -> bytes:
    arr = (img.data.detach().cpu().numpy() * 255.0).round().clip(0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: Image, path) -> None:
    Path(path).write_bytes(image_to_png_bytes(img))


def load_image(path) -> Image:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB")).astype(np.float32) / 255.0
    return Image(torch.from_numpy(arr))


def image_from_png_bytes(raw: bytes) -> Image:
    with PILImage.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("RGB")).astype(np.float32) / 255.0
    return Image(torch.from_numpy(arr))


def feature_to_bytes(f: FeatureMap) -> bytes:
    stage = f.stage.encode("utf-8")
    head = FEATURE_MAGIC + struct.pack("<BH", 1, len(stage)) + stage
    head += struct.pack("<III", f.height, f.width, f.channels)
    payload = f.data.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()
    return head + payload


def feature_from_bytes(raw: bytes) -> FeatureMap:
    if raw[:4] != FEATURE_MAGIC:
        raise ValidationError("not a feature container")
    version, stage_len = struct.unpack_from("<BH", raw, 4)
    if version != 1:
        raise ValidationError(f"unsupported feature container version {version}")
    pos = 7
    stage = raw[pos : pos + stage_len].decode("utf-8")
    pos += stage_len
    h, w, c = struct.unpack_from("<III", raw, pos)
    pos += 12
    data = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=pos).reshape(h, w, c)
    return FeatureMap(stage, torch.from_numpy(data.copy()))


def save_feature(f: FeatureMap, path) -> None:
    Path(path).write_bytes(feature_to_bytes(f))


def load_feature(path) -> FeatureMap:
    return feature_from_bytes(Path(path).read_bytes())


def latent_to_bytes(w: LatentWPlus, fs: Optional[LatentFS] = None) -> bytes:
    flags = 1 if fs is not None else 0
    head = LATENT_MAGIC + struct.pack("<BB", 1, flags)
    payload = w.layers.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()
    out = head + payload
    if fs is not None:
        fblock = feature_to_bytes(fs.f7)
        out += struct.pack("<I", len(fblock)) + fblock
    return out


def latent_from_bytes(raw: bytes) -> tuple[LatentWPlus, Optional[LatentFS]]:
    if raw[:4] != LATENT_MAGIC:
        raise ValidationError("not a latent container")
    version, flags = struct.unpack_from("<BB", raw, 4)
    if version != 1:
        raise ValidationError(f"unsupported latent container version {version}")
    pos = 6
    n = NUM_LAYERS * LATENT_DIM
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(NUM_LAYERS, LATENT_DIM)
    w = LatentWPlus(torch.from_numpy(data.copy()))
    fs = None
    if flags & 1:
        pos += n * 4
        (flen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        f7 = feature_from_bytes(raw[pos : pos + flen])
        fs = LatentFS(f7=f7, s=w.layer_range(8, NUM_LAYERS))
    return w, fs


def save_latent(w: LatentWPlus, path, fs: Optional[LatentFS] = None) -> None:
    Path(path).write_bytes(latent_to_bytes(w, fs))


def load_latent(path) -> tuple[LatentWPlus, Optional[LatentFS]]:
    return latent_from_bytes(Path(path).read_bytes())
