"""Shared procedural portrait world for the toy backends.

The toy generator paints a stylized portrait: a hair band across the top, an
elliptical face with side ears, and a flat background. Each semantic class is
painted inside a reserved color cell (hair: all channels below 0.5; background:
blue dominant; face/ear: warm with disjoint red bands), and class colors are
modulated within cell bounds only. Because painting can never leave a cell,
pixel classification by the cell rules below is exact on any toy output, which
is what lets the toy parsing backend recover region masks in closed form.

Coordinates are (y, x) in the 64x64 output frame, y increasing downward.
"""

from __future__ import annotations

import torch

OUTPUT_SIZE = 64
STYLE_SIZE = 8
COLOR_SIZE = 32

CLASS_NAMES = ("hair", "face", "ear", "background")
HAIR, FACE, EAR, BACKGROUND = 0, 1, 2, 3

# Base colors sit at cell centers; spreads are logit-space half-widths chosen so
# modulation + texture + output-stage tone shifts cannot cross a cell boundary.
BASE_COLORS = {
    "hair": (0.26, 0.22, 0.18),
    "face": (0.85, 0.66, 0.55),
    "ear": (0.66, 0.52, 0.44),
    "background": (0.55, 0.75, 0.95),
}
LOGIT_SPREAD = {"hair": 0.60, "face": 0.18, "ear": 0.10, "background": 0.12}

HAIR_VALUE_CEILING = 0.5  # max channel of any hair pixel stays below this
WARM_RED_SPLIT = 0.76  # face red stays above, ear red below

# Hard compositing keeps painted cells nearly pure; the soft fields below
# park many block centers near 0.5, inside even this narrow gradient window.
EDGE_SHARPNESS = 40.0
# Occupancy fields must stay active over at least one style-stage block
# (8 output pixels), or geometry gradients vanish between block centers;
# the paint-weight sharpening above restores crisp edges afterwards.
FIELD_SHARPNESS = 0.5
TEXTURE_LOGIT_AMPLITUDE = 0.25
TONE_SCALE = 0.015  # per-layer output tone modulation (4 layers)
TONE_OFFSET = 0.015

HAIR_TOP = 3.0
HAIR_MAX_EXTENT = 20.0
HAIR_COL_LO = 10.0
HAIR_COL_HI = 53.0
FACE_CENTER = (43.0, 32.0)
FACE_SEMI_X = 11.0
FACE_SEMI_Y = 13.0
EAR_OFFSET = 2.5
EAR_SEMI_Y = 3.5
EAR_SEMI_X = 2.0


def logit(x: float) -> float:
    return float(torch.logit(torch.tensor(float(x))))


def base_logits(dtype=torch.float32) -> torch.Tensor:
    """(4, 3) class base colors in logit space, ordered per CLASS_NAMES."""
    rows = [[logit(c) for c in BASE_COLORS[name]] for name in CLASS_NAMES]
    return torch.tensor(rows, dtype=dtype)


def spreads(dtype=torch.float32) -> torch.Tensor:
    return torch.tensor([LOGIT_SPREAD[name] for name in CLASS_NAMES], dtype=dtype)


def grid(size: int, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Block-center coordinates of a size x size grid in the 64x64 frame."""
    step = OUTPUT_SIZE / size
    centers = (torch.arange(size, dtype=dtype) + 0.5) * step
    return torch.meshgrid(centers, centers, indexing="ij")


def occupancy_fields(y, x, hair_extent, cy, cx, semi_x, semi_y):
    """Smooth hair/face/ear occupancies at the given coordinates.

    The band's lower edge carries a fixed per-column ripple. Without it every
    boundary cell of the coarse style grid sits at the same field value, and
    extent gradients blink out whenever that shared value leaves the
    compositing sigmoid's active window.
    """
    k = FIELD_SHARPNESS
    ripple = 0.8 * torch.sin(0.6 * x + 1.3)
    hair = (
        torch.sigmoid(k * (y - HAIR_TOP))
        * torch.sigmoid(k * (HAIR_TOP + hair_extent + ripple - y))
        * torch.sigmoid(k * (x - HAIR_COL_LO))
        * torch.sigmoid(k * (HAIR_COL_HI - x))
    )
    d2 = ((y - cy) / semi_y) ** 2 + ((x - cx) / semi_x) ** 2
    face = torch.sigmoid(3.0 * (1.0 - d2))
    ear_l = ((y - cy) / EAR_SEMI_Y) ** 2 + ((x - (cx - semi_x - EAR_OFFSET)) / EAR_SEMI_X) ** 2
    ear_r = ((y - cy) / EAR_SEMI_Y) ** 2 + ((x - (cx + semi_x + EAR_OFFSET)) / EAR_SEMI_X) ** 2
    ear = 1.0 - (1.0 - torch.sigmoid(3.0 * (1.0 - ear_l))) * (1.0 - torch.sigmoid(3.0 * (1.0 - ear_r)))
    return hair, face, ear


def paint_weights(hair, face, ear):
    """Sharpened priority compositing; the four weights sum to one exactly."""
    s = lambda t: torch.sigmoid(EDGE_SHARPNESS * (t - 0.5))
    sh, sf, se = s(hair), s(face), s(ear)
    a_hair = sh
    a_face = (1.0 - sh) * sf
    a_ear = (1.0 - sh) * (1.0 - sf) * se
    a_bg = (1.0 - sh) * (1.0 - sf) * (1.0 - se)
    return a_hair, a_face, a_ear, a_bg


def classify(img: torch.Tensor) -> torch.Tensor:
    """Hard per-pixel class labels from the cell rules. img is (H, W, 3)."""
    r, b = img[..., 0], img[..., 2]
    maxc = img.max(dim=-1).values
    labels = torch.full(img.shape[:2], BACKGROUND, dtype=torch.int64)
    warm = maxc >= HAIR_VALUE_CEILING
    labels[warm & (r >= b) & (r >= WARM_RED_SPLIT)] = FACE
    labels[warm & (r >= b) & (r < WARM_RED_SPLIT)] = EAR
    labels[maxc < HAIR_VALUE_CEILING] = HAIR
    return labels


def soft_class_scores(img: torch.Tensor, sharpness: float = 25.0) -> torch.Tensor:
    """Differentiable (H, W, 4) class scores mirroring classify()."""
    r, b = img[..., 0], img[..., 2]
    maxc = img.max(dim=-1).values
    s_hair = torch.sigmoid(sharpness * (HAIR_VALUE_CEILING - maxc))
    warm = torch.sigmoid(sharpness * (r - b))
    not_hair = 1.0 - s_hair
    s_face = not_hair * warm * torch.sigmoid(sharpness * (r - WARM_RED_SPLIT))
    s_ear = not_hair * warm * torch.sigmoid(sharpness * (WARM_RED_SPLIT - r))
    s_bg = not_hair * (1.0 - warm)
    return torch.stack([s_hair, s_face, s_ear, s_bg], dim=-1)


def soft_hair_mask(img: torch.Tensor, sharpness: float = 25.0) -> torch.Tensor:
    maxc = img.max(dim=-1).values
    return torch.sigmoid(sharpness * (HAIR_VALUE_CEILING - maxc))


def soft_face_mask(img: torch.Tensor, sharpness: float = 25.0) -> torch.Tensor:
    """Face-plus-ear weight map; smooth, used by keypoint and identity stands-in."""
    r, b = img[..., 0], img[..., 2]
    maxc = img.max(dim=-1).values
    return torch.sigmoid(sharpness * (maxc - HAIR_VALUE_CEILING)) * torch.sigmoid(sharpness * (r - b))


def render_flat_portrait(
    hair_extent: float,
    hair_rgb,
    size: int = OUTPUT_SIZE,
    dtype=torch.float32,
) -> torch.Tensor:
    """Paint a default-geometry portrait with a fixed hair color.

    Used by the toy text-similarity backend to turn a text target into the
    canonical rendering of that target.
    """
    y, x = grid(size, dtype=dtype)
    cy, cx = FACE_CENTER
    hair, face, ear = occupancy_fields(y, x, hair_extent, cy, cx, FACE_SEMI_X, FACE_SEMI_Y)
    a_hair, a_face, a_ear, a_bg = paint_weights(hair, face, ear)
    logits = base_logits(dtype=dtype).clone()
    logits[HAIR] = torch.logit(torch.as_tensor(hair_rgb, dtype=dtype))
    weights = torch.stack([a_hair, a_face, a_ear, a_bg], dim=-1)
    painted = torch.einsum("hwk,kc->hwc", weights, logits)
    return torch.sigmoid(painted)
