"""Procedural desk-scale image dataset: colored geometric shapes on textured backgrounds.

Each of the 10 classes pairs a distinct shape with a distinct hue, giving
the classifier two redundant cues.  Samples randomize pose (position,
size, rotation), background texture, global illumination, and per-channel
affine color jitter so that a model trained on them tolerates the same
viewpoint/lighting/color-error distribution the attack evaluation uses.
Generation is fully deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_NAMES = [
    "crimson disc",
    "crimson cross",
    "lime square",
    "lime crescent",
    "jade ring",
    "jade triangle",
    "azure bar",
    "azure star",
    "magenta ellipse",
    "magenta frame",
]

# Five hues 72 degrees apart (the affine color-error distribution can blur
# neighboring hues at finer spacing), two clearly different silhouettes per
# hue.  Same-hue siblings share a color word, so the token-overlap filter
# used for affinity targeting treats them as semantically near.
_CLASS_HUES = [0.0, 0.0, 0.2, 0.2, 0.4, 0.4, 0.6, 0.6, 0.8, 0.8]
_CLASS_SHAPES = [0, 4, 1, 7, 3, 2, 5, 6, 9, 8]


@dataclass
class ShapesDataset:
    images: np.ndarray  # (n, size, size, 3) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64
    label_names: list[str]

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    h = h % 1.0
    i = int(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f))
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i % 6]
    return np.array(rgb, dtype=np.float64)


def _shape_mask(kind: int, size: int, cy: float, cx: float, radius: float, angle: float) -> np.ndarray:
    """Binary-ish occupancy mask for one shape, 2x supersampled then box-averaged."""
    ss = 2
    n = size * ss
    coords = (np.arange(n, dtype=np.float64) + 0.5) / ss - 0.5
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    dy, dx = yy - cy, xx - cx
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    u = cos_a * dx + sin_a * dy  # local x
    w = -sin_a * dx + cos_a * dy  # local y
    r = radius
    if kind == 0:  # disc
        mask = u * u + w * w <= r * r
    elif kind == 1:  # square
        mask = np.maximum(np.abs(u), np.abs(w)) <= r * 0.82
    elif kind == 2:  # triangle (equilateral, point up in local frame)
        mask = (w <= r * 0.5) & (w >= -r + np.abs(u) * np.sqrt(3.0))
    elif kind == 3:  # ring
        rho2 = u * u + w * w
        mask = (rho2 <= r * r) & (rho2 >= (0.58 * r) ** 2)
    elif kind == 4:  # cross
        arm = r * 0.34
        mask = ((np.abs(u) <= arm) | (np.abs(w) <= arm)) & (np.maximum(np.abs(u), np.abs(w)) <= r)
    elif kind == 5:  # bar
        mask = (np.abs(u) <= r) & (np.abs(w) <= r * 0.3)
    elif kind == 6:  # five-point star
        phi = np.arctan2(w, u)
        rho = np.sqrt(u * u + w * w)
        spike = 0.5 + 0.5 * np.cos(5.0 * phi)
        mask = rho <= r * (0.32 + 0.68 * spike)
    elif kind == 7:  # crescent
        rho2 = u * u + w * w
        bite = (u - 0.5 * r) ** 2 + w * w
        mask = (rho2 <= r * r) & (bite >= (0.8 * r) ** 2)
    elif kind == 8:  # hollow square frame
        outer = np.maximum(np.abs(u), np.abs(w))
        mask = (outer <= r * 0.9) & (outer >= r * 0.5)
    elif kind == 9:  # ellipse
        mask = (u / r) ** 2 + (w / (0.55 * r)) ** 2 <= 1.0
    else:
        raise ValueError(f"unknown shape kind {kind}")
    mask = mask.astype(np.float64).reshape(size, ss, size, ss).mean(axis=(1, 3))
    return mask


def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.16, 0.38, size=3)
    gray = base.mean()
    base = gray + 0.3 * (base - gray)  # keep backgrounds desaturated
    grid = rng.uniform(-0.05, 0.05, size=(5, 5, 3))
    # Bilinear upsample of the noise grid to the full image.
    pos = np.linspace(0.0, 4.0, size)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, 4)
    f = pos - i0
    rows = grid[i0] * (1.0 - f)[:, None, None] + grid[i1] * f[:, None, None]
    noise = (
        rows[:, i0] * (1.0 - f)[None, :, None] + rows[:, i1] * f[None, :, None]
    )
    return np.clip(base[None, None, :] + noise, 0.0, 1.0)


def render_sample(rng: np.random.Generator, label: int, size: int) -> np.ndarray:
    """One random training image of the given class."""
    bg = _textured_background(rng, size)
    margin = size * 0.125
    cy = rng.uniform(margin, size - margin)
    cx = rng.uniform(margin, size - margin)
    radius = rng.uniform(size * 0.22, size * 0.42)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    hue = _CLASS_HUES[label] + rng.normal(0.0, 0.012)
    color = hsv_to_rgb(hue, rng.uniform(0.85, 1.0), 1.0)
    alpha = _shape_mask(_CLASS_SHAPES[label], size, cy, cx, radius, angle)[..., None]
    img = bg * (1.0 - alpha) + color[None, None, :] * alpha
    # Illumination and color-transfer jitter: spans dim captures through the
    # clipped-bright regime that mean-intensity scene scaling produces, plus
    # the evaluation-time per-channel affine color-error ranges.
    img = img * rng.uniform(0.55, 1.35)
    mult = rng.uniform(0.7, 1.3, size=3)
    add = rng.uniform(-0.2, 0.2, size=3)
    return np.clip(img * mult + add, 0.0, 1.0)


def render_clean_sample(
    rng: np.random.Generator, label: int, size: int, radius_frac: float = 0.33
) -> np.ndarray:
    """A centered, unjittered, fully-lit sample; useful as an attack base image."""
    bg = _textured_background(rng, size)
    c = (size - 1) / 2.0
    alpha = _shape_mask(
        _CLASS_SHAPES[label], size, c, c, size * radius_frac, rng.uniform(0.0, 2.0 * np.pi)
    )[..., None]
    color = hsv_to_rgb(_CLASS_HUES[label], 0.9, 1.0)
    return np.clip(bg * (1.0 - alpha) + color[None, None, :] * alpha, 0.0, 1.0)


def generate_dataset(
    n_train: int = 2000, n_test: int = 500, seed: int = 0, size: int = 64
) -> tuple[ShapesDataset, ShapesDataset]:
    """Deterministic train/test split with balanced class counts."""
    rng = np.random.default_rng(seed)
    splits = []
    for n in (n_train, n_test):
        images = np.empty((n, size, size, 3), dtype=np.float32)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            label = i % len(CLASS_NAMES)
            images[i] = render_sample(rng, label, size)
            labels[i] = label
        splits.append(ShapesDataset(images=images, labels=labels, label_names=list(CLASS_NAMES)))
    return splits[0], splits[1]
