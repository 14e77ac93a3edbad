"""Viewpoint, lighting, and color-reproduction perturbations for robust optimization.

Physical capture varies in object pose (rotation, flips, distance,
position), ambient brightness, and the color transfer from LED to sensor.
Optimizing the expected loss under draws from these distributions makes
the waveform survive conditions it was not tuned to exactly.  Defaults
cover full rotation, mirror flips, up to 70% relative translation, 1-1.5x
magnification, +-20% ambient lighting, and per-channel affine color error
(gain 0.7-1.3, offset +-0.2).

Pose transformations are applied to the scene pair *before* striping is
composed on top, so the stripes always stay aligned with the sensor rows
no matter how the object moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# sin/cos snapped to exact -1/0/1 below this tolerance so that right-angle
# rotations are pure index permutations with no interpolation residue.
_TRIG_SNAP = 1e-12


@dataclass(frozen=True)
class TransformRanges:
    """Bounds of the pose/lighting distribution (uniform per field)."""

    rotation_deg: tuple[float, float] = (0.0, 360.0)
    translation_frac: tuple[float, float] = (0.0, 0.7)
    scale: tuple[float, float] = (1.0, 1.5)
    lighting_mult: tuple[float, float] = (0.8, 1.2)
    color_mult: tuple[float, float] = (0.7, 1.3)
    color_add: tuple[float, float] = (-0.2, 0.2)

    def __post_init__(self):
        for name in (
            "rotation_deg",
            "translation_frac",
            "scale",
            "lighting_mult",
            "color_mult",
            "color_add",
        ):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range is inverted: ({lo}, {hi})")


DEFAULT_RANGES = TransformRanges()

IDENTITY_COLOR_RANGES = TransformRanges(color_mult=(1.0, 1.0), color_add=(0.0, 0.0))


@dataclass(frozen=True)
class TransformParams:
    """One draw of the pose/lighting distribution."""

    rotation_deg: float
    flip_h: bool
    flip_v: bool
    translation_frac: float
    translation_angle_rad: float
    scale: float
    lighting_mult: float


IDENTITY_TRANSFORM = TransformParams(
    rotation_deg=0.0,
    flip_h=False,
    flip_v=False,
    translation_frac=0.0,
    translation_angle_rad=0.0,
    scale=1.0,
    lighting_mult=1.0,
)


@dataclass(frozen=True)
class ColorError:
    """Per-channel affine color reproduction error: out = mult * in + add."""

    mult: tuple[float, float, float]
    add: tuple[float, float, float]


IDENTITY_COLOR = ColorError(mult=(1.0, 1.0, 1.0), add=(0.0, 0.0, 0.0))


def sample_transform(rng: np.random.Generator, ranges: TransformRanges = DEFAULT_RANGES) -> TransformParams:
    """Draw pose/lighting parameters, each uniform over its configured range."""
    return TransformParams(
        rotation_deg=float(rng.uniform(*ranges.rotation_deg)),
        flip_h=bool(rng.integers(0, 2)),
        flip_v=bool(rng.integers(0, 2)),
        translation_frac=float(rng.uniform(*ranges.translation_frac)),
        translation_angle_rad=float(rng.uniform(0.0, 2.0 * math.pi)),
        scale=float(rng.uniform(*ranges.scale)),
        lighting_mult=float(rng.uniform(*ranges.lighting_mult)),
    )


def sample_color_error(rng: np.random.Generator, ranges: TransformRanges = DEFAULT_RANGES) -> ColorError:
    """Draw per-channel affine color error coefficients."""
    mult = rng.uniform(ranges.color_mult[0], ranges.color_mult[1], size=3)
    add = rng.uniform(ranges.color_add[0], ranges.color_add[1], size=3)
    return ColorError(mult=tuple(float(x) for x in mult), add=tuple(float(x) for x in add))


def _snap(x: float) -> float:
    for target in (-1.0, 0.0, 1.0):
        if abs(x - target) < _TRIG_SNAP:
            return target
    return x


def _bilinear_sample(image: np.ndarray, rr: np.ndarray, cc: np.ndarray) -> np.ndarray:
    """Sample image at fractional (row, col) coordinates, replicating edges."""
    h, w = image.shape[:2]
    rr = np.clip(rr, 0.0, h - 1.0)
    cc = np.clip(cc, 0.0, w - 1.0)
    r0 = np.floor(rr).astype(np.intp)
    c0 = np.floor(cc).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rr - r0)[..., None]
    fc = (cc - c0)[..., None]
    top = image[r0, c0] * (1.0 - fc) + image[r0, c1] * fc
    bot = image[r1, c0] * (1.0 - fc) + image[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def _rotate(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate content counterclockwise about the image center (bilinear)."""
    if angle_deg % 360.0 == 0.0:
        return image
    theta = math.radians(angle_deg)
    cos_t = _snap(math.cos(theta))
    sin_t = _snap(math.sin(theta))
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # Inverse map: rotate output coords by -theta (y axis points down).
    dy, dx = yy - cy, xx - cx
    src_r = cy + cos_t * dy + sin_t * dx
    src_c = cx - sin_t * dy + cos_t * dx
    return _bilinear_sample(image, src_r, src_c)


def _magnify(image: np.ndarray, scale: float) -> np.ndarray:
    """Enlarge content by the given factor about the center (crop-and-resize)."""
    if scale == 1.0:
        return image
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_r = cy + (yy - cy) / scale
    src_c = cx + (xx - cx) / scale
    return _bilinear_sample(image, src_r, src_c)


def _translate(image: np.ndarray, frac: float, angle_rad: float) -> np.ndarray:
    """Shift content by frac * min(h, w)/2 along the given direction."""
    if frac == 0.0:
        return image
    h, w = image.shape[:2]
    dist = frac * min(h, w) / 2.0
    dr = dist * math.sin(angle_rad)
    dc = dist * math.cos(angle_rad)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return _bilinear_sample(image, yy - dr, xx - dc)


def apply_transform(image: np.ndarray, params: TransformParams, is_ambient: bool) -> np.ndarray:
    """Apply one pose/lighting draw: flips, rotation, magnification, translation.

    The lighting multiplier models ambient-light variation and therefore
    only applies when is_ambient is set; both members of a scene pair must
    receive the *same* params.  Output is clamped to [0, 1].
    """
    out = np.asarray(image, dtype=np.float64)
    if params.flip_h:
        out = out[:, ::-1]
    if params.flip_v:
        out = out[::-1, :]
    out = _rotate(out, params.rotation_deg)
    out = _magnify(out, params.scale)
    out = _translate(out, params.translation_frac, params.translation_angle_rad)
    if is_ambient and params.lighting_mult != 1.0:
        out = out * params.lighting_mult
        return np.clip(out, 0.0, 1.0)
    # Pure resampling of in-range values stays in range; make a contiguous copy.
    return np.ascontiguousarray(out)


def apply_color_error(image: np.ndarray, err: ColorError) -> np.ndarray:
    """Per-channel affine color distortion, clamped to [0, 1]."""
    mult = np.asarray(err.mult, dtype=np.float64)
    add = np.asarray(err.add, dtype=np.float64)
    return np.clip(image * mult + add, 0.0, 1.0)


def apply_color_error_backward(
    image: np.ndarray, err: ColorError, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of :func:`apply_color_error` w.r.t. the image (zero where clamped)."""
    if upstream.shape != image.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match {image.shape}")
    mult = np.asarray(err.mult, dtype=np.float64)
    add = np.asarray(err.add, dtype=np.float64)
    pre = image * mult + add
    inside = (pre > 0.0) & (pre < 1.0)
    return upstream * mult * inside
