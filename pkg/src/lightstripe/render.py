"""Radiometric rolling-shutter image formation, forward and backward.

A captured frame decomposes into an ambient-only image plus an
attacker-light component scaled per row by the time average of the
waveform over that row's exposure window.  The blend happens in
gamma-linearized space (set gamma=1 to recover a plain linear blend).

The attacker cannot photograph the light-only component directly, so it
is extrapolated from a pair of captures: ambient only, and ambient plus
lights fully on.  Pixels where the "full" capture is darker than ambient
(sensor noise) contribute zero attacker light.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lightstripe.camera import CameraTimings, LightSignal, ShutterKernel, build_shutter_kernel

# Gradient of x**(1/gamma) blows up at x = 0; pixels at or below this
# linearized floor get zero gradient instead.
_GRAD_FLOOR = 1e-12


@dataclass(frozen=True)
class ScenePair:
    """Captured scene under ambient light only and under ambient + full attacker light."""

    ambient: np.ndarray
    full: np.ndarray

    def __post_init__(self):
        amb = np.asarray(self.ambient, dtype=np.float64)
        ful = np.asarray(self.full, dtype=np.float64)
        object.__setattr__(self, "ambient", amb)
        object.__setattr__(self, "full", ful)
        for name, img in (("ambient", amb), ("full", ful)):
            if img.ndim != 3 or img.shape[2] != 3:
                raise ValueError(f"{name} image must be h x w x 3, got {img.shape}")
            if np.any(img < 0.0) or np.any(img > 1.0) or not np.all(np.isfinite(img)):
                raise ValueError(f"{name} image values must lie in [0, 1]")
        if amb.shape != ful.shape:
            raise ValueError(f"scene pair shapes differ: {amb.shape} vs {ful.shape}")

    @property
    def rows(self) -> int:
        return int(self.ambient.shape[0])

    @property
    def cols(self) -> int:
        return int(self.ambient.shape[1])


def linearize_pair(scene: ScenePair, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Gamma-linearized ambient image and attacker-light component (clamped at 0)."""
    amb_lin = np.power(scene.ambient, gamma)
    full_lin = np.power(scene.full, gamma)
    sig_lin = np.clip(full_lin - amb_lin, 0.0, None)
    return amb_lin, sig_lin


def cyclic_shift(signal_values: np.ndarray, delta: int) -> np.ndarray:
    """Rotate each channel left by delta slots: out[ch][i] = in[ch][(i+delta) mod l].

    Models the unknown phase between the periodic waveform and the frame
    start.  delta = l is the same as delta = 0.
    """
    signal_values = np.asarray(signal_values)
    if signal_values.ndim != 2:
        raise ValueError(f"signal values must be 2-D, got shape {signal_values.shape}")
    l = signal_values.shape[1]
    if not 0 <= delta <= l:
        raise ValueError(f"delta must be in [0, {l}], got {delta}")
    return np.roll(signal_values, -delta, axis=1)


def _gather_index(rows: int, window: int, delta: int, length: int) -> np.ndarray:
    """Slot index matrix (rows x window) for the shifted periodic waveform."""
    return (np.arange(rows)[:, None] + np.arange(window)[None, :] + delta) % length


def row_gain(signal: LightSignal, delta: int, kernel: ShutterKernel) -> np.ndarray:
    """Per-channel per-row brightness multiplier of the attacker-light component.

    gain[ch][y] = sum_j weights[j] * values[ch][(y + j + delta) mod l], the
    exact time average of the waveform over row y's exposure window.  With
    the kernel built from the signal's own timings the window never wraps
    within a frame; the periodic indexing also admits wider kernels
    (longer exposures of the same periodic waveform).
    """
    return row_gain_values(signal.values, signal.timings.rows, delta, kernel)


def row_gain_values(
    values: np.ndarray, rows: int, delta: int, kernel: ShutterKernel
) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"signal values must be 2-D, got shape {values.shape}")
    l = values.shape[1]
    if not 0 <= delta <= l:
        raise ValueError(f"delta must be in [0, {l}], got {delta}")
    idx = _gather_index(rows, kernel.window, delta, l)
    # (c, rows, window) . (window,) -> (c, rows); fixed summation order.
    return values[:, idx] @ kernel.weights


def row_gain_backward(
    upstream: np.ndarray, length: int, delta: int, kernel: ShutterKernel
) -> np.ndarray:
    """Adjoint of :func:`row_gain_values`: scatter row-gain gradients back to slots."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.ndim != 2:
        raise ValueError(f"row-gain gradient must be 2-D, got shape {upstream.shape}")
    channels, rows = upstream.shape
    idx = _gather_index(rows, kernel.window, delta, length)
    contrib = upstream[:, :, None] * kernel.weights[None, None, :]
    grad = np.zeros((channels, length), dtype=np.float64)
    for ch in range(channels):
        np.add.at(grad[ch], idx.ravel(), contrib[ch].ravel())
    return grad


def compose(scene: ScenePair, gain: np.ndarray, gamma: float) -> np.ndarray:
    """Blend the scene pair in gamma space using per-row gains.

    out[y,x,ch] = (amb^g + gain[ch][y] * max(full^g - amb^g, 0))^(1/g),
    clamped to [0, 1].  gain = 0 reproduces the ambient capture, gain = 1
    the fully-lit one (where it is at least as bright as ambient).
    """
    amb_lin, sig_lin = linearize_pair(scene, gamma)
    return compose_linearized(amb_lin, sig_lin, gain, gamma)


def compose_linearized(
    amb_lin: np.ndarray, sig_lin: np.ndarray, gain: np.ndarray, gamma: float
) -> np.ndarray:
    gain = np.asarray(gain, dtype=np.float64)
    if gain.ndim != 2 or gain.shape != (amb_lin.shape[2], amb_lin.shape[0]):
        raise ValueError(
            f"gain must be channels x rows = {(amb_lin.shape[2], amb_lin.shape[0])}, "
            f"got {gain.shape}"
        )
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    # gain is (c, h); broadcast to (h, 1, c) against (h, w, c) images.
    g = gain.T[:, None, :]
    base = amb_lin + g * sig_lin
    return np.clip(np.power(base, 1.0 / gamma), 0.0, 1.0)


def compose_backward_linearized(
    amb_lin: np.ndarray,
    sig_lin: np.ndarray,
    gain: np.ndarray,
    gamma: float,
    upstream: np.ndarray,
) -> np.ndarray:
    """Gradient of :func:`compose_linearized` w.r.t. gain (channels x rows).

    Pixels whose blended linear value sits at the zero floor get no
    gradient (the fractional-power derivative diverges there and the
    output is pinned by the clamp anyway).
    """
    if upstream.shape != amb_lin.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match {amb_lin.shape}")
    gain = np.asarray(gain, dtype=np.float64)
    g = gain.T[:, None, :]
    base = amb_lin + g * sig_lin
    safe = np.clip(base, _GRAD_FLOOR, None)
    dbase = upstream * (1.0 / gamma) * np.power(safe, 1.0 / gamma - 1.0)
    dbase[base <= _GRAD_FLOOR] = 0.0
    # d base / d gain[ch][y] = sig_lin[y, x, ch]; sum over columns.
    return np.einsum("ywc,ywc->cy", dbase, sig_lin)


def render(
    scene: ScenePair, signal: LightSignal, delta: int, timings: CameraTimings
) -> np.ndarray:
    """Simulate the captured frame for one waveform phase.

    Equivalent to compose(scene, row_gain(signal, delta, kernel), gamma)
    with the kernel and gamma taken from the timings.
    """
    _check_scene_timings(scene, timings)
    kernel = build_shutter_kernel(timings)
    gain = row_gain_values(signal.values, timings.rows, delta, kernel)
    return compose(scene, gain, timings.gamma)


def render_backward(
    scene: ScenePair,
    signal: LightSignal,
    delta: int,
    timings: CameraTimings,
    upstream: np.ndarray,
) -> np.ndarray:
    """Exact reverse-mode gradient of :func:`render` w.r.t. the signal values."""
    _check_scene_timings(scene, timings)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != scene.ambient.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match image shape {scene.ambient.shape}"
        )
    kernel = build_shutter_kernel(timings)
    amb_lin, sig_lin = linearize_pair(scene, timings.gamma)
    gain = row_gain_values(signal.values, timings.rows, delta, kernel)
    dgain = compose_backward_linearized(amb_lin, sig_lin, gain, timings.gamma, upstream)
    return row_gain_backward(dgain, signal.length, delta, kernel)


def _check_scene_timings(scene: ScenePair, timings: CameraTimings) -> None:
    if scene.rows != timings.rows or scene.cols != timings.cols:
        raise ValueError(
            f"scene is {scene.rows}x{scene.cols} but timings expect "
            f"{timings.rows}x{timings.cols}"
        )
