"""Camera timing model, waveform representation, and optimizer reparameterization.

A rolling-shutter camera reads one sensor row every ``readout_us``
microseconds while each row integrates light for ``exposure_us``.  The
attacker waveform is held constant for one readout interval per index
(changing faster gains nothing: all intensity variation within a readout
is averaged by the sensor), so a waveform is a periodic vector of
per-channel intensities in [0, 1] with one slot per readout interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Ratios this close to an integer are treated as exact, so that e.g.
# exposure_us = 3 * readout_us never spills into a fourth slot through
# floating-point dust.
_RATIO_SNAP = 1e-9


@dataclass(frozen=True)
class CameraTimings:
    """Per-row timing and response parameters of the modeled camera.

    readout_us is the *effective* row readout time: if the sensor output is
    downsampled k-fold before reaching the classifier, k physical rows
    collapse into one model row and the effective readout is k times the
    physical one.  The whole pipeline works at model-input resolution.
    """

    readout_us: float
    exposure_us: float
    rows: int
    cols: int
    gamma: float = 2.2

    def __post_init__(self):
        if not self.readout_us > 0:
            raise ValueError(f"readout_us must be > 0, got {self.readout_us}")
        if not self.exposure_us >= self.readout_us:
            raise ValueError(
                f"exposure_us ({self.exposure_us}) must be >= readout_us ({self.readout_us})"
            )
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"rows and cols must be >= 1, got {self.rows}x{self.cols}")


def _exposure_ratio(timings: CameraTimings) -> float:
    """exposure/readout with near-integer values snapped exactly."""
    q = timings.exposure_us / timings.readout_us
    nearest = round(q)
    if nearest >= 1 and abs(q - nearest) < _RATIO_SNAP:
        return float(nearest)
    return q


def exposure_slots(timings: CameraTimings) -> int:
    """Number of waveform slots an exposure window spans (ceil of the ratio)."""
    return int(math.ceil(_exposure_ratio(timings)))


def signal_length(timings: CameraTimings) -> int:
    """Waveform length in slots: one per image row plus the exposure span.

    The waveform period equals the frame capture time (rows * readout +
    exposure), so every row sees exactly one full exposure window without
    the window wrapping around mid-frame.
    """
    return timings.rows + exposure_slots(timings)


@dataclass(frozen=True)
class ShutterKernel:
    """Box filter turning waveform slots into per-row time averages.

    Full slots weigh readout/exposure each; when exposure is not an integer
    multiple of readout, the final slot is weighted by its fractional
    coverage so the kernel is the exact time average of the exposure
    window.  Weights sum to 1.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("kernel weights must be a non-empty 1-D vector")
        if np.any(w < 0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"kernel weights must sum to 1, got {w.sum()!r}")

    @property
    def window(self) -> int:
        return int(self.weights.size)


def build_shutter_kernel(timings: CameraTimings) -> ShutterKernel:
    """Construct the exposure box filter for the given timings."""
    q = _exposure_ratio(timings)
    window = int(math.ceil(q))
    full = 1.0 / q  # readout/exposure
    weights = np.full(window, full, dtype=np.float64)
    frac = q - math.floor(q)
    if frac > 0.0:
        weights[-1] = frac * full
    return ShutterKernel(weights=weights)


def reparameterize(v: np.ndarray) -> np.ndarray:
    """Map unconstrained optimizer variables to intensities via (tanh(v)+1)/2.

    Monotone, smooth, and keeps every intensity inside [0, 1] without
    projection, so the optimizer can take unconstrained steps.
    """
    return 0.5 * (np.tanh(np.asarray(v, dtype=np.float64)) + 1.0)


def reparameterize_backward(v: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Chain-rule factor of :func:`reparameterize`: upstream * (1 - tanh(v)^2)/2."""
    v = np.asarray(v, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != v.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match v shape {v.shape}")
    t = np.tanh(v)
    return upstream * 0.5 * (1.0 - t * t)


@dataclass(frozen=True)
class LightSignal:
    """Discretized periodic attacker waveform, one row per color channel.

    values[ch][i] is the intensity (0 = off, 1 = full) held during slot i;
    the waveform repeats with period ``length`` slots of ``readout_us``
    microseconds each.
    """

    values: np.ndarray
    timings: CameraTimings

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError(f"signal values must be 2-D (channels x length), got {vals.shape}")
        expected = signal_length(self.timings)
        if vals.shape[1] != expected:
            raise ValueError(
                f"signal length {vals.shape[1]} does not match timings "
                f"(rows + exposure slots = {expected})"
            )
        if np.any(vals < 0.0) or np.any(vals > 1.0) or not np.all(np.isfinite(vals)):
            raise ValueError("signal values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def length(self) -> int:
        return int(self.values.shape[1])


def constant_signal(timings: CameraTimings, value: float = 1.0, channels: int = 3) -> LightSignal:
    """Steady illumination at the given intensity (value=1 means lights full on)."""
    vals = np.full((channels, signal_length(timings)), float(value), dtype=np.float64)
    return LightSignal(values=vals, timings=timings)


@dataclass
class AdamState:
    """ADAM optimizer state over the unconstrained signal variables.

    Owned and mutated by a single optimization loop; ``step`` applies one
    descent update in place and returns the new variables.
    """

    v: np.ndarray
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        self.adam_m = np.zeros_like(self.v)
        self.adam_v = np.zeros_like(self.v)
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")

    def step(self, grad: np.ndarray) -> np.ndarray:
        if grad.shape != self.v.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match {self.v.shape}")
        self.step_count += 1
        self.adam_m = self.beta1 * self.adam_m + (1.0 - self.beta1) * grad
        self.adam_v = self.beta2 * self.adam_v + (1.0 - self.beta2) * grad * grad
        m_hat = self.adam_m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.adam_v / (1.0 - self.beta2 ** self.step_count)
        self.v = self.v - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return self.v
