"""Adversarial rolling-shutter light signal toolkit.

A modulated light source flickering faster than a camera's row readout
produces horizontal striping on rolling-shutter sensors.  This package
synthesizes striping waveforms that steer an image classifier toward a
chosen class, simulates how a camera captures them, evaluates robustness
over viewpoint/lighting/phase variation, and compiles the waveforms into
microcontroller PWM schedules.
"""

__version__ = "0.1.0"

from lightstripe.camera import (
    CameraTimings,
    LightSignal,
    ShutterKernel,
    build_shutter_kernel,
    reparameterize,
    reparameterize_backward,
    signal_length,
)
from lightstripe.render import ScenePair, compose, cyclic_shift, render, render_backward, row_gain

__all__ = [
    "CameraTimings",
    "LightSignal",
    "ShutterKernel",
    "ScenePair",
    "build_shutter_kernel",
    "compose",
    "cyclic_shift",
    "render",
    "render_backward",
    "reparameterize",
    "reparameterize_backward",
    "row_gain",
    "signal_length",
]
