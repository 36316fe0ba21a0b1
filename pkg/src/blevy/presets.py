"""Named test functionals used across estimators, solvers, and the CLI.

Everything here is a module-level function or a partial of one, so the
functionals can cross process boundaries when estimators run with workers > 1.
"""

from __future__ import annotations

from functools import partial

import numpy as np


def triangle(x):
    """Tent function on [-1, 1] with unit peak."""
    return np.maximum(1.0 - np.abs(np.asarray(x, dtype=float)), 0.0)


def _indicator(x, a, b):
    x = np.asarray(x, dtype=float)
    return ((x >= a) & (x <= b)).astype(float)


def indicator(a: float, b: float):
    """Indicator of the interval [a, b]."""
    if not b > a:
        raise ValueError("indicator needs a < b")
    return partial(_indicator, a=a, b=b)


def _constant(x, theta):
    return np.full_like(np.asarray(x, dtype=float), theta)


def constant(theta: float):
    """Spatially flat function with value theta."""
    if theta < 0:
        raise ValueError("constant preset must be nonnegative")
    return partial(_constant, theta=theta)


def _scaled(x, fn, amplitude):
    return amplitude * fn(x)


def scaled(fn, amplitude: float):
    """amplitude * fn, keeping picklability of the wrapped preset."""
    return partial(_scaled, fn=fn, amplitude=amplitude)


PRESETS = {
    "triangle": "tent function on [-1, 1], unit peak",
    "indicator(a, b)": "indicator of the interval [a, b]",
    "constant(theta)": "flat function with value theta",
    "scaled(fn, amplitude)": "amplitude * fn",
}
