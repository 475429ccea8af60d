"""Finite-difference utilities for verifying analytic backward passes.

The checks here are intentionally independent of the backward code: they only
call forward functions, perturbing one input element at a time with central
differences. Use float64 inputs; float32 has too little headroom for h=1e-5.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                       h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar-valued ``f`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor).

    ``floor`` keeps near-zero entries from blowing up the ratio; with h=1e-5
    central differences carry O(1e-11) absolute noise.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                   analytic: np.ndarray, h: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Return the max relative error between ``analytic`` and central FD."""
    numeric = numerical_gradient(f, x, h=h)
    return max_relative_error(analytic, numeric, floor=floor)
