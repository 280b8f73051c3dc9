"""Central finite-difference gradients.

The workhorse for every gradient check in the test suite: second-order
central differences, elementwise, in float64. Error decays as O(h^2) on
smooth functions, so halving h should shrink the error by about 4x; one of
the tests asserts exactly that.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def fd_gradient(fn: Callable[[np.ndarray], float], x0: np.ndarray,
                h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar fn at x0, one central difference per element."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    xw = x0.copy()
    xf = xw.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = float(fn(xw))
        xf[i] = orig - h
        fm = float(fn(xw))
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def fd_scalar(fn: Callable[[float], float], x: float, h: float = 1e-5) -> float:
    return (float(fn(x + h)) - float(fn(x - h))) / (2.0 * h)


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps the ratio meaningful where the true gradient is ~0 and
    central differences bottom out in cancellation noise.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom
