"""Naive forecasting baselines.

These are the yardsticks trained models must beat. They work directly on
window arrays so the caller decides the scale (the acceptance suite feeds
standardized windows and compares normalized MSE).
"""
from __future__ import annotations

import numpy as np


def repeat_last(window_input: np.ndarray, horizon: int) -> np.ndarray:
    """Hold the last observed row flat across the horizon. [T,D] -> [H,D]."""
    x = np.asarray(window_input, dtype=np.float64)
    return np.repeat(x[-1:, :], horizon, axis=0)


def seasonal_naive(window_input: np.ndarray, horizon: int, period: int) -> np.ndarray:
    """Repeat the last full season: step h copies input[T - period + (h mod period)]."""
    x = np.asarray(window_input, dtype=np.float64)
    t_len = x.shape[0]
    if period <= 0 or period > t_len:
        raise ValueError(f"seasonal period {period} outside 1..{t_len}")
    rows = t_len - period + (np.arange(horizon) % period)
    return x[rows]


def baseline_mse(inputs: np.ndarray, targets: np.ndarray, kind: str = "repeat_last",
                 period: int | None = None) -> float:
    """Mean squared error of a naive baseline over stacked windows.

    inputs: [W, T, D], targets: [W, H, D]; same scale on both.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    horizon = targets.shape[1]
    err = 0.0
    for w in range(inputs.shape[0]):
        if kind == "repeat_last":
            pred = repeat_last(inputs[w], horizon)
        elif kind == "seasonal_naive":
            pred = seasonal_naive(inputs[w], horizon, int(period))
        else:
            raise ValueError(f"unknown baseline {kind!r}")
        err += float(((pred - targets[w]) ** 2).mean())
    return err / inputs.shape[0]
