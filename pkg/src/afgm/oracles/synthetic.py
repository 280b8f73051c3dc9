"""Deterministic synthetic hourly series shaped like the standard ETT files.

The sandbox this package is developed in has no network access to fetch the
real ETTh1 csv, so the desk-scale acceptance runs use this stand-in: 17420
hourly rows, 7 variables, built from shared daily/weekly harmonics with
channel-specific lags and weights, a slow drift, amplitude modulation and
AR(1) noise. Cross-channel lags mean a channel-mixing encoder has real
signal to exploit, and the strong periodicity means a flat repeat-last
forecast is clearly beatable. Fixed Philox seeding makes the file bytes
reproducible.
"""
from __future__ import annotations

import datetime as dt
import os

import numpy as np

from ..rng import generator

N_ROWS = 17420
N_VARS = 7


def ett_like_values(n_rows: int = N_ROWS, n_vars: int = N_VARS,
                    seed: int = 77) -> np.ndarray:
    rng = generator(seed, "data")
    t = np.arange(n_rows, dtype=np.float64)
    day = 2.0 * np.pi * t / 24.0
    week = 2.0 * np.pi * t / 168.0
    # Three shared latent signals with slowly wandering amplitude.
    amp_mod = 1.0 + 0.3 * np.sin(2.0 * np.pi * t / 2000.0)
    latents = np.stack([
        amp_mod * np.sin(day),
        np.cos(day * 2.0 + 0.7),
        np.sin(week + 0.3),
    ])
    lags = rng.integers(0, 12, size=(n_vars, latents.shape[0]))
    weights = rng.uniform(-1.5, 1.5, size=(n_vars, latents.shape[0]))
    drift = rng.uniform(-0.5, 0.5, size=n_vars)
    scales = rng.uniform(0.5, 6.0, size=n_vars)
    offsets = rng.uniform(-5.0, 15.0, size=n_vars)

    values = np.empty((n_rows, n_vars))
    for j in range(n_vars):
        sig = np.zeros(n_rows)
        for k in range(latents.shape[0]):
            sig += weights[j, k] * np.roll(latents[k], int(lags[j, k]))
        noise = np.empty(n_rows)
        eps = rng.normal(0.0, 0.25, size=n_rows)
        acc = 0.0
        for i in range(n_rows):
            acc = 0.85 * acc + eps[i]
            noise[i] = acc
        trend = drift[j] * t / n_rows
        values[:, j] = offsets[j] + scales[j] * (sig + trend) + noise
    return values


def write_ett_like_csv(path: str, n_rows: int = N_ROWS, n_vars: int = N_VARS,
                       seed: int = 77) -> str:
    """Write the stand-in csv (header: date,v0..v6; hourly timestamps)."""
    values = ett_like_values(n_rows, n_vars, seed)
    start = dt.datetime(2016, 7, 1, 0, 0)
    names = [f"v{j}" for j in range(n_vars)]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(names) + "\n")
        for i in range(n_rows):
            stamp = (start + dt.timedelta(hours=i)).strftime("%Y-%m-%d %H:%M:%S")
            row = ",".join(f"{values[i, j]:.6f}" for j in range(n_vars))
            fh.write(f"{stamp},{row}\n")
    return path
