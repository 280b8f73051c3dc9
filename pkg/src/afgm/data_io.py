"""CSV ingestion, chronological splits, standardization, sliding windows.

The on-disk format is a plain CSV with a header row: first column is a
timestamp string, every other column one numeric variable. Rows are taken
to be in chronological order.

Splits are contiguous and chronological. Validation and test windows may
reach back up to T rows into the preceding split for their input slice
(standard border handling), but every target row stays strictly inside the
split that owns the window, so no forecast target leaks across a boundary.

Standardization is z-score per variable with mean and population std
computed from the training rows only; windows() returns standardized
copies and never mutates the stored raw values. Metrics (MSE, MAE) are
means over all windows, horizon steps, and variables on that standardized
scale.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, IngestionError

# Hourly files following the 12/4/4-month convention: fixed row counts.
ETT_TRAIN_ROWS = 12 * 30 * 24
ETT_EVAL_ROWS = 4 * 30 * 24
RATIOS = (0.7, 0.1, 0.2)
SCHEMES = ("auto", "ett_standard", "ratio")


@dataclass(frozen=True)
class Dataset:
    name: str                 # file stem, used by the auto split scheme
    timestamps: tuple
    values: np.ndarray        # [N, D] float64, treated as read-only
    columns: tuple
    train_end: int | None = None
    val_end: int | None = None
    mean: np.ndarray | None = None   # [D], train rows only
    std: np.ndarray | None = None    # [D], population (ddof=0)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def require_split(self) -> None:
        if self.train_end is None:
            raise ConfigError("dataset has no split bounds yet; call split() first")


def load_csv(path) -> Dataset:
    """Parse a timestamped numeric CSV. Errors carry 1-based row numbers."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2:
        raise IngestionError(
            f"{path}: header must have a timestamp column plus at least one "
            f"variable, got {len(header)} column(s)")
    columns = tuple(header[1:])
    width = len(header)
    stamps = []
    data = np.empty((len(rows) - 1, width - 1), dtype=np.float64)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise IngestionError(
                f"{path}: row {r} has {len(row)} cells, header has {width}")
        stamps.append(row[0])
        for c, cell in enumerate(row[1:], start=1):
            try:
                data[r - 2, c - 1] = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: row {r}, column {header[c]!r} ({c + 1}): "
                    f"could not parse {cell!r} as a number") from None
    if data.shape[0] == 0:
        raise IngestionError(f"{path} has a header but no data rows")
    if not np.isfinite(data).all():
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise IngestionError(
            f"{path}: row {int(r) + 2}, column {columns[int(c)]!r}: "
            f"non-finite value")
    data.setflags(write=False)
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(name=stem, timestamps=tuple(stamps), values=data,
                   columns=columns)


def _pick_scheme(ds: Dataset, scheme: str) -> str:
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown split scheme {scheme!r}; known {SCHEMES}")
    if scheme != "auto":
        return scheme
    return "ett_standard" if ds.name.startswith("ETT") else "ratio"


def split(ds: Dataset, scheme: str = "auto") -> Dataset:
    """Attach chronological split bounds and train-split statistics."""
    picked = _pick_scheme(ds, scheme)
    n = ds.n_rows
    if picked == "ett_standard":
        need = ETT_TRAIN_ROWS + 2 * ETT_EVAL_ROWS
        if n < need:
            raise ConfigError(
                f"ett_standard split needs at least {need} rows, "
                f"{ds.name} has {n}")
        train_end = ETT_TRAIN_ROWS
        val_end = ETT_TRAIN_ROWS + ETT_EVAL_ROWS
    else:
        train_end = int(RATIOS[0] * n)
        val_end = train_end + int(RATIOS[1] * n)
        if train_end < 1 or val_end <= train_end or val_end >= n:
            raise ConfigError(f"dataset too short to split: {n} rows")
    train_rows = ds.values[:train_end]
    mean = train_rows.mean(axis=0)
    std = train_rows.std(axis=0)      # population std over the train rows
    flat = np.flatnonzero(std <= 0)
    if flat.size:
        raise ConfigError(
            f"column {ds.columns[int(flat[0])]!r} is constant over the "
            f"training split; cannot standardize")
    return replace(ds, train_end=train_end, val_end=val_end, mean=mean, std=std)


def split_ranges(ds: Dataset) -> dict:
    """Target-row ranges per split: {'train'|'val'|'test': (start, end)}."""
    ds.require_split()
    return {"train": (0, ds.train_end),
            "val": (ds.train_end, ds.val_end),
            "test": (ds.val_end, ds.n_rows)}


@dataclass(frozen=True)
class WindowSet:
    """Standardized stride-1 sliding windows over one split."""
    split: str
    inputs: np.ndarray       # [W, T, D]
    targets: np.ndarray      # [W, H, D]
    origins: np.ndarray      # [W] raw-row index of each window's first input

    @property
    def count(self) -> int:
        return self.inputs.shape[0]


def windows(ds: Dataset, which: str, t_len: int, horizon: int) -> WindowSet:
    """Build every window whose target rows live inside the chosen split.

    Window i covers input rows [i, i+T) and target rows [i+T, i+T+H). For
    val/test the input may start up to T rows before the split so that the
    first targetable row of the split is actually forecast.
    """
    ranges = split_ranges(ds)
    if which not in ranges:
        raise ConfigError(f"unknown split {which!r}; known {sorted(ranges)}")
    if t_len < 1 or horizon < 1:
        raise ConfigError(f"t_len/horizon must be positive, got {t_len}/{horizon}")
    start, end = ranges[which]
    lookback = 0 if which == "train" else min(t_len, start)
    first = start - lookback
    effective = end - first
    if effective < t_len + horizon:
        raise ConfigError(
            f"split {which!r} supports no window: effective length {effective} "
            f"< T+H = {t_len + horizon}")
    count = effective - t_len - horizon + 1
    norm = (ds.values - ds.mean) / ds.std
    inputs = np.empty((count, t_len, ds.n_vars))
    targets = np.empty((count, horizon, ds.n_vars))
    origins = np.empty(count, dtype=np.int64)
    for w in range(count):
        i = first + w
        t0 = i + t_len
        if not (start <= t0 and t0 + horizon <= end):
            raise ConfigError(
                f"internal: window {w} targets [{t0}, {t0 + horizon}) escape "
                f"split {which!r} [{start}, {end})")
        inputs[w] = norm[i:t0]
        targets[w] = norm[t0:t0 + horizon]
        origins[w] = i
    return WindowSet(split=which, inputs=inputs, targets=targets, origins=origins)


def metrics(preds: np.ndarray, targets: np.ndarray) -> dict:
    """MSE and MAE averaged over every element, standardized scale."""
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigError(f"metrics: shapes {p.shape} vs {t.shape}")
    diff = p - t
    return {"mse": float(np.mean(diff * diff)), "mae": float(np.mean(np.abs(diff)))}


def write_predictions_csv(path, ws: WindowSet, preds: np.ndarray,
                          ds: Dataset) -> None:
    """Export raw-scale forecasts as (window_origin, step, variable,
    prediction, target) rows."""
    p = np.asarray(preds, dtype=np.float64)
    if p.shape != ws.targets.shape:
        raise ConfigError(
            f"predictions {p.shape} do not match targets {ws.targets.shape}")
    raw_p = p * ds.std + ds.mean
    raw_t = ws.targets * ds.std + ds.mean
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f)
        out.writerow(["window_origin", "step", "variable", "prediction", "target"])
        for w in range(ws.count):
            for h in range(p.shape[1]):
                for d, name in enumerate(ds.columns):
                    out.writerow([int(ws.origins[w]), h, name,
                                  f"{raw_p[w, h, d]:.9g}", f"{raw_t[w, h, d]:.9g}"])
