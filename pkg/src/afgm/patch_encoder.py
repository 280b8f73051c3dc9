"""Multi-scale patch encoding with a learned channel-interaction blend.

The input series [T, D] is first mixed across channels by a width-k
convolution and blended with the raw series through a single learned gate
alpha = sigmoid(alpha_raw):

    x_blend = alpha * conv(x) + (1 - alpha) * x

The blend is then cut into non-overlapping patches at several lengths. Each
scale left-pads by replicating the first row up to a whole multiple of the
patch length, so the most recent rows always fall on a clean patch boundary.
Every patch is transposed to channel-major [D, P] and projected to the model
width V by a per-scale linear map; patches from all scales are concatenated
along the patch axis, giving U in R^{D x M x V} with M = sum of per-scale
counts, ordered by the scale list then by time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import (Tensor, add, conv1d, gather_rows, matmul, mul, reshape,
                       sigmoid, stack, sub, transpose2d)


@dataclass
class ScaleSpec:
    length: int
    stride: int          # equal to length: non-overlapping
    count: int           # patches at this scale
    pad: int             # replicated rows on the left
    indices: list = field(repr=False, default_factory=list)


@dataclass
class PatchPlan:
    t_len: int
    scales: list
    dropped: list

    @property
    def total_patches(self) -> int:
        return sum(s.count for s in self.scales)


@dataclass
class EncoderParams:
    """Tensors for the interactive encoder; projections keyed by patch length."""
    conv_kernel: Tensor                  # [k, D, D]
    alpha_raw: Tensor                    # scalar
    projections: dict                    # {P: (weight [P,V], bias [V])}


def make_plan(t_len: int, patch_lengths) -> PatchPlan:
    """Resolve patch scales against an input length.

    Scales longer than the input are dropped with a warning; at least one
    must survive. Each scale pads on the left by replicating row 0 so that
    count = ceil(T / P) and the last patch ends exactly at the last row.
    """
    if t_len < 1:
        raise ConfigError(f"input length must be positive, got {t_len}")
    lengths = list(patch_lengths)
    if not lengths:
        raise ConfigError("patch_lengths must not be empty")
    scales, dropped = [], []
    for p_len in lengths:
        p_len = int(p_len)
        if p_len < 1:
            raise ConfigError(f"patch length must be positive, got {p_len}")
        if p_len > t_len:
            dropped.append(p_len)
            warnings.warn(
                f"patch length {p_len} exceeds input length {t_len}; dropped",
                UserWarning, stacklevel=2)
            continue
        count = math.ceil(t_len / p_len)
        pad = count * p_len - t_len
        idx = [np.maximum(np.arange(j * p_len, (j + 1) * p_len) - pad, 0)
               for j in range(count)]
        scales.append(ScaleSpec(p_len, p_len, count, pad, idx))
    if not scales:
        raise ConfigError(
            f"all patch lengths {lengths} exceed input length {t_len}")
    return PatchPlan(t_len, scales, dropped)


def interaction_encode(x: Tensor, params: EncoderParams) -> Tensor:
    """Blend of the channel-mixing convolution with the raw series. [T,D]->[T,D]."""
    if x.ndim != 2:
        raise DimensionError(f"interaction_encode: need [T,D], got {x.shape}")
    alpha = sigmoid(params.alpha_raw)
    mixed = conv1d(x, params.conv_kernel)
    return add(mul(alpha, mixed), mul(sub(1.0, alpha), x))


def partition(x_blend: Tensor, plan: PatchPlan, scale_index: int) -> list:
    """Channel-major patches [D, P] for one scale, oldest first."""
    spec = plan.scales[scale_index]
    if x_blend.shape[0] != plan.t_len:
        raise DimensionError(
            f"partition: series length {x_blend.shape} does not match plan T={plan.t_len}")
    return [transpose2d(gather_rows(x_blend, idx)) for idx in spec.indices]


def embed_steps(x: Tensor, params: EncoderParams, plan: PatchPlan) -> list:
    """Full encoder for one window: list of M patch embeddings [D, V]."""
    blend = interaction_encode(x, params)
    out = []
    for spec in plan.scales:
        weight, bias = params.projections[spec.length]
        for idx in spec.indices:
            patch = transpose2d(gather_rows(blend, idx))     # [D, P]
            out.append(add(matmul(patch, weight), bias))     # [D, V]
    return out


def embed(x: Tensor, params: EncoderParams, plan: PatchPlan) -> Tensor:
    """Encoder output as one tensor U [D, M, V] (patch axis in plan order)."""
    return stack(embed_steps(x, params, plan), axis=1)


def linear_encode_steps(x: Tensor, weight: Tensor, bias: Tensor,
                        m_total: int, v: int) -> list:
    """Ablation encoder: one shared T -> M*V map per channel, no interaction.

    x [T,D] -> list of M tensors [D, V] (same layout as embed_steps).
    """
    d = x.shape[1]
    flat = add(matmul(transpose2d(x), weight), bias)         # [D, M*V]
    rows = reshape(flat, (d * m_total, v))                   # row ch*M+m
    return [gather_rows(rows, np.arange(d) * m_total + m) for m in range(m_total)]
