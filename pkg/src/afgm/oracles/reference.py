"""Straight-line reimplementation of the full forecaster forward pass.

Written against the mathematical definition only: plain numpy, explicit
loops, no imports from the production modules, no autodiff. Tests compare
the production forward (which goes through the tensor graph, batched engine
and variant dispatch) against this oracle; agreement within 1e-9 on random
parameters is the evidence that the production plumbing implements the same
function.

Parameter dict keys mirror the production inventory:
  norm.mean [D], norm.std [D]
  encoder.conv_kernel [k,D,D], encoder.alpha_raw (), encoder.proj{P}.weight
  [P,V], encoder.proj{P}.bias [V]         (interactive encoder)
  encoder.linear.weight [T,M*V], encoder.linear.bias [M*V]   (linear encoder)
  block{i}.adapter.{w1,b1,w2,b2}          (dynamic omega)
  block{i}.delta_omega [V]                (fixed omega)
  block{i}.scan.{w_b,c_amp,c_phase,d_u,d_y,w_g_amp,w_g_u,w_g_y,
                 m_time_u,m_time_z,m_fre_u,m_fre_z}          (gated core)
  block{i}.scan.{m_time_u,m_time_z,w_b,c_out,d_skip}         (plain core)
  head.weight [M*V,H], head.bias [H]

cfg keys: T, H, D, V, S, blocks, patch_lengths (list), conv_width,
encoder, core, spectral, omega_mode.
"""
from __future__ import annotations

import math

import numpy as np

AMP_EPS = 1e-12
PHASE_EPS = 1e-12


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def patch_indices(t_len: int, patch_len: int) -> list[np.ndarray]:
    """Row indices of each patch after left-replicate padding to a multiple."""
    q = math.ceil(t_len / patch_len)
    pad = q * patch_len - t_len
    out = []
    for j in range(q):
        rows = np.arange(j * patch_len, (j + 1) * patch_len) - pad
        out.append(np.maximum(rows, 0))
    return out


def conv_replicate(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """out[t,d] = sum_{j,e} kernel[j,e,d] * x_pad[t+j-k//2, e], replicate pad."""
    t_len, d = x.shape
    k = kernel.shape[0]
    pad = k // 2
    out = np.zeros((t_len, kernel.shape[2]))
    for t in range(t_len):
        for j in range(k):
            src = min(max(t + j - pad, 0), t_len - 1)
            for dd in range(kernel.shape[2]):
                for e in range(d):
                    out[t, dd] += kernel[j, e, dd] * x[src, e]
    return out


def encode(xn: np.ndarray, params: dict, cfg: dict) -> np.ndarray:
    """Normalized input [T,D] -> embedded patches [D, M, V]."""
    t_len, d = xn.shape
    v = cfg["V"]
    if cfg["encoder"] == "linear":
        w = params["encoder.linear.weight"]
        b = params["encoder.linear.bias"]
        m_total = w.shape[1] // v
        u = np.empty((d, m_total, v))
        for ch in range(d):
            u[ch] = (xn[:, ch] @ w + b).reshape(m_total, v)
        return u
    kernel = params["encoder.conv_kernel"]
    alpha = _sigmoid(params["encoder.alpha_raw"])
    mixed = conv_replicate(xn, kernel)
    blend = alpha * mixed + (1.0 - alpha) * xn
    scales = [p for p in cfg["patch_lengths"] if p <= t_len]
    chunks = []
    for p_len in scales:
        w = params[f"encoder.proj{p_len}.weight"]
        b = params[f"encoder.proj{p_len}.bias"]
        for rows in patch_indices(t_len, p_len):
            patch = blend[rows].T            # [D, P] channel-major
            chunks.append(patch @ w + b)     # [D, V]
    u = np.stack(chunks, axis=1)             # [D, M, V]
    return u


def omega_for(u_d: np.ndarray, params: dict, cfg: dict, block: int) -> np.ndarray:
    v = cfg["V"]
    base = 2.0 * np.pi * np.arange(v) / v
    if cfg["omega_mode"] == "fixed":
        return base + params[f"block{block}.delta_omega"]
    w1 = params[f"block{block}.adapter.w1"]
    b1 = params[f"block{block}.adapter.b1"]
    w2 = params[f"block{block}.adapter.w2"]
    b2 = params[f"block{block}.adapter.b2"]
    u_bar = u_d.mean(axis=0)
    hidden = np.maximum(w1.T @ u_bar + b1, 0.0)
    return base + (w2.T @ hidden + b2)


def scan_channel(u_d: np.ndarray, omega: np.ndarray, p: dict,
                 spectral: str = "amp_only") -> np.ndarray:
    """Gated oscillator scan for one channel, real arithmetic. [M,V] -> [M,V]."""
    m_steps, v = u_d.shape
    s = p["w_b"].shape[0]
    f_re = np.zeros((s, v))
    f_im = np.zeros((s, v))
    y_prev = np.zeros((s, v))
    z_prev = np.zeros(v)
    z_rows = np.empty((m_steps, v))
    for m in range(1, m_steps + 1):
        u = u_d[m - 1]
        a_time = _sigmoid(p["m_time_u"] @ u + p["m_time_z"] @ z_prev)
        a_fre = _sigmoid(p["m_fre_u"] @ u + p["m_fre_z"] @ z_prev)
        a_full = np.outer(a_fre, a_time)
        b = p["w_b"] @ u
        f_re = a_full * f_re + np.outer(b, np.cos(omega * m))
        f_im = a_full * f_im + np.outer(b, np.sin(omega * m))
        amp = np.sqrt(f_re ** 2 + f_im ** 2 + AMP_EPS)
        if spectral == "amp_only":
            first = p["c_amp"] @ amp
        else:
            den = np.where(f_re >= 0.0, f_re + PHASE_EPS, f_re - PHASE_EPS)
            phase = np.arctan(f_im / den)
            if spectral == "amp_phase":
                first = p["c_amp"] @ amp + p["c_phase"] @ phase
            else:
                first = p["c_phase"] @ phase
        y = first + np.outer(p["d_u"], u) + p["d_y"] @ y_prev
        g = _sigmoid(p["w_g_amp"] @ amp + np.outer(p["w_g_u"], u)
                     + p["w_g_y"] @ y_prev)
        z = (g * y).sum(axis=0)
        z_rows[m - 1] = z
        y_prev, z_prev = y, z
    return z_rows


def plain_scan_channel(u_d: np.ndarray, p: dict) -> np.ndarray:
    """Time-gated V-dim recurrence, amplitude path removed. [M,V] -> [M,V]."""
    m_steps, v = u_d.shape
    h = np.zeros(v)
    z_prev = np.zeros(v)
    z_rows = np.empty((m_steps, v))
    for m in range(m_steps):
        u = u_d[m]
        a_time = _sigmoid(p["m_time_u"] @ u + p["m_time_z"] @ z_prev)
        b = p["w_b"] @ u
        h = a_time * h + b
        z = p["c_out"] * h + p["d_skip"] * u
        z_rows[m] = z
        z_prev = z
    return z_rows


def _block_params(params: dict, block: int) -> dict:
    prefix = f"block{block}.scan."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def forward_normalized(xn: np.ndarray, params: dict, cfg: dict) -> np.ndarray:
    """Normalized input [T,D] -> normalized prediction [H,D]."""
    u = encode(xn, params, cfg)           # [D, M, V]
    d, m_total, v = u.shape
    for i in range(cfg["blocks"]):
        p = _block_params(params, i)
        z = np.empty_like(u)
        for ch in range(d):
            if cfg["core"] == "plain_ssm":
                z[ch] = plain_scan_channel(u[ch], p)
            else:
                omega = omega_for(u[ch], params, cfg, i)
                z[ch] = scan_channel(u[ch], omega, p, cfg["spectral"])
        u = u + z                          # residual wrap
    w = params["head.weight"]
    b = params["head.bias"]
    out = np.empty((cfg["H"], d))
    for ch in range(d):
        out[:, ch] = u[ch].reshape(m_total * v) @ w + b
    return out


def forward(x_raw: np.ndarray, params: dict, cfg: dict) -> np.ndarray:
    """Raw input [T,D] -> raw prediction [H,D] (normalize, core, denormalize)."""
    mean = params["norm.mean"]
    std = params["norm.std"]
    xn = (x_raw - mean) / std
    return forward_normalized(xn, params, cfg) * std + mean
