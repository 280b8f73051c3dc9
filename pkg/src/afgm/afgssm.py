"""Frequency-gated state-space scan.

Each channel keeps a bank of S damped oscillators per feature lane v. At
step m the bank decays under a rank-1 gate A_m = outer(A_fre, A_time) built
from the current input u_m and the previous readout z_{m-1}, and receives
the projected input B_m modulated by cos/sin of per-lane angular
frequencies:

    f_re <- A_m (.) f_re + outer(B_m, cos(omega * m))
    f_im <- A_m (.) f_im + outer(B_m, sin(omega * m))

The amplitude sqrt(f_re^2 + f_im^2 + eps) drives both the output mix y_m and
the exposure gate g_m; the channel readout is z_m = sum_s (g_m (.) y_m).
Frequencies are omega = omega_base + delta, with delta produced per channel
by a small bottleneck adapter over the mean patch embedding (or, in the
fixed mode, a learned constant).

Everything here runs batched over a leading axis N (window*channel pairs);
the single-sample entry points wrap the same engine with N = 1, so there is
exactly one implementation of the recurrence.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, ConfigError
from .numerics import (EPS_GUARD, Tensor, add, arctan_ratio, constant, cos,
                       gather_rows, matmul, mul, reduce_sum, relu, reshape,
                       sigmoid, sin, sqrt, square, stack, transpose2d)

SPECTRAL_MODES = ("amp_only", "amp_phase", "phase_only")


def bottleneck_width(v: int) -> int:
    """Adapter hidden width: a quarter of V, floored at 4."""
    return max(v // 4, 4)


def omega_base(v: int) -> np.ndarray:
    """Evenly spaced base angular frequencies, 2*pi*k/V for lane k."""
    return 2.0 * np.pi * np.arange(v, dtype=np.float64) / v


@dataclass
class AdapterParams:
    w1: Tensor      # [V, V_h]
    b1: Tensor      # [V_h]
    w2: Tensor      # [V_h, V]
    b2: Tensor      # [V]


@dataclass
class ScanParams:
    """Step-invariant parameters of one scan block (S rows, V lanes)."""
    w_b: Tensor                      # [S, V]
    d_u: Tensor                      # [S]
    d_y: Tensor                      # [S, S]
    w_g_amp: Tensor                  # [S, S]
    w_g_u: Tensor                    # [S]
    w_g_y: Tensor                    # [S, S]
    m_time_u: Tensor                 # [V, V]
    m_time_z: Tensor                 # [V, V]
    m_fre_u: Tensor                  # [S, V]
    m_fre_z: Tensor                  # [S, V]
    c_amp: Optional[Tensor] = None   # [S, S]; absent in phase_only
    c_phase: Optional[Tensor] = None  # [S, S]; present for phase variants

    @property
    def s_dim(self) -> int:
        return self.w_b.shape[0]

    @property
    def v_dim(self) -> int:
        return self.w_b.shape[1]


@dataclass
class PlainScanParams:
    """Time-only ablation core: V-dim state, no oscillators."""
    m_time_u: Tensor                 # [V, V]
    m_time_z: Tensor                 # [V, V]
    w_b: Tensor                      # [V, V] (S = V)
    c_out: Tensor                    # [V]
    d_skip: Tensor                   # [V]


@dataclass
class ScanState:
    """Batched recurrent state; leading axis is the batch."""
    f_re: Tensor    # [N, S, V]
    f_im: Tensor    # [N, S, V]
    y: Tensor       # [N, S, V]
    z: Tensor       # [N, V]


@dataclass
class FreqBasis:
    omega: Tensor   # [V]
    base: np.ndarray


def init_state(n: int, s: int, v: int) -> ScanState:
    return ScanState(
        f_re=constant(np.zeros((n, s, v))),
        f_im=constant(np.zeros((n, s, v))),
        y=constant(np.zeros((n, s, v))),
        z=constant(np.zeros((n, v))),
    )


def compute_amplitude(f_re: Tensor, f_im: Tensor) -> Tensor:
    """Oscillator magnitude with the 1e-12 floor inside the root."""
    return sqrt(add(add(square(f_re), square(f_im)), EPS_GUARD))


def compute_phase(f_re: Tensor, f_im: Tensor) -> Tensor:
    """Guarded arctan(f_im / f_re), in (-pi/2, pi/2)."""
    return arctan_ratio(f_im, f_re)


def _transposed(p: ScanParams) -> dict:
    return {
        "m_time_u": transpose2d(p.m_time_u),
        "m_time_z": transpose2d(p.m_time_z),
        "m_fre_u": transpose2d(p.m_fre_u),
        "m_fre_z": transpose2d(p.m_fre_z),
        "w_b": transpose2d(p.w_b),
    }


def _step(u: Tensor, m: int, omega: Tensor, state: ScanState, p: ScanParams,
          tr: dict, spectral: str) -> tuple:
    """One batched scan step; u [N,V], omega [N,V]. Order matters:

    gates (from u_m and z_{m-1}), input projection, oscillator update,
    amplitude, output mix (from y_{m-1}), exposure gate (from y_{m-1}),
    readout.
    """
    n, v = u.shape
    s = p.s_dim
    a_time = sigmoid(add(matmul(u, tr["m_time_u"]), matmul(state.z, tr["m_time_z"])))
    a_fre = sigmoid(add(matmul(u, tr["m_fre_u"]), matmul(state.z, tr["m_fre_z"])))
    a_full = matmul(reshape(a_fre, (n, s, 1)), reshape(a_time, (n, 1, v)))
    b = matmul(u, tr["w_b"])                                   # [N, S]
    theta = mul(omega, float(m))
    b_col = reshape(b, (n, s, 1))
    f_re = add(mul(a_full, state.f_re), matmul(b_col, reshape(cos(theta), (n, 1, v))))
    f_im = add(mul(a_full, state.f_im), matmul(b_col, reshape(sin(theta), (n, 1, v))))
    amp = compute_amplitude(f_re, f_im)
    if spectral == "amp_only":
        first = matmul(p.c_amp, amp)
    elif spectral == "amp_phase":
        first = add(matmul(p.c_amp, amp), matmul(p.c_phase, compute_phase(f_re, f_im)))
    elif spectral == "phase_only":
        first = matmul(p.c_phase, compute_phase(f_re, f_im))
    else:
        raise ConfigError(f"unknown spectral mode {spectral!r}; known {SPECTRAL_MODES}")
    u_row = reshape(u, (n, 1, v))
    y = add(add(first, matmul(reshape(p.d_u, (s, 1)), u_row)),
            matmul(p.d_y, state.y))
    g = sigmoid(add(add(matmul(p.w_g_amp, amp),
                        matmul(reshape(p.w_g_u, (s, 1)), u_row)),
                    matmul(p.w_g_y, state.y)))
    z = reduce_sum(mul(g, y), axis=1)                          # [N, V]
    return y, g, z, ScanState(f_re, f_im, y, z), a_full, amp


def scan_sequence(u_steps: list, omega: Tensor, p: ScanParams,
                  spectral: str = "amp_only", record: bool = False) -> tuple:
    """Run the scan over M steps (m = 1..M), batched.

    u_steps: list of [N, V] tensors; omega: [N, V]. Returns (z_steps, diag)
    where z_steps is a list of [N, V] readouts and diag (when record=True)
    holds per-step numpy copies of the gate A, amplitude, f planes and z.
    """
    if not u_steps:
        raise DimensionError("scan_sequence: empty step list")
    n, v = u_steps[0].shape
    tr = _transposed(p)
    state = init_state(n, p.s_dim, v)
    z_steps = []
    diag = {"a": [], "amp": [], "f_re": [], "f_im": [], "z": [], "y": [], "g": []} \
        if record else None
    for m, u in enumerate(u_steps, start=1):
        y, g, z, state, a_full, amp = _step(u, m, omega, state, p, tr, spectral)
        z_steps.append(z)
        if record:
            diag["a"].append(a_full.data.copy())
            diag["amp"].append(amp.data.copy())
            diag["f_re"].append(state.f_re.data.copy())
            diag["f_im"].append(state.f_im.data.copy())
            diag["y"].append(y.data.copy())
            diag["g"].append(g.data.copy())
            diag["z"].append(z.data.copy())
    return z_steps, diag


def plain_scan_sequence(u_steps: list, p: PlainScanParams) -> list:
    """Ablation recurrence h_m = A_time (.) h_{m-1} + B_m, readout per step.

    Same time gate as the full core (consuming z_{m-1}); output
    z_m = c_out (.) h_m + d_skip (.) u_m. Batched like scan_sequence.
    """
    n, v = u_steps[0].shape
    tr_u = transpose2d(p.m_time_u)
    tr_z = transpose2d(p.m_time_z)
    tr_b = transpose2d(p.w_b)
    h = constant(np.zeros((n, v)))
    z = constant(np.zeros((n, v)))
    z_steps = []
    for u in u_steps:
        a_time = sigmoid(add(matmul(u, tr_u), matmul(z, tr_z)))
        h = add(mul(a_time, h), matmul(u, tr_b))
        z = add(mul(p.c_out, h), mul(p.d_skip, u))
        z_steps.append(z)
    return z_steps


def adapt_frequency_rows(u_mean: Tensor, adapter: AdapterParams) -> Tensor:
    """Batched adapter: mean embeddings [N, V] -> omega [N, V]."""
    v = u_mean.shape[-1]
    hidden = relu(add(matmul(u_mean, adapter.w1), adapter.b1))
    delta = add(matmul(hidden, adapter.w2), adapter.b2)
    return add(delta, constant(omega_base(v)))


def adapt_frequency(u_d: Tensor, adapter: AdapterParams) -> FreqBasis:
    """Per-channel adapter over the patch mean. U_d [M, V] -> FreqBasis."""
    if u_d.ndim != 2:
        raise DimensionError(f"adapt_frequency: need [M,V], got {u_d.shape}")
    m_total, v = u_d.shape
    mean_row = mul(reduce_sum(u_d, axis=0), 1.0 / m_total)     # [V]
    omega = adapt_frequency_rows(reshape(mean_row, (1, v)), adapter)
    return FreqBasis(omega=reshape(omega, (v,)), base=omega_base(v))


def scan_step(u_m: Tensor, m: int, omega: Tensor, state: ScanState,
              p: ScanParams, spectral: str = "amp_only") -> tuple:
    """Single-sample step: u_m [V], omega [V], state with [S,V]/[V] fields.

    Returns (y_m [S,V], z_m [V], next_state). Thin wrapper over the batched
    engine with N = 1.
    """
    v = u_m.shape[0]
    s = p.s_dim
    batched = ScanState(
        f_re=reshape(state.f_re, (1, s, v)),
        f_im=reshape(state.f_im, (1, s, v)),
        y=reshape(state.y, (1, s, v)),
        z=reshape(state.z, (1, v)),
    )
    y, _, z, nxt, _, _ = _step(reshape(u_m, (1, v)), m, reshape(omega, (1, v)),
                               batched, p, _transposed(p), spectral)
    flat = ScanState(
        f_re=reshape(nxt.f_re, (s, v)),
        f_im=reshape(nxt.f_im, (s, v)),
        y=reshape(nxt.y, (s, v)),
        z=reshape(nxt.z, (v,)),
    )
    return reshape(y, (s, v)), flat.z, flat


def single_state(s: int, v: int) -> ScanState:
    """Zero initial state with single-sample [S,V]/[V] field shapes."""
    return ScanState(
        f_re=constant(np.zeros((s, v))),
        f_im=constant(np.zeros((s, v))),
        y=constant(np.zeros((s, v))),
        z=constant(np.zeros(v)),
    )


def scan_channel(u_d: Tensor, p: ScanParams, omega: Tensor,
                 spectral: str = "amp_only", record: bool = False) -> tuple:
    """Whole-channel scan: U_d [M, V] with omega [V] -> Z_d [M, V]."""
    if u_d.ndim != 2:
        raise DimensionError(f"scan_channel: need [M,V], got {u_d.shape}")
    m_total, v = u_d.shape
    u_steps = [gather_rows(u_d, [m]) for m in range(m_total)]   # each [1, V]
    z_steps, diag = scan_sequence(u_steps, reshape(omega, (1, v)), p,
                                  spectral, record)
    z_d = stack([reshape(z, (v,)) for z in z_steps], axis=0)
    return z_d, diag


def afgssm_channel(u_d: Tensor, p: ScanParams, adapter, spectral: str = "amp_only",
                   omega_mode: str = "dynamic", record: bool = False) -> tuple:
    """Complete per-channel block: frequency adaptation plus the scan.

    adapter is AdapterParams when omega_mode="dynamic", or the learned
    delta-omega Tensor [V] when omega_mode="fixed".
    """
    if omega_mode == "dynamic":
        omega = adapt_frequency(u_d, adapter).omega
    elif omega_mode == "fixed":
        omega = add(adapter, constant(omega_base(u_d.shape[1])))
    else:
        raise ConfigError(f"unknown omega_mode {omega_mode!r}")
    z_d, diag = scan_channel(u_d, p, omega, spectral, record)
    if record:
        diag["omega"] = omega.data.copy()
    return z_d, diag
