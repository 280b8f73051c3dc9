"""Reference scan written over complex numbers.

The production recurrence keeps the oscillator state as split real/imag
planes. This oracle keeps it as one complex array and drives it with
B_m * exp(i*omega*m), which is the same dynamics expressed in a different
algebra: f_m = A_m (.) f_{m-1} + B_m (x) e^{i*omega*m}. Gates, output and
readout follow the same equations, computed step by step in plain numpy.

The amplitude floor (1e-12 inside the sqrt) is part of the contract of the
scan itself, so the oracle applies it too; without it the two
implementations would only agree where the state is far from the origin.
"""
from __future__ import annotations

import numpy as np

AMP_EPS = 1e-12
PHASE_EPS = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def complex_scan(u_seq: np.ndarray, omega: np.ndarray, p: dict,
                 spectral: str = "amp_only") -> dict:
    """Run the gated oscillator scan for one channel.

    u_seq: [M, V] inputs, omega: [V] angular frequencies, p: dict of numpy
    parameter arrays keyed w_b [S,V], c_amp [S,S], d_u [S], d_y [S,S],
    w_g_amp [S,S], w_g_u [S], w_g_y [S,S], m_time_u [V,V], m_time_z [V,V],
    m_fre_u [S,V], m_fre_z [S,V] (c_phase [S,S] for the phase variants).

    Returns a dict of per-step lists: f (complex [S,V]), amp, y, g, z, a.
    """
    m_steps, v = u_seq.shape
    s = p["w_b"].shape[0]
    f = np.zeros((s, v), dtype=np.complex128)
    y_prev = np.zeros((s, v))
    z_prev = np.zeros(v)
    out = {"f": [], "amp": [], "y": [], "g": [], "z": [], "a": []}
    for m in range(1, m_steps + 1):
        u = u_seq[m - 1]
        a_time = _sigmoid(p["m_time_u"] @ u + p["m_time_z"] @ z_prev)
        a_fre = _sigmoid(p["m_fre_u"] @ u + p["m_fre_z"] @ z_prev)
        a_full = np.outer(a_fre, a_time)
        b = p["w_b"] @ u
        f = a_full * f + np.outer(b, np.exp(1j * omega * m))
        amp = np.sqrt(f.real ** 2 + f.imag ** 2 + AMP_EPS)
        if spectral == "amp_only":
            first = p["c_amp"] @ amp
        else:
            den = np.where(f.real >= 0.0, f.real + PHASE_EPS, f.real - PHASE_EPS)
            phase = np.arctan(f.imag / den)
            if spectral == "amp_phase":
                first = p["c_amp"] @ amp + p["c_phase"] @ phase
            elif spectral == "phase_only":
                first = p["c_phase"] @ phase
            else:
                raise ValueError(f"unknown spectral mode {spectral!r}")
        y = first + np.outer(p["d_u"], u) + p["d_y"] @ y_prev
        g = _sigmoid(p["w_g_amp"] @ amp + np.outer(p["w_g_u"], u) + p["w_g_y"] @ y_prev)
        z = (g * y).sum(axis=0)
        out["f"].append(f.copy())
        out["amp"].append(amp)
        out["y"].append(y)
        out["g"].append(g)
        out["z"].append(z)
        out["a"].append(a_full)
        y_prev, z_prev = y, z
    return out


def random_scan_params(rng: np.random.Generator, s: int, v: int,
                       scale: float = 0.5, spectral: str = "amp_only") -> dict:
    """Random parameter dict for equivalence sweeps (oracle-side helper)."""
    p = {
        "w_b": rng.uniform(-scale, scale, (s, v)),
        "c_amp": rng.uniform(-scale, scale, (s, s)),
        "d_u": rng.uniform(-scale, scale, s),
        "d_y": rng.uniform(-scale, scale, (s, s)),
        "w_g_amp": rng.uniform(-scale, scale, (s, s)),
        "w_g_u": rng.uniform(-scale, scale, s),
        "w_g_y": rng.uniform(-scale, scale, (s, s)),
        "m_time_u": rng.uniform(-scale, scale, (v, v)),
        "m_time_z": rng.uniform(-scale, scale, (v, v)),
        "m_fre_u": rng.uniform(-scale, scale, (s, v)),
        "m_fre_z": rng.uniform(-scale, scale, (s, v)),
    }
    if spectral in ("amp_phase", "phase_only"):
        p["c_phase"] = rng.uniform(-scale, scale, (s, s))
    return p
