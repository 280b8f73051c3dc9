"""Micro-benchmark harness for the scan's runtime scaling.

Times the forward scan alone on synthetic inputs: parameters and inputs are
built outside the timed region, each measurement runs the whole M-step
recurrence, and the reported number is the median over reps, which shrugs
off one-off scheduler or allocator hiccups.

Cost model (per step): four [S,S]@[S,V] products dominate at large S, a
bundle of [S]/[V]-level products scales as S*V, trig evaluation as V. Total
work is therefore linear in M always, and quadratic in S once S*V terms are
small next to S^2*V ones. The opcount oracle predicts these totals
independently; the acceptance harness compares measured ratios against the
predicted brackets.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import afgssm
from .errors import ConfigError
from .numerics import constant
from .rng import generator, uniform


@dataclass(frozen=True)
class BenchRow:
    m: int
    s: int
    v: int
    median_seconds: float


def _workload(m: int, s: int, v: int, seed: int):
    rng = generator(seed, "bench")
    scale = 0.5
    p = afgssm.ScanParams(
        w_b=constant(uniform(rng, (s, v), scale)),
        c_amp=constant(uniform(rng, (s, s), scale)),
        c_phase=None,
        d_u=constant(uniform(rng, (s,), scale)),
        d_y=constant(uniform(rng, (s, s), scale)),
        w_g_amp=constant(uniform(rng, (s, s), scale)),
        w_g_u=constant(uniform(rng, (s,), scale)),
        w_g_y=constant(uniform(rng, (s, s), scale)),
        m_time_u=constant(uniform(rng, (v, v), scale)),
        m_time_z=constant(uniform(rng, (v, v), scale)),
        m_fre_u=constant(uniform(rng, (s, v), scale)),
        m_fre_z=constant(uniform(rng, (s, v), scale)))
    u_d = constant(uniform(rng, (m, v), 1.0))
    omega = constant(afgssm.omega_base(v) + uniform(rng, (v,), 0.1))
    return u_d, omega, p


def time_scan(m: int, s: int, v: int, reps: int = 5, seed: int = 0) -> BenchRow:
    """Median wall time of one M-step forward scan at the given sizes."""
    if min(m, s, v) < 1 or reps < 1:
        raise ConfigError(f"bench sizes must be positive, got m={m} s={s} "
                          f"v={v} reps={reps}")
    u_d, omega, p = _workload(m, s, v, seed)
    afgssm.scan_channel(u_d, p, omega)      # warm-up, untimed
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        afgssm.scan_channel(u_d, p, omega)
        times.append(time.perf_counter() - t0)
    return BenchRow(m=m, s=s, v=v, median_seconds=float(np.median(times)))


def run_table(m_list, s_list, v_list, reps: int = 5, seed: int = 0) -> list:
    """Cartesian sweep; rows ordered as the nested loops visit them."""
    rows = []
    for m in m_list:
        for s in s_list:
            for v in v_list:
                rows.append(time_scan(int(m), int(s), int(v), reps=reps,
                                      seed=seed))
    return rows
