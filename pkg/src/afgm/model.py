"""Model assembly: configuration, parameter inventory, forward pass, loss.

A forecaster instance is (ModelConfig, ParamSet). The forward pass is

    normalize -> encode -> blocks of (scan + residual) -> flatten -> head
    -> denormalize

with per-variable z-score statistics frozen from the training split and
stored in the ParamSet, so a checkpoint is self-contained. The loss is MSE
on the normalized scale.

The batched engine folds (window, channel) pairs into one leading axis; the
single-window `forward` is a wrapper over it. Ablation variants rewire the
encoder (interactive | linear), the core (afgssm | plain_ssm), the spectral
features (amp_only | amp_phase | phase_only) and the frequency mode
(dynamic | fixed) behind the same interfaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import reduce as _reduce

import numpy as np

from . import afgssm, patch_encoder
from .errors import ConfigError, DimensionError
from .numerics import (Graph, Tensor, add, constant, matmul, mul, reduce_sum,
                       reshape, square, stack, sub, transpose2d)
from .rng import generator, uniform

ENCODERS = ("interactive", "linear")
CORES = ("afgssm", "plain_ssm")
OMEGA_MODES = ("dynamic", "fixed")

# Named ablation cases. The third case from the comparison grid wires in an
# external frequency-enhanced block and is out of scope here.
CASES = {
    "I": {"encoder": "interactive", "core": "afgssm"},
    "II": {"encoder": "linear", "core": "afgssm"},
    "IV": {"encoder": "linear", "core": "plain_ssm"},
}


@dataclass(frozen=True)
class ModelConfig:
    t_len: int                      # input window length
    horizon: int                    # forecast steps
    n_vars: int                     # channels D
    v: int                          # feature width per channel
    blocks: int = 1                 # stacked scan blocks
    s: int | None = None            # frequency rank; must equal v
    patch_lengths: tuple = (96, 72, 48, 36, 18, 9)
    conv_width: int = 3
    encoder: str = "interactive"
    core: str = "afgssm"
    spectral: str = "amp_only"
    omega_mode: str = "dynamic"

    def validate(self) -> "ModelConfig":
        if self.t_len < 1 or self.horizon < 1 or self.n_vars < 1:
            raise ConfigError(
                f"t_len/horizon/n_vars must be positive, got "
                f"{self.t_len}/{self.horizon}/{self.n_vars}")
        if self.v < 1:
            raise ConfigError(f"feature width v must be positive, got {self.v}")
        s = self.v if self.s is None else self.s
        if s != self.v:
            raise ConfigError(
                f"frequency rank S={s} must equal feature width V={self.v}")
        if not 1 <= self.blocks <= 6:
            raise ConfigError(f"blocks must be in 1..6, got {self.blocks}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}; known {ENCODERS}")
        if self.core not in CORES:
            raise ConfigError(f"unknown core {self.core!r}; known {CORES}")
        if self.spectral not in afgssm.SPECTRAL_MODES:
            raise ConfigError(
                f"unknown spectral mode {self.spectral!r}; known {afgssm.SPECTRAL_MODES}")
        if self.omega_mode not in OMEGA_MODES:
            raise ConfigError(
                f"unknown omega_mode {self.omega_mode!r}; known {OMEGA_MODES}")
        if self.core == "plain_ssm" and self.spectral != "amp_only":
            raise ConfigError(
                "contradictory flags: core=plain_ssm has no spectral path, "
                "leave spectral=amp_only")
        if self.core == "plain_ssm" and self.omega_mode != "dynamic":
            raise ConfigError(
                "contradictory flags: core=plain_ssm has no frequency basis, "
                "leave omega_mode=dynamic")
        if self.conv_width < 1 or self.conv_width % 2 == 0:
            raise ConfigError(f"conv_width must be odd, got {self.conv_width}")
        if not self.patch_lengths:
            raise ConfigError("patch_lengths must not be empty")
        return self

    @property
    def s_dim(self) -> int:
        return self.v if self.s is None else self.s

    def plan(self) -> patch_encoder.PatchPlan:
        return patch_encoder.make_plan(self.t_len, self.patch_lengths)


def apply_case(config: ModelConfig, case: str) -> ModelConfig:
    """Rewire a config to one of the named ablation cases."""
    if case == "III":
        raise ConfigError("case III (external frequency block) is out of scope")
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; known {sorted(CASES)} "
                          "(III is out of scope)")
    return replace(config, **CASES[case]).validate()


@dataclass
class ParamEntry:
    tensor: Tensor
    role: str
    trainable: bool


class ParamSet:
    """Closed, ordered inventory of named tensors."""

    def __init__(self):
        self._entries: dict[str, ParamEntry] = {}

    def add(self, name: str, data: np.ndarray, role: str,
            trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=trainable,
                   op_name=name)
        self._entries[name] = ParamEntry(t, role, trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def role(self, name: str) -> str:
        return self._entries[name].role

    def trainable_items(self):
        return [(n, e.tensor) for n, e in self._entries.items() if e.trainable]

    def zero_grads(self) -> None:
        for e in self._entries.values():
            e.tensor.grad = None

    def n_scalars(self, trainable_only: bool = True) -> int:
        return sum(e.tensor.data.size for e in self._entries.values()
                   if e.trainable or not trainable_only)

    def to_arrays(self) -> dict:
        return {n: e.tensor.data.copy() for n, e in self._entries.items()}

    def load_arrays(self, arrays: dict) -> None:
        """Overwrite values in place; the inventory must match exactly."""
        mine = set(self._entries)
        theirs = set(arrays)
        if mine != theirs:
            missing = sorted(mine - theirs)
            extra = sorted(theirs - mine)
            raise ConfigError(
                f"parameter inventory mismatch: missing {missing}, unexpected {extra}")
        for name, e in self._entries.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != e.tensor.data.shape:
                raise ConfigError(
                    f"shape mismatch for {name!r}: have {e.tensor.data.shape}, "
                    f"loading {arr.shape}")
            e.tensor.data = arr.copy(order="C")   # keeps 0-d shapes intact

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for n, e in self._entries.items():
            out.add(n, e.tensor.data.copy(), e.role, e.trainable)
        return out


def build_params(config: ModelConfig, stats: tuple, seed: int = 0,
                 init: str = "default") -> ParamSet:
    """Create the full inventory for a config.

    stats: (mean [D], std [D]) from the training split. init="default" uses
    the stability-first scheme (gates and the adapter output layer start at
    zero); init="random" draws every tensor from the fan-in distribution,
    which gradient checks use so that no path starts switched off.
    """
    config.validate()
    mean, std = (np.asarray(a, dtype=np.float64) for a in stats)
    if mean.shape != (config.n_vars,) or std.shape != (config.n_vars,):
        raise ConfigError(
            f"normalization stats must be [{config.n_vars}], got "
            f"{mean.shape}/{std.shape}")
    if (std <= 0).any():
        raise ConfigError("normalization std must be strictly positive")
    rng = generator(seed, "init")
    plan = config.plan()
    d, v, s = config.n_vars, config.v, config.s_dim
    m_total = plan.total_patches
    random_init = init == "random"
    if init not in ("default", "random"):
        raise ConfigError(f"unknown init scheme {init!r}")

    def maybe_zero(shape, half_width):
        # Gates and similar start at zero by default so the first forward
        # is a stable, near-linear map; random init keeps every path live.
        if random_init:
            return uniform(rng, shape, half_width)
        uniform(rng, shape, half_width)   # keep the stream aligned
        return np.zeros(shape)

    ps = ParamSet()
    ps.add("norm.mean", mean, "stat", trainable=False)
    ps.add("norm.std", std, "stat", trainable=False)

    if config.encoder == "interactive":
        k = config.conv_width
        ps.add("encoder.conv_kernel", uniform(rng, (k, d, d), np.sqrt(1.0 / (k * d))),
               "encoder")
        # alpha_raw 0 gives an even conv/raw blend through sigmoid(0) = 0.5.
        ps.add("encoder.alpha_raw", maybe_zero((), 0.5), "encoder")
        for spec in plan.scales:
            hw = np.sqrt(1.0 / spec.length)
            ps.add(f"encoder.proj{spec.length}.weight",
                   uniform(rng, (spec.length, v), hw), "encoder")
            ps.add(f"encoder.proj{spec.length}.bias",
                   maybe_zero((v,), hw), "encoder")
    else:
        hw = np.sqrt(1.0 / config.t_len)
        ps.add("encoder.linear.weight",
               uniform(rng, (config.t_len, m_total * v), hw), "encoder")
        ps.add("encoder.linear.bias", maybe_zero((m_total * v,), hw), "encoder")

    for i in range(config.blocks):
        pre = f"block{i}"
        if config.core == "afgssm":
            if config.omega_mode == "dynamic":
                v_h = afgssm.bottleneck_width(v)
                ps.add(f"{pre}.adapter.w1", uniform(rng, (v, v_h), np.sqrt(1.0 / v)),
                       "scan")
                ps.add(f"{pre}.adapter.b1", maybe_zero((v_h,), 0.1), "scan")
                # Output layer starts at zero: omega == omega_base exactly.
                ps.add(f"{pre}.adapter.w2", maybe_zero((v_h, v), np.sqrt(1.0 / v_h)),
                       "scan")
                ps.add(f"{pre}.adapter.b2", maybe_zero((v,), 0.1), "scan")
            else:
                ps.add(f"{pre}.delta_omega", maybe_zero((v,), 0.1), "scan")
            ps.add(f"{pre}.scan.w_b", uniform(rng, (s, v), np.sqrt(1.0 / v)), "scan")
            if config.spectral != "phase_only":
                ps.add(f"{pre}.scan.c_amp", uniform(rng, (s, s), np.sqrt(1.0 / s)),
                       "scan")
            if config.spectral != "amp_only":
                ps.add(f"{pre}.scan.c_phase", uniform(rng, (s, s), np.sqrt(1.0 / s)),
                       "scan")
            ps.add(f"{pre}.scan.d_u", uniform(rng, (s,), np.sqrt(1.0 / s)), "scan")
            ps.add(f"{pre}.scan.d_y", uniform(rng, (s, s), np.sqrt(1.0 / s)), "scan")
            ps.add(f"{pre}.scan.w_g_amp", maybe_zero((s, s), np.sqrt(1.0 / s)), "scan")
            ps.add(f"{pre}.scan.w_g_u", maybe_zero((s,), np.sqrt(1.0 / s)), "scan")
            ps.add(f"{pre}.scan.w_g_y", maybe_zero((s, s), np.sqrt(1.0 / s)), "scan")
            ps.add(f"{pre}.scan.m_time_u", maybe_zero((v, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.m_time_z", maybe_zero((v, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.m_fre_u", maybe_zero((s, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.m_fre_z", maybe_zero((s, v), np.sqrt(1.0 / v)), "scan")
        else:
            ps.add(f"{pre}.scan.m_time_u", maybe_zero((v, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.m_time_z", maybe_zero((v, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.w_b", uniform(rng, (s, v), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.c_out", uniform(rng, (v,), np.sqrt(1.0 / v)), "scan")
            ps.add(f"{pre}.scan.d_skip", uniform(rng, (v,), np.sqrt(1.0 / v)), "scan")

    hw = np.sqrt(1.0 / (m_total * v))
    ps.add("head.weight", uniform(rng, (m_total * v, config.horizon), hw), "head")
    ps.add("head.bias", maybe_zero((config.horizon,), hw), "head")
    return ps


# ---------------------------------------------------------------------------
# forward engine

def _encoder_params(ps: ParamSet, plan) -> patch_encoder.EncoderParams:
    return patch_encoder.EncoderParams(
        conv_kernel=ps["encoder.conv_kernel"],
        alpha_raw=ps["encoder.alpha_raw"],
        projections={spec.length: (ps[f"encoder.proj{spec.length}.weight"],
                                   ps[f"encoder.proj{spec.length}.bias"])
                     for spec in plan.scales},
    )


def _scan_params(ps: ParamSet, block: int, config: ModelConfig):
    pre = f"block{block}.scan."
    if config.core == "plain_ssm":
        return afgssm.PlainScanParams(
            m_time_u=ps[pre + "m_time_u"], m_time_z=ps[pre + "m_time_z"],
            w_b=ps[pre + "w_b"], c_out=ps[pre + "c_out"],
            d_skip=ps[pre + "d_skip"])
    return afgssm.ScanParams(
        w_b=ps[pre + "w_b"],
        c_amp=ps[pre + "c_amp"] if pre + "c_amp" in ps else None,
        c_phase=ps[pre + "c_phase"] if pre + "c_phase" in ps else None,
        d_u=ps[pre + "d_u"], d_y=ps[pre + "d_y"],
        w_g_amp=ps[pre + "w_g_amp"], w_g_u=ps[pre + "w_g_u"],
        w_g_y=ps[pre + "w_g_y"],
        m_time_u=ps[pre + "m_time_u"], m_time_z=ps[pre + "m_time_z"],
        m_fre_u=ps[pre + "m_fre_u"], m_fre_z=ps[pre + "m_fre_z"])


def _adapter(ps: ParamSet, block: int) -> afgssm.AdapterParams:
    pre = f"block{block}.adapter."
    return afgssm.AdapterParams(w1=ps[pre + "w1"], b1=ps[pre + "b1"],
                                w2=ps[pre + "w2"], b2=ps[pre + "b2"])


def _encode_windows(xs_norm: list, ps: ParamSet, config: ModelConfig, plan) -> list:
    """Normalized windows -> per-step batch tensors [B*D, V], step-major."""
    b = len(xs_norm)
    d, v = config.n_vars, config.v
    m_total = plan.total_patches
    if config.encoder == "interactive":
        enc = _encoder_params(ps, plan)
        per_window = [patch_encoder.embed_steps(constant(x), enc, plan)
                      for x in xs_norm]
    else:
        w, bias = ps["encoder.linear.weight"], ps["encoder.linear.bias"]
        per_window = [patch_encoder.linear_encode_steps(constant(x), w, bias,
                                                        m_total, v)
                      for x in xs_norm]
    u_steps = []
    for m in range(m_total):
        stacked = stack([per_window[w][m] for w in range(b)], axis=0)  # [B,D,V]
        u_steps.append(reshape(stacked, (b * d, v)))
    return u_steps


def _block_omega(u_steps: list, ps: ParamSet, block: int, config: ModelConfig):
    n, v = u_steps[0].shape
    if config.omega_mode == "fixed":
        vec = add(ps[f"block{block}.delta_omega"],
                  constant(afgssm.omega_base(v)))
        return add(reshape(vec, (1, v)), constant(np.zeros((n, v))))
    mean_u = mul(_reduce(add, u_steps), 1.0 / len(u_steps))
    return afgssm.adapt_frequency_rows(mean_u, _adapter(ps, block))


def forward_rows(xs_norm: list, ps: ParamSet, config: ModelConfig,
                 plan=None) -> Tensor:
    """Batched core on normalized windows: list of [T,D] -> rows [B*D, H].

    Row w*D + d is the normalized forecast for window w, channel d.
    """
    if plan is None:
        plan = config.plan()
    for x in xs_norm:
        if x.shape != (config.t_len, config.n_vars):
            raise DimensionError(
                f"window shape {x.shape} does not match config "
                f"[{config.t_len},{config.n_vars}]")
    u_steps = _encode_windows(xs_norm, ps, config, plan)
    for i in range(config.blocks):
        p = _scan_params(ps, i, config)
        if config.core == "plain_ssm":
            z_steps = afgssm.plain_scan_sequence(u_steps, p)
        else:
            omega = _block_omega(u_steps, ps, i, config)
            z_steps, _ = afgssm.scan_sequence(u_steps, omega, p, config.spectral)
        u_steps = [add(u, z) for u, z in zip(u_steps, z_steps)]
    n = u_steps[0].shape[0]
    flat = reshape(stack(u_steps, axis=1), (n, plan.total_patches * config.v))
    return add(matmul(flat, ps["head.weight"]), ps["head.bias"])


def normalize(x: np.ndarray, ps: ParamSet) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - ps["norm.mean"].data) \
        / ps["norm.std"].data


def forward(x, ps: ParamSet, config: ModelConfig, plan=None) -> Tensor:
    """Single raw window [T,D] -> raw forecast [H,D]."""
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if x.shape != (config.t_len, config.n_vars):
        raise DimensionError(
            f"forward: input {x.shape}, expected "
            f"({config.t_len}, {config.n_vars})")
    rows = forward_rows([normalize(x, ps)], ps, config, plan)   # [D, H]
    pred_norm = transpose2d(rows)                               # [H, D]
    return add(mul(pred_norm, constant(ps["norm.std"].data)),
               constant(ps["norm.mean"].data))


def loss_mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over every element; scalar tensor."""
    t = target if isinstance(target, Tensor) else constant(target)
    if pred.shape != t.shape:
        raise DimensionError(f"loss: shapes {pred.shape} vs {t.shape}")
    return mul(reduce_sum(square(sub(pred, t))), 1.0 / pred.data.size)


def targets_to_rows(targets: np.ndarray) -> np.ndarray:
    """[B, H, D] -> [B*D, H] matching forward_rows' row order."""
    t = np.asarray(targets, dtype=np.float64)
    b, h, d = t.shape
    return np.ascontiguousarray(t.transpose(0, 2, 1).reshape(b * d, h))


def rows_to_windows(rows: np.ndarray, d: int) -> np.ndarray:
    """[B*D, H] -> [B, H, D], inverse of targets_to_rows."""
    r = np.asarray(rows, dtype=np.float64)
    b = r.shape[0] // d
    return np.ascontiguousarray(r.reshape(b, d, -1).transpose(0, 2, 1))
