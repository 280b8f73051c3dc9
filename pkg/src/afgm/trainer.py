"""Mini-batch training with Adam, early stopping, and seeded determinism.

The training loss is MSE on the standardized scale over whole batches run
through the batched forward engine. Validation MSE drives early stopping;
the returned parameters are the best-validation snapshot, so the reported
best value is non-increasing over a run by construction.

Determinism: batch order comes from the run seed through the dedicated
shuffle stream, and all math is float64 numpy on a fixed operation order,
so identical seeds give identical histories. The wall-clock column in
history.csv is the one nondeterministic output; pass timing=False to write
zeros there when byte-identical reruns matter more than timing data.
"""
from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint, model
from .errors import ConfigError, NumericError
from .numerics import Graph
from .rng import generator

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 24
    max_epochs: int = 10
    patience: int = 5
    seed: int = 0
    grad_clip: float = 1.0
    timing: bool = True

    def validate(self) -> "TrainConfig":
        # lr=0 is allowed as an explicit no-op (freeze) setting; otherwise
        # the rate must sit in the supported stability window.
        if self.lr != 0.0 and not 1e-6 <= self.lr <= 1e-1:
            raise ConfigError(f"lr must be 0 or in [1e-6, 1e-1], got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be positive, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be positive, got {self.grad_clip}")
        return self


class Adam:
    """Adam over named tensors, with global-norm gradient clipping."""

    def __init__(self, named_params: list, lr: float, grad_clip: float = 1.0):
        self.named_params = list(named_params)
        self.lr = float(lr)
        self.grad_clip = float(grad_clip)
        self.step_count = 0
        self.m = {n: np.zeros_like(t.data) for n, t in self.named_params}
        self.v = {n: np.zeros_like(t.data) for n, t in self.named_params}

    def global_norm(self, grads: dict) -> float:
        total = 0.0
        for g in grads.values():
            total += float(np.sum(g * g))
        return float(np.sqrt(total))

    def clip(self, grads: dict) -> tuple:
        """Scale grads in place to global L2 norm <= grad_clip."""
        norm = self.global_norm(grads)
        if norm > self.grad_clip:
            scale = self.grad_clip / norm
            for n in grads:
                grads[n] = grads[n] * scale
        return grads, norm

    def step(self, grads: dict) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - ADAM_BETA1 ** t
        bc2 = 1.0 - ADAM_BETA2 ** t
        for name, p in self.named_params:
            g = grads[name]
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for {name!r}")
            self.m[name] = ADAM_BETA1 * self.m[name] + (1.0 - ADAM_BETA1) * g
            self.v[name] = ADAM_BETA2 * self.v[name] + (1.0 - ADAM_BETA2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    def state_entries(self) -> list:
        """Serializable view in the checkpoint entry format."""
        out = [("adam.step", "optimizer", np.float64(self.step_count))]
        for n, _ in self.named_params:
            out.append((f"adam.m.{n}", "optimizer", self.m[n]))
            out.append((f"adam.v.{n}", "optimizer", self.v[n]))
        return out

    def load_state_entries(self, entries: list) -> None:
        got = {name: arr for name, _, arr in entries}
        want = {e[0] for e in self.state_entries()}
        if set(got) != want:
            raise ConfigError(
                f"optimizer state mismatch: missing {sorted(want - set(got))}, "
                f"unexpected {sorted(set(got) - want)}")
        self.step_count = int(got["adam.step"])
        for n, t in self.named_params:
            for slot, arr in (("m", got[f"adam.m.{n}"]), ("v", got[f"adam.v.{n}"])):
                if arr.shape != t.data.shape:
                    raise ConfigError(
                        f"optimizer state shape mismatch for {n!r}: "
                        f"{arr.shape} vs {t.data.shape}")
                getattr(self, slot)[n] = arr.copy()


def _batch_rows(ws, idx: np.ndarray) -> tuple:
    xs = [ws.inputs[int(i)] for i in idx]
    tgt = model.targets_to_rows(ws.targets[idx])
    return xs, tgt


def evaluate(ps: model.ParamSet, cfg: model.ModelConfig, ws,
             batch_size: int = 256, plan=None) -> dict:
    """MSE and MAE over a whole WindowSet on the standardized scale."""
    if plan is None:
        plan = cfg.plan()
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    for lo in range(0, ws.count, batch_size):
        idx = np.arange(lo, min(lo + batch_size, ws.count))
        xs, tgt = _batch_rows(ws, idx)
        rows = model.forward_rows(xs, ps, cfg, plan)    # no graph: values only
        diff = rows.data - tgt
        sq_sum += float(np.sum(diff * diff))
        abs_sum += float(np.sum(np.abs(diff)))
        count += diff.size
    return {"mse": sq_sum / count, "mae": abs_sum / count}


def predict_rows(ps: model.ParamSet, cfg: model.ModelConfig, ws,
                 batch_size: int = 256, plan=None) -> np.ndarray:
    """Standardized forecasts for a WindowSet, shaped [W, H, D]."""
    if plan is None:
        plan = cfg.plan()
    chunks = []
    for lo in range(0, ws.count, batch_size):
        idx = np.arange(lo, min(lo + batch_size, ws.count))
        xs = [ws.inputs[int(i)] for i in idx]
        rows = model.forward_rows(xs, ps, cfg, plan)
        chunks.append(model.rows_to_windows(rows.data, cfg.n_vars))
    return np.concatenate(chunks, axis=0)


def write_history(path, history: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f)
        out.writerow(["epoch", "train_mse", "val_mse", "seconds"])
        for row in history:
            out.writerow([row["epoch"], f"{row['train_mse']:.10g}",
                          f"{row['val_mse']:.10g}", f"{row['seconds']:.3f}"])


def train(ps: model.ParamSet, cfg: model.ModelConfig, train_ws, val_ws,
          tcfg: TrainConfig, run_dir=None) -> tuple:
    """Train in place; returns (best-validation ParamSet, history rows).

    history rows are dicts (epoch, train_mse, val_mse, seconds). When
    run_dir is given, writes history.csv plus model.ckpt / optimizer.ckpt
    for the best-validation snapshot.
    """
    tcfg.validate()
    cfg.validate()
    plan = cfg.plan()
    opt = Adam(ps.trainable_items(), lr=tcfg.lr, grad_clip=tcfg.grad_clip)
    shuffle_rng = generator(tcfg.seed, "shuffle")
    history = []
    best_val = np.inf
    best_arrays = ps.to_arrays()
    best_opt_entries = opt.state_entries()
    stale = 0
    for epoch in range(tcfg.max_epochs):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(train_ws.count)
        sq_sum = 0.0
        count = 0
        for b, lo in enumerate(range(0, train_ws.count, tcfg.batch_size)):
            idx = perm[lo:lo + tcfg.batch_size]
            xs, tgt = _batch_rows(train_ws, idx)
            try:
                with Graph() as g:
                    rows = model.forward_rows(xs, ps, cfg, plan)
                    loss = model.loss_mse(rows, tgt)
                    g.backward(loss)
                grads = {n: t.grad_or_zeros() for n, t in ps.trainable_items()}
                grads, _ = opt.clip(grads)
                opt.step(grads)
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch {b}: {exc}") from exc
            finally:
                ps.zero_grads()
            sq_sum += loss.item() * tgt.size
            count += tgt.size
        val = evaluate(ps, cfg, val_ws, plan=plan)
        seconds = time.perf_counter() - t0 if tcfg.timing else 0.0
        history.append({"epoch": epoch, "train_mse": sq_sum / count,
                        "val_mse": val["mse"], "seconds": seconds})
        if val["mse"] < best_val:
            best_val = val["mse"]
            best_arrays = ps.to_arrays()
            best_opt_entries = opt.state_entries()
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                break
    best = ps.copy()
    best.load_arrays(best_arrays)
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        checkpoint.save(os.path.join(run_dir, "model.ckpt"), best)
        checkpoint.save_entries(os.path.join(run_dir, "optimizer.ckpt"),
                                best_opt_entries)
        write_history(os.path.join(run_dir, "history.csv"), history)
    return best, history


@dataclass
class GradCheckReport:
    tol: float
    h: float
    per_param: dict = field(default_factory=dict)   # name -> max rel error
    passed: bool = True

    @property
    def worst(self) -> tuple:
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]

    def lines(self) -> list:
        out = []
        for name, err in self.per_param.items():
            mark = "pass" if err < self.tol else "FAIL"
            out.append(f"{mark}  {name:32s}  max rel err {err:.3e}")
        name, err = self.worst
        out.append(f"{'PASS' if self.passed else 'FAIL'}  worst {name} "
                   f"at {err:.3e} (tol {self.tol:g})")
        return out


def grad_check(ps: model.ParamSet, cfg: model.ModelConfig, x: np.ndarray,
               y: np.ndarray, h: float = 1e-5, tol: float = 1e-4,
               corrupt: str | None = None) -> GradCheckReport:
    """Compare tape gradients against central differences per parameter.

    corrupt names one parameter whose analytic gradient gets scaled by 1.01
    before comparison; the report must then flag exactly that one. This is
    a self-test that the harness can actually detect a wrong adjoint.
    """
    from .oracles.fd import fd_gradient, relative_error

    base = ps.to_arrays()

    def loss_value(arrays: dict) -> float:
        probe = ps.copy()
        probe.load_arrays({**base, **arrays})
        with Graph():
            return model.loss_mse(model.forward(x, probe, cfg), y).item()

    with Graph() as g:
        loss = model.loss_mse(model.forward(x, ps, cfg), y)
        g.backward(loss)
    report = GradCheckReport(tol=tol, h=h)
    for name, t in ps.trainable_items():
        analytic = t.grad_or_zeros().copy()
        if name == corrupt:
            analytic = analytic * 1.01
        numeric = fd_gradient(lambda a, n=name: loss_value({n: a}), t.data, h=h)
        err = float(relative_error(analytic, numeric).max())
        report.per_param[name] = err
        if err >= tol:
            report.passed = False
    ps.zero_grads()
    return report
