"""Operator command line: train, eval, predict, gradcheck, bench, ablate,
inspect-freq.

Config files are flat `key = value` lines with `#` comments. Unknown keys
are rejected so typos fail fast. Flags override file values; the fully
resolved config is echoed to resolved.cfg inside the run directory before
any work starts, and every command can be replayed from that file alone.

Run directories live under --runs-dir, the AFGM_RUNS_DIR environment
variable, or ./runs, in that order of precedence. Names embed the seed and
a timestamp and are never reused: collisions get a numeric suffix.

Exit codes are a stable scripting contract: 0 success, 2 config or usage
error, 3 numeric fault, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
import time

import numpy as np

from . import bench, checkpoint, data_io, model, trainer
from .errors import (ConfigError, ContractError, DimensionError, DomainError,
                     IngestionError, NumericError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# key -> (parser, default). Defaults mirror the module-level defaults so a
# minimal config file stays minimal.
def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(p) for p in str(text).replace(" ", "").split(",") if p)
    except ValueError:
        raise ConfigError(f"expected a comma list of integers, got {text!r}") \
            from None


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


CONFIG_KEYS = {
    "csv": (str, None),
    "split": (str, "auto"),
    "t_len": (int, 96),
    "horizon": (int, 96),
    "hidden_dim": (int, 16),
    "s_dim": (int, None),            # optional; must equal hidden_dim
    "blocks": (int, 1),
    "patch_lengths": (_parse_int_list, (48, 24)),
    "conv_width": (int, 3),
    "encoder": (str, "interactive"),
    "core": (str, "afgssm"),
    "spectral": (str, "amp_only"),
    "omega_mode": (str, "dynamic"),
    "lr": (float, 1e-4),
    "batch_size": (int, 24),
    "max_epochs": (int, 10),
    "patience": (int, 5),
    "seed": (int, 0),
    "grad_clip": (float, 1.0),
    "timing": (_parse_bool, True),
}


def parse_config_file(path) -> dict:
    """Flat `key = value` lines, `#` comments, unknown keys rejected."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    raw = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(
                    f"{path}:{lineno}: expected `key = value`, got {line.rstrip()!r}")
            key, value = (part.strip() for part in body.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value
    return raw


def resolve_config(file_values: dict, overrides: dict) -> dict:
    """Typed, fully defaulted config; overrides win over file values."""
    merged = dict(file_values)
    for key, value in overrides.items():
        merged[key] = value
    for key in merged:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    out = {}
    for key, (parse, default) in CONFIG_KEYS.items():
        if key in merged:
            raw = merged[key]
            try:
                out[key] = raw if not isinstance(raw, str) else parse(raw)
            except (ValueError, TypeError):
                raise ConfigError(f"bad value for {key!r}: {merged[key]!r}") from None
        else:
            out[key] = default
    if out["s_dim"] is not None and out["s_dim"] != out["hidden_dim"]:
        raise ConfigError(
            f"s_dim = {out['s_dim']} must equal hidden_dim = {out['hidden_dim']}")
    return out


def config_lines(cfg: dict) -> list:
    lines = []
    for key in CONFIG_KEYS:
        value = cfg[key]
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(x) for x in value)
        elif isinstance(value, bool):
            value = "on" if value else "off"
        lines.append(f"{key} = {value}")
    return lines


def write_resolved(run_dir, cfg: dict) -> None:
    with open(os.path.join(run_dir, "resolved.cfg"), "w", encoding="utf-8") as f:
        f.write("\n".join(config_lines(cfg)) + "\n")


def runs_root(args) -> str:
    if getattr(args, "runs_dir", None):
        return args.runs_dir
    return os.environ.get("AFGM_RUNS_DIR", "runs")


def make_run_dir(args, command: str, cfg: dict, tag: str = "") -> str:
    stem = "data"
    if cfg.get("csv"):
        stem = os.path.splitext(os.path.basename(cfg["csv"]))[0]
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = f"{command}_{stem}_s{cfg['seed']}{tag}_{stamp}"
    root = runs_root(args)
    path = os.path.join(root, base)
    suffix = 0
    while True:
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            suffix += 1
            path = os.path.join(root, f"{base}-{suffix}")


def _overrides_from_flags(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (p.strip() for p in item.split("=", 1))
        out[key] = value
    return out


def _grid_combos(args) -> list:
    """Expand repeated --grid key=a,b,c flags into override dicts."""
    axes = []
    for item in args.grid or []:
        if "=" not in item:
            raise ConfigError(f"--grid expects key=v1,v2,..., got {item!r}")
        key, values = (p.strip() for p in item.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key in --grid: {key!r}")
        parts = [v for v in values.split(",") if v]
        if not parts:
            raise ConfigError(f"--grid {key} has no values")
        axes.append([(key, v) for v in parts])
    if not axes:
        return [{}]
    return [dict(combo) for combo in itertools.product(*axes)]


def model_config_from(cfg: dict, n_vars: int) -> model.ModelConfig:
    return model.ModelConfig(
        t_len=cfg["t_len"], horizon=cfg["horizon"], n_vars=n_vars,
        v=cfg["hidden_dim"], s=cfg["s_dim"], blocks=cfg["blocks"],
        patch_lengths=tuple(cfg["patch_lengths"]),
        conv_width=cfg["conv_width"], encoder=cfg["encoder"],
        core=cfg["core"], spectral=cfg["spectral"],
        omega_mode=cfg["omega_mode"]).validate()


def train_config_from(cfg: dict) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        lr=cfg["lr"], batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        seed=cfg["seed"], grad_clip=cfg["grad_clip"],
        timing=cfg["timing"]).validate()


def load_dataset(cfg: dict) -> data_io.Dataset:
    if not cfg.get("csv"):
        raise ConfigError("config key `csv` is required for this command")
    if not os.path.exists(cfg["csv"]):
        raise ConfigError(f"csv file not found: {cfg['csv']}")
    return data_io.split(data_io.load_csv(cfg["csv"]), scheme=cfg["split"])


def _write_metrics(path, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f)
        out.writerow(["split", "mse", "mae"])
        for split, m in rows:
            out.writerow([split, f"{m['mse']:.10g}", f"{m['mae']:.10g}"])


def _train_once(args, cfg: dict) -> str:
    ds = load_dataset(cfg)
    mcfg = model_config_from(cfg, ds.n_vars)
    tcfg = train_config_from(cfg)
    run_dir = make_run_dir(args, "train", cfg)
    write_resolved(run_dir, cfg)
    tr = data_io.windows(ds, "train", mcfg.t_len, mcfg.horizon)
    va = data_io.windows(ds, "val", mcfg.t_len, mcfg.horizon)
    te = data_io.windows(ds, "test", mcfg.t_len, mcfg.horizon)
    ps = model.build_params(mcfg, (ds.mean, ds.std), seed=tcfg.seed)
    best, history = trainer.train(ps, mcfg, tr, va, tcfg, run_dir=run_dir)
    test_m = trainer.evaluate(best, mcfg, te)
    val_m = trainer.evaluate(best, mcfg, va)
    _write_metrics(os.path.join(run_dir, "metrics.csv"),
                   [("val", val_m), ("test", test_m)])
    print(f"{run_dir}: {len(history)} epochs, "
          f"val mse {val_m['mse']:.6g}, test mse {test_m['mse']:.6g}")
    return run_dir


def cmd_train(args) -> int:
    file_values = parse_config_file(args.config)
    flag_overrides = _overrides_from_flags(args)
    for combo in _grid_combos(args):
        cfg = resolve_config(file_values, {**flag_overrides, **combo})
        _train_once(args, cfg)
    return EXIT_OK


def _load_model_for(args, cfg: dict):
    ds = load_dataset(cfg)
    mcfg = model_config_from(cfg, ds.n_vars)
    ps = model.build_params(mcfg, (ds.mean, ds.std), seed=cfg["seed"])
    checkpoint.load(args.checkpoint, ps)
    return ds, mcfg, ps


def cmd_eval(args) -> int:
    cfg = resolve_config(parse_config_file(args.config),
                         _overrides_from_flags(args))
    ds, mcfg, ps = _load_model_for(args, cfg)
    ws = data_io.windows(ds, args.split, mcfg.t_len, mcfg.horizon)
    m = trainer.evaluate(ps, mcfg, ws)
    run_dir = make_run_dir(args, "eval", cfg)
    write_resolved(run_dir, cfg)
    _write_metrics(os.path.join(run_dir, "metrics.csv"), [(args.split, m)])
    print(f"{args.split}: mse {m['mse']:.10g} mae {m['mae']:.10g} "
          f"({run_dir})")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = resolve_config(parse_config_file(args.config),
                         _overrides_from_flags(args))
    ds, mcfg, ps = _load_model_for(args, cfg)
    ws = data_io.windows(ds, args.split, mcfg.t_len, mcfg.horizon)
    if args.limit and args.limit < ws.count:
        ws = data_io.WindowSet(split=ws.split, inputs=ws.inputs[:args.limit],
                               targets=ws.targets[:args.limit],
                               origins=ws.origins[:args.limit])
    preds = trainer.predict_rows(ps, mcfg, ws)
    run_dir = make_run_dir(args, "predict", cfg)
    write_resolved(run_dir, cfg)
    out = os.path.join(run_dir, "predictions.csv")
    data_io.write_predictions_csv(out, ws, preds, ds)
    print(f"{out}: {ws.count} windows")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    overrides = _overrides_from_flags(args)
    file_values = parse_config_file(args.config) if args.config else {}
    # Toy-sized defaults unless the config says otherwise.
    toy = {"t_len": "24", "horizon": "6", "hidden_dim": "4",
           "patch_lengths": "12", "blocks": "1", "seed": "1"}
    cfg = resolve_config({**toy, **file_values}, overrides)
    mcfg = model_config_from(cfg, args.n_vars)
    from .rng import generator
    g = generator(cfg["seed"], "test")
    x = g.normal(size=(mcfg.t_len, mcfg.n_vars))
    y = g.normal(size=(mcfg.horizon, mcfg.n_vars))
    ps = model.build_params(mcfg, (np.zeros(mcfg.n_vars), np.ones(mcfg.n_vars)),
                            seed=cfg["seed"], init="random")
    report = trainer.grad_check(ps, mcfg, x, y, h=args.h, tol=args.tol)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_bench(args) -> int:
    rows = bench.run_table(_parse_int_list(args.m), _parse_int_list(args.s),
                           _parse_int_list(args.v), reps=args.reps,
                           seed=args.seed)
    cfg = resolve_config({}, {"seed": str(args.seed)})
    run_dir = make_run_dir(args, "bench", cfg)
    out = os.path.join(run_dir, "bench.csv")
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["m", "s", "v", "median_seconds"])
        for r in rows:
            w.writerow([r.m, r.s, r.v, f"{r.median_seconds:.6e}"])
    for r in rows:
        print(f"m={r.m} s={r.s} v={r.v} median {r.median_seconds:.6f}s")
    print(out)
    return EXIT_OK


ABLATION_CASES = {
    "I": {"encoder": "interactive", "core": "afgssm"},
    "II": {"encoder": "linear", "core": "afgssm"},
    "IV": {"encoder": "linear", "core": "plain_ssm"},
    "amp_only": {"spectral": "amp_only"},
    "amp_phase": {"spectral": "amp_phase"},
    "phase_only": {"spectral": "phase_only"},
    "fixed_omega": {"omega_mode": "fixed"},
}


def cmd_ablate(args) -> int:
    file_values = parse_config_file(args.config)
    flag_overrides = _overrides_from_flags(args)
    cases = [c.strip() for c in args.cases.split(",") if c.strip()]
    if not cases:
        raise ConfigError("--cases is empty")
    for case in cases:
        if case == "III":
            raise ConfigError(
                "case III wires in an external frequency block and is out of "
                "scope; runnable cases: " + ", ".join(ABLATION_CASES))
        if case not in ABLATION_CASES:
            raise ConfigError(f"unknown ablation case {case!r}; known: "
                              + ", ".join(ABLATION_CASES))
    summary_dir = make_run_dir(args, "ablate", resolve_config(file_values,
                                                              flag_overrides))
    results = []
    for case in cases:
        cfg = resolve_config(file_values,
                             {**flag_overrides, **ABLATION_CASES[case]})
        ds = load_dataset(cfg)
        mcfg = model_config_from(cfg, ds.n_vars)
        tcfg = train_config_from(cfg)
        run_dir = os.path.join(summary_dir, f"case_{case}")
        os.makedirs(run_dir)
        write_resolved(run_dir, cfg)
        tr = data_io.windows(ds, "train", mcfg.t_len, mcfg.horizon)
        va = data_io.windows(ds, "val", mcfg.t_len, mcfg.horizon)
        te = data_io.windows(ds, "test", mcfg.t_len, mcfg.horizon)
        ps = model.build_params(mcfg, (ds.mean, ds.std), seed=tcfg.seed)
        best, _ = trainer.train(ps, mcfg, tr, va, tcfg, run_dir=run_dir)
        m = trainer.evaluate(best, mcfg, te)
        results.append((case, m))
        print(f"case {case}: test mse {m['mse']:.6g} mae {m['mae']:.6g}")
    with open(os.path.join(summary_dir, "summary.csv"), "w", newline="",
              encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["case", "mse", "mae"])
        for case, m in results:
            w.writerow([case, f"{m['mse']:.10g}", f"{m['mae']:.10g}"])
    print(os.path.join(summary_dir, "summary.csv"))
    return EXIT_OK


def cmd_inspect_freq(args) -> int:
    cfg = resolve_config(parse_config_file(args.config),
                         _overrides_from_flags(args))
    ds, mcfg, ps = _load_model_for(args, cfg)
    if mcfg.core != "afgssm":
        raise ConfigError("inspect-freq needs core=afgssm (plain_ssm has no "
                          "frequency state)")
    ws = data_io.windows(ds, args.split, mcfg.t_len, mcfg.horizon)
    if not 0 <= args.window < ws.count:
        raise ConfigError(f"--window {args.window} out of range "
                          f"[0, {ws.count})")
    if not 0 <= args.channel < mcfg.n_vars:
        raise ConfigError(f"--channel {args.channel} out of range "
                          f"[0, {mcfg.n_vars})")
    if not 0 <= args.block < mcfg.blocks:
        raise ConfigError(f"--block {args.block} out of range "
                          f"[0, {mcfg.blocks})")
    from . import afgssm as scan_mod
    from .numerics import add
    plan = mcfg.plan()
    u_steps = model._encode_windows([ws.inputs[args.window]], ps, mcfg, plan)
    diag = None
    omega_data = None
    for i in range(mcfg.blocks):
        p = model._scan_params(ps, i, mcfg)
        omega = model._block_omega(u_steps, ps, i, mcfg)
        z_steps, d = scan_mod.scan_sequence(u_steps, omega, p, mcfg.spectral,
                                            record=True)
        if i == args.block:
            diag = d
            omega_data = omega.data
        u_steps = [add(u, z) for u, z in zip(u_steps, z_steps)]
    run_dir = make_run_dir(args, "inspect-freq", cfg)
    write_resolved(run_dir, cfg)
    row = args.channel   # batch holds one window, so row index = channel
    a_path = os.path.join(run_dir, "a_gate.csv")
    with open(a_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "s", "v", "value"])
        for m, a in enumerate(diag["a"]):
            gate = a[row]                     # [S, V]
            for si in range(gate.shape[0]):
                for vi in range(gate.shape[1]):
                    w.writerow([m, si, vi, f"{gate[si, vi]:.10g}"])
    o_path = os.path.join(run_dir, "omega.csv")
    base = scan_mod.omega_base(mcfg.v)
    with open(o_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["v", "omega_base", "omega"])
        for vi in range(mcfg.v):
            w.writerow([vi, f"{base[vi]:.10g}",
                        f"{omega_data[row, vi]:.10g}"])
    amp_path = os.path.join(run_dir, "amplitude.csv")
    with open(amp_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "s", "v", "value"])
        for m, amp in enumerate(diag["amp"]):
            grid = amp[row]
            for si in range(grid.shape[0]):
                for vi in range(grid.shape[1]):
                    w.writerow([m, si, vi, f"{grid[si, vi]:.10g}"])
    print(run_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="afgm",
        description="Frequency-gated state-space forecaster toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="flat key=value file")
        else:
            p.add_argument("--config", help="flat key=value file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--runs-dir", help="run directory root "
                       "(default $AFGM_RUNS_DIR or ./runs)")

    p = sub.add_parser("train", help="train a model, write a run directory")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="sweep one key over comma values (repeatable, "
                        "cartesian)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export forecasts as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--limit", type=int, default=0,
                   help="export at most this many windows (0 = all)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p, needs_config=False)
    p.add_argument("--n-vars", type=int, default=2, dest="n_vars")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="time the scan at given sizes")
    p.add_argument("--m", default="64,128,256,512", help="comma list")
    p.add_argument("--s", default="8", help="comma list")
    p.add_argument("--v", default="8", help="comma list")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs-dir", help="run directory root")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="run named variants with shared seed")
    common(p)
    p.add_argument("--cases", default="I,II,IV",
                   help="comma list from: " + ", ".join(ABLATION_CASES))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-freq",
                       help="dump per-step gate and frequency CSVs")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--block", type=int, default=0)
    p.set_defaults(func=cmd_inspect_freq)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionError, DomainError, NumericError, ContractError) as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IngestionError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
