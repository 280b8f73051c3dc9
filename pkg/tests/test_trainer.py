"""Trainer: Adam, clipping, early stopping, determinism, gradcheck."""
import numpy as np
import pytest

from afgm import checkpoint, data_io, model, trainer
from afgm.errors import ConfigError, NumericError
from afgm.numerics import Graph, Tensor, square, sub
from afgm.oracles.synthetic import write_ett_like_csv
from afgm.rng import generator


def toy_setup(tmp_path, seed=4, n=700, d=3):
    path = tmp_path / "toy.csv"
    write_ett_like_csv(path, n_rows=n, n_vars=d)
    ds = data_io.split(data_io.load_csv(path), scheme="ratio")
    cfg = model.ModelConfig(t_len=24, horizon=6, n_vars=d, v=4, blocks=1,
                            patch_lengths=(12, 6)).validate()
    tr = data_io.windows(ds, "train", 24, 6)
    va = data_io.windows(ds, "val", 24, 6)
    ps = model.build_params(cfg, (ds.mean, ds.std), seed=seed)
    return ds, cfg, tr, va, ps


# ---------------------------------------------------------------------------
# TrainConfig

def test_train_config_validation():
    trainer.TrainConfig().validate()
    trainer.TrainConfig(lr=0.0).validate()       # explicit freeze is legal
    trainer.TrainConfig(lr=0.1).validate()
    for bad in (dict(lr=0.5), dict(lr=1e-7), dict(batch_size=0),
                dict(patience=0), dict(max_epochs=0), dict(grad_clip=0.0)):
        with pytest.raises(ConfigError):
            trainer.TrainConfig(**bad).validate()


# ---------------------------------------------------------------------------
# Adam against a hand-rolled oracle

def test_adam_trajectory_matches_hand_rolled_loop():
    rng = generator(30, "test")
    x0 = rng.normal(size=5)
    target = rng.normal(size=5)
    p = Tensor(x0.copy(), requires_grad=True)
    t_const = Tensor(target)
    opt = trainer.Adam([("p", p)], lr=0.01, grad_clip=1e9)

    # independent loop, textbook update rule
    x = x0.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for t in range(1, 26):
        with Graph() as g:
            from afgm.numerics import reduce_sum
            g.backward(reduce_sum(square(sub(p, t_const))))
        grad = p.grad_or_zeros().copy()
        opt.step({"p": grad})
        p.grad = None

        g_ref = 2.0 * (x - target)
        m = 0.9 * m + 0.1 * g_ref
        v = 0.999 * v + 0.001 * g_ref * g_ref
        m_hat = m / (1.0 - 0.9 ** t)
        v_hat = v / (1.0 - 0.999 ** t)
        x = x - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(p.data, x, atol=1e-12), t


def test_adam_scalar_quadratic_converges():
    p = Tensor(np.float64(0.0), requires_grad=True)
    opt = trainer.Adam([("p", p)], lr=0.1, grad_clip=1e9)
    for _ in range(500):
        with Graph() as g:
            g.backward(square(sub(p, 3.0)))
        opt.step({"p": p.grad_or_zeros()})
        p.grad = None
    assert abs(float(p.data) - 3.0) < 1e-3


def test_clip_bounds_global_norm():
    rng = generator(31, "test")
    params = [(f"p{i}", Tensor(rng.normal(size=(3, 3)), requires_grad=True))
              for i in range(3)]
    opt = trainer.Adam(params, lr=1e-3, grad_clip=1.0)
    grads = {n: rng.normal(size=(3, 3)) * 10 for n, _ in params}
    clipped, pre_norm = opt.clip(dict(grads))
    assert pre_norm > 1.0
    post = np.sqrt(sum(np.sum(g * g) for g in clipped.values()))
    assert post <= 1.0 + 1e-9
    # direction is preserved
    np.testing.assert_allclose(clipped["p0"] / np.linalg.norm(clipped["p0"]),
                               grads["p0"] / np.linalg.norm(grads["p0"]),
                               atol=1e-12)
    small = {n: g * 1e-6 for n, g in grads.items()}
    untouched, _ = opt.clip(dict(small))
    for n in small:
        np.testing.assert_array_equal(untouched[n], small[n])


def test_optimizer_state_round_trip(tmp_path):
    rng = generator(32, "test")
    p = Tensor(rng.normal(size=4), requires_grad=True)
    opt = trainer.Adam([("p", p)], lr=1e-3)
    for _ in range(3):
        opt.step({"p": rng.normal(size=4)})
    path = tmp_path / "opt.ckpt"
    checkpoint.save_entries(path, opt.state_entries())
    opt2 = trainer.Adam([("p", Tensor(p.data.copy(), requires_grad=True))],
                        lr=1e-3)
    opt2.load_state_entries(checkpoint.read_entries(path))
    assert opt2.step_count == 3
    np.testing.assert_array_equal(opt2.m["p"], opt.m["p"])
    np.testing.assert_array_equal(opt2.v["p"], opt.v["p"])
    with pytest.raises(ConfigError):
        opt2.load_state_entries(checkpoint.read_entries(path)[:-1])


def test_non_finite_gradient_aborts():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = trainer.Adam([("p", p)], lr=1e-3)
    with pytest.raises(NumericError):
        opt.step({"p": np.array([1.0, np.inf])})


# ---------------------------------------------------------------------------
# train loop

def test_lr_zero_leaves_parameters_unchanged(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    before = ps.to_arrays()
    trainer.train(ps, cfg, tr, va,
                  trainer.TrainConfig(lr=0.0, max_epochs=2, seed=4,
                                      timing=False))
    for name, arr in ps.to_arrays().items():
        assert (arr == before[name]).all(), name


def test_training_reduces_validation_mse(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    tc = trainer.TrainConfig(lr=1e-2, max_epochs=4, seed=4, timing=False)
    best, hist = trainer.train(ps, cfg, tr, va, tc)
    assert len(hist) >= 1
    assert hist[-1]["val_mse"] < hist[0]["val_mse"]
    assert hist[-1]["train_mse"] < hist[0]["train_mse"]


def test_best_val_is_monotone_and_returned(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    tc = trainer.TrainConfig(lr=1e-2, max_epochs=5, seed=4, timing=False)
    best, hist = trainer.train(ps, cfg, tr, va, tc)
    vals = [h["val_mse"] for h in hist]
    running = np.minimum.accumulate(vals)
    assert (np.diff(running) <= 0).all()
    got = trainer.evaluate(best, cfg, va)
    assert abs(got["mse"] - min(vals)) < 1e-12


def test_early_stopping_halts_after_patience(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    # lr=0 never improves, so epoch 0 sets the best and patience counts up
    tc = trainer.TrainConfig(lr=0.0, max_epochs=10, patience=2, seed=4,
                             timing=False)
    _, hist = trainer.train(ps, cfg, tr, va, tc)
    assert len(hist) == 3      # epoch 0 best, epochs 1-2 stale, stop


def test_identical_seeds_identical_history(tmp_path):
    _, cfg, tr, va, ps1 = toy_setup(tmp_path, seed=4)
    tc = trainer.TrainConfig(lr=1e-2, max_epochs=3, seed=4, timing=False)
    d1 = tmp_path / "r1"
    d2 = tmp_path / "r2"
    trainer.train(ps1, cfg, tr, va, tc, run_dir=d1)
    _, cfg2, tr2, va2, ps2 = toy_setup(tmp_path, seed=4)
    trainer.train(ps2, cfg2, tr2, va2,
                  trainer.TrainConfig(lr=1e-2, max_epochs=3, seed=4,
                                      timing=False), run_dir=d2)
    assert (d1 / "history.csv").read_bytes() == (d2 / "history.csv").read_bytes()


def test_run_dir_contents_and_checkpoint_quality(tmp_path):
    ds, cfg, tr, va, ps = toy_setup(tmp_path)
    tc = trainer.TrainConfig(lr=1e-2, max_epochs=3, seed=4, timing=False)
    rd = tmp_path / "run"
    best, hist = trainer.train(ps, cfg, tr, va, tc, run_dir=rd)
    assert sorted(p.name for p in rd.iterdir()) == [
        "history.csv", "model.ckpt", "optimizer.ckpt"]
    lines = (rd / "history.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse,seconds"
    assert len(lines) == len(hist) + 1
    loaded = model.build_params(cfg, (np.zeros(3), np.ones(3)), seed=99)
    checkpoint.load(rd / "model.ckpt", loaded)
    x = tr.inputs[0] * ds.std + ds.mean
    assert (model.forward(x, best, cfg).data
            == model.forward(x, loaded, cfg).data).all()


@pytest.mark.filterwarnings("ignore:overflow")
def test_nan_loss_aborts_with_coordinates(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    arrays = ps.to_arrays()
    arrays["head.weight"] = arrays["head.weight"] * 0 + 1e200
    ps.load_arrays(arrays)
    tc = trainer.TrainConfig(lr=1e-3, max_epochs=1, seed=4, timing=False)
    with pytest.raises(NumericError, match=r"epoch 0, batch 0"):
        trainer.train(ps, cfg, tr, va, tc)


def test_evaluate_agrees_with_metrics_of_predictions(tmp_path):
    _, cfg, tr, va, ps = toy_setup(tmp_path)
    ev = trainer.evaluate(ps, cfg, va, batch_size=17)
    preds = trainer.predict_rows(ps, cfg, va, batch_size=29)
    m = data_io.metrics(preds, va.targets)
    assert abs(ev["mse"] - m["mse"]) < 1e-12
    assert abs(ev["mae"] - m["mae"]) < 1e-12


# ---------------------------------------------------------------------------
# gradient check harness

def test_grad_check_passes_on_toy_config(tmp_path):
    cfg = model.ModelConfig(t_len=24, horizon=6, n_vars=2, v=4, blocks=1,
                            patch_lengths=(12,)).validate()
    ps = model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=1,
                            init="random")
    rng = generator(1, "test")
    x = rng.normal(size=(24, 2))
    y = rng.normal(size=(6, 2))
    report = trainer.grad_check(ps, cfg, x, y)
    assert report.passed
    assert set(report.per_param) == {n for n, _ in ps.trainable_items()}
    name, err = report.worst
    assert err < 1e-4
    assert any("PASS" in line for line in report.lines())


def test_grad_check_zero_loss_zero_gradients(tmp_path):
    cfg = model.ModelConfig(t_len=24, horizon=6, n_vars=2, v=4, blocks=1,
                            patch_lengths=(12,)).validate()
    ps = model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=1,
                            init="random")
    x = generator(2, "test").normal(size=(24, 2))
    y = model.forward(x, ps, cfg).data      # degenerate: target == prediction
    with Graph() as g:
        loss = model.loss_mse(model.forward(x, ps, cfg), y)
        g.backward(loss)
    assert loss.item() == 0.0
    for name, t in ps.trainable_items():
        assert np.abs(t.grad_or_zeros()).max() < 1e-12, name


def test_grad_check_flags_exactly_the_corrupted_adjoint(tmp_path):
    cfg = model.ModelConfig(t_len=24, horizon=6, n_vars=2, v=4, blocks=1,
                            patch_lengths=(12,)).validate()
    ps = model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=1,
                            init="random")
    rng = generator(3, "test")
    x = rng.normal(size=(24, 2))
    y = rng.normal(size=(6, 2))
    report = trainer.grad_check(ps, cfg, x, y, corrupt="block0.scan.w_b")
    flagged = [n for n, e in report.per_param.items() if e >= report.tol]
    assert flagged == ["block0.scan.w_b"]
    assert not report.passed
