"""Checkpoint format: bit-exact round trips and loud failure modes."""
import hashlib
import struct

import numpy as np
import pytest

from afgm import checkpoint, model
from afgm.errors import ConfigError, IngestionError
from afgm.rng import generator


def toy_params(seed=3, blocks=1):
    cfg = model.ModelConfig(t_len=24, horizon=6, n_vars=2, v=4, blocks=blocks,
                            patch_lengths=(12, 6)).validate()
    return cfg, model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=seed,
                                   init="random")


def test_round_trip_is_bit_exact(tmp_path):
    cfg, ps = toy_params()
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    checkpoint.save(p1, ps)
    other = model.build_params(cfg, (np.ones(2), 2.0 * np.ones(2)), seed=999)
    checkpoint.load(p1, other)
    for name in ps.names():
        got = other[name].data
        want = ps[name].data
        assert got.shape == want.shape
        assert (got == want).all(), name            # equality, not closeness
    checkpoint.save(p2, other)
    h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
    h2 = hashlib.sha256(p2.read_bytes()).hexdigest()
    assert h1 == h2


def test_round_trip_preserves_nonfinite_free_exotic_values(tmp_path):
    # denormals, negative zero, and exact binary fractions all survive
    cfg, ps = toy_params()
    arrays = ps.to_arrays()
    probe = arrays["head.weight"]
    probe.flat[0] = 5e-324
    probe.flat[1] = -0.0
    probe.flat[2] = 1.0 / 3.0
    ps.load_arrays(arrays)
    path = tmp_path / "w.ckpt"
    checkpoint.save(path, ps)
    other = model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=1)
    checkpoint.load(path, other)
    w = other["head.weight"].data
    assert w.flat[0] == 5e-324
    assert np.signbit(w.flat[1])
    assert w.flat[2] == 1.0 / 3.0


def test_file_layout_header(tmp_path):
    cfg, ps = toy_params()
    path = tmp_path / "h.ckpt"
    checkpoint.save(path, ps)
    blob = path.read_bytes()
    assert blob[:4] == b"AFGM"
    version, count = struct.unpack_from("<II", blob, 4)
    assert version == checkpoint.VERSION
    assert count == len(ps)
    # first manifest entry is norm.mean with its role and rank 1
    name_len = struct.unpack_from("<H", blob, 12)[0]
    assert blob[14:14 + name_len].decode() == "norm.mean"


def test_read_entries_preserves_order_and_roles(tmp_path):
    cfg, ps = toy_params()
    path = tmp_path / "o.ckpt"
    checkpoint.save(path, ps)
    entries = checkpoint.read_entries(path)
    assert [e[0] for e in entries] == ps.names()
    roles = {name: role for name, role, _ in entries}
    assert roles["norm.mean"] == "stat"
    assert roles["head.weight"] == "head"
    assert roles["block0.scan.w_b"] == "scan"


def test_inventory_mismatch_fails_loudly(tmp_path):
    _, ps1 = toy_params(blocks=1)
    _, ps2 = toy_params(blocks=2)
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, ps1)
    with pytest.raises(ConfigError):
        checkpoint.load(path, ps2)


def test_shape_mismatch_fails_loudly(tmp_path):
    cfg, ps = toy_params()
    path = tmp_path / "s.ckpt"
    checkpoint.save(path, ps)
    other_cfg = model.ModelConfig(t_len=24, horizon=8, n_vars=2, v=4,
                                  patch_lengths=(12, 6)).validate()
    other = model.build_params(other_cfg, (np.zeros(2), np.ones(2)), seed=1)
    with pytest.raises(ConfigError):
        checkpoint.load(path, other)


def test_corrupted_files_raise_ingestion_errors(tmp_path):
    cfg, ps = toy_params()
    path = tmp_path / "c.ckpt"
    checkpoint.save(path, ps)
    blob = bytearray(path.read_bytes())

    bad = tmp_path / "bad_magic.ckpt"
    bad.write_bytes(b"NOPE" + bytes(blob[4:]))
    with pytest.raises(IngestionError):
        checkpoint.read_entries(bad)

    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(bytes(blob[:len(blob) - 9]))
    with pytest.raises(IngestionError):
        checkpoint.read_entries(trunc)

    vers = tmp_path / "vers.ckpt"
    wrong = bytearray(blob)
    struct.pack_into("<I", wrong, 4, 77)
    vers.write_bytes(bytes(wrong))
    with pytest.raises(IngestionError):
        checkpoint.read_entries(vers)

    tail = tmp_path / "tail.ckpt"
    tail.write_bytes(bytes(blob) + b"\x00" * 8)
    with pytest.raises(IngestionError):
        checkpoint.read_entries(tail)


def test_scalar_and_rank3_tensors_round_trip(tmp_path):
    rng = generator(5, "test")
    entries = [
        ("alpha", "encoder", np.float64(0.25)),
        ("kernel", "encoder", rng.normal(size=(3, 2, 2))),
        ("bias", "head", rng.normal(size=(4,))),
    ]
    path = tmp_path / "r.ckpt"
    checkpoint.save_entries(path, entries)
    back = checkpoint.read_entries(path)
    assert [(n, r) for n, r, _ in back] == [(n, r) for n, r, _ in entries]
    for (_, _, want), (_, _, got) in zip(entries, back):
        want = np.asarray(want)
        assert got.shape == want.shape
        assert (got == want).all()


def test_forward_after_round_trip_is_bit_identical(tmp_path):
    cfg, ps = toy_params(seed=8)
    x = generator(6, "test").normal(size=(24, 2))
    before = model.forward(x, ps, cfg).data
    path = tmp_path / "f.ckpt"
    checkpoint.save(path, ps)
    other = model.build_params(cfg, (np.zeros(2), np.ones(2)), seed=123)
    checkpoint.load(path, other)
    after = model.forward(x, other, cfg).data
    assert (before == after).all()
