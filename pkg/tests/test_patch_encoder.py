"""Patch encoder: planning, padding, blending, and embedding contracts."""
import numpy as np
import pytest

from afgm import patch_encoder as pe
from afgm.errors import ConfigError
from afgm.numerics import Graph, Tensor, constant, reduce_sum, square
from afgm.oracles import reference
from afgm.oracles.fd import fd_gradient, relative_error
from afgm.rng import generator


def seeded(seed):
    return generator(seed, "test")


def random_params(rng, t_len, d, v, patch_lengths, conv_width=3):
    plan = pe.make_plan(t_len, patch_lengths)
    projections = {}
    for spec in plan.scales:
        projections[spec.length] = (
            constant(rng.normal(size=(spec.length, v)) * 0.3),
            constant(rng.normal(size=(v,)) * 0.1))
    params = pe.EncoderParams(
        conv_kernel=constant(rng.normal(size=(conv_width, d, d)) * 0.2),
        alpha_raw=constant(np.float64(rng.normal() * 0.5)),
        projections=projections)
    return plan, params


# ---------------------------------------------------------------------------
# plan construction

def test_plan_exact_division():
    plan = pe.make_plan(96, (96, 48, 24))
    assert [s.length for s in plan.scales] == [96, 48, 24]
    assert [s.count for s in plan.scales] == [1, 2, 4]
    assert [s.pad for s in plan.scales] == [0, 0, 0]
    assert plan.total_patches == 7


def test_plan_whole_window_single_patch():
    plan = pe.make_plan(96, (96,))
    assert plan.total_patches == 1
    assert plan.scales[0].count == 1


def test_plan_ragged_division_pads_left():
    # 96 is not a multiple of 36: 3 patches, 12 padded rows at the front
    plan = pe.make_plan(96, (36,))
    spec = plan.scales[0]
    assert spec.count == 3
    assert spec.pad == 12
    assert plan.total_patches == 3
    # padded positions clamp to row 0 (replicate), later rows are identity
    first, last = spec.indices[0], spec.indices[-1]
    assert first[0] == 0 and first[11] == 0
    assert first[12] == 0 and first[13] == 1
    assert last[-1] == 95


def test_plan_patch_counts_sum():
    plan = pe.make_plan(96, (48, 24, 18, 9))
    # ceil(96/p) per scale
    assert [s.count for s in plan.scales] == [2, 4, 6, 11]
    assert plan.total_patches == 23


def test_plan_drops_oversized_scale_with_warning():
    with pytest.warns(UserWarning):
        plan = pe.make_plan(16, (32, 8))
    assert [s.length for s in plan.scales] == [8]
    assert tuple(plan.dropped) == (32,)


def test_plan_rejects_empty_and_nonpositive():
    with pytest.raises(ConfigError):
        pe.make_plan(16, ())
    with pytest.raises(ConfigError):
        pe.make_plan(16, (0, 8))
    with pytest.warns(UserWarning):
        with pytest.raises(ConfigError):
            pe.make_plan(16, (32,))   # every scale dropped


# ---------------------------------------------------------------------------
# blending

def test_blend_alpha_negative_inf_is_identity():
    # sigmoid(-40) ~ 4e-18: the blend reduces to the raw input
    rng = seeded(31)
    x = rng.normal(size=(20, 3))
    plan, params = random_params(rng, 20, 3, 4, (10,))
    params = pe.EncoderParams(conv_kernel=params.conv_kernel,
                              alpha_raw=constant(np.float64(-40.0)),
                              projections=params.projections)
    out = pe.interaction_encode(constant(x), params)
    np.testing.assert_allclose(out.data, x, rtol=0, atol=1e-12)


def test_blend_alpha_positive_inf_is_pure_conv():
    rng = seeded(32)
    x = rng.normal(size=(20, 3))
    plan, params = random_params(rng, 20, 3, 4, (10,))
    params = pe.EncoderParams(conv_kernel=params.conv_kernel,
                              alpha_raw=constant(np.float64(40.0)),
                              projections=params.projections)
    out = pe.interaction_encode(constant(x), params)
    conv = reference.conv_replicate(x, params.conv_kernel.data)
    np.testing.assert_allclose(out.data, conv, rtol=0, atol=1e-12)


def test_blend_is_convex_combination():
    rng = seeded(33)
    x = rng.normal(size=(18, 2))
    plan, params = random_params(rng, 18, 2, 4, (9,))
    out = pe.interaction_encode(constant(x), params).data
    conv = reference.conv_replicate(x, params.conv_kernel.data)
    alpha = 1.0 / (1.0 + np.exp(-float(params.alpha_raw.data)))
    np.testing.assert_allclose(out, alpha * conv + (1 - alpha) * x, atol=1e-12)
    lo = np.minimum(conv, x) - 1e-12
    hi = np.maximum(conv, x) + 1e-12
    assert (out >= lo).all() and (out <= hi).all()


# ---------------------------------------------------------------------------
# embedding

def test_embed_matches_reference_oracle():
    rng = seeded(34)
    t_len, d, v = 30, 3, 5
    x = rng.normal(size=(t_len, d))
    plan, params = random_params(rng, t_len, d, v, (15, 10, 6))
    steps = pe.embed_steps(constant(x), params, plan)
    arrays = {
        "encoder.conv_kernel": params.conv_kernel.data,
        "encoder.alpha_raw": params.alpha_raw.data,
    }
    for p, (w, b) in params.projections.items():
        arrays[f"encoder.proj{p}.weight"] = w.data
        arrays[f"encoder.proj{p}.bias"] = b.data
    ref = reference.encode(x, arrays,
                           dict(T=t_len, D=d, V=v, patch_lengths=(15, 10, 6),
                                conv_width=3, encoder="interactive"))
    assert len(steps) == plan.total_patches == ref.shape[1]
    got = np.stack([s.data for s in steps], axis=1)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_embed_shape_law():
    rng = seeded(35)
    for t_len, lengths in [(96, (48, 24)), (96, (96, 72, 48, 36, 18, 9)),
                           (50, (25, 10, 7))]:
        d, v = 4, 6
        x = rng.normal(size=(t_len, d))
        plan, params = random_params(rng, t_len, d, v, lengths)
        out = pe.embed(constant(x), params, plan)
        expect_m = sum(-(-t_len // p) for p in lengths)
        assert out.shape == (d, expect_m, v)
        assert plan.total_patches == expect_m


def test_embed_identity_projection_reproduces_patches():
    # alpha -> 0 disables the conv; identity weights and zero bias make each
    # embedding exactly its source patch
    rng = seeded(36)
    t_len, d, p = 12, 2, 4
    x = rng.normal(size=(t_len, d))
    plan = pe.make_plan(t_len, (p,))
    params = pe.EncoderParams(
        conv_kernel=constant(rng.normal(size=(3, d, d))),
        alpha_raw=constant(np.float64(-40.0)),
        projections={p: (constant(np.eye(p)), constant(np.zeros(p)))})
    steps = pe.embed_steps(constant(x), params, plan)
    for q in range(3):
        np.testing.assert_allclose(steps[q].data, x[q * p:(q + 1) * p].T,
                                   atol=1e-12)


def test_embed_zero_weights_give_bias_rows():
    rng = seeded(37)
    t_len, d, p, v = 12, 3, 6, 4
    bias = rng.normal(size=v)
    plan = pe.make_plan(t_len, (p,))
    params = pe.EncoderParams(
        conv_kernel=constant(rng.normal(size=(3, d, d))),
        alpha_raw=constant(np.float64(0.3)),
        projections={p: (constant(np.zeros((p, v))), constant(bias))})
    steps = pe.embed_steps(constant(rng.normal(size=(t_len, d))), params, plan)
    for s in steps:
        np.testing.assert_allclose(s.data, np.tile(bias, (d, 1)), atol=1e-12)


def test_channel_permutation_equivariance_without_conv():
    # with the conv disabled, channels never interact, so permuting input
    # channels permutes the embedded channel axis identically
    rng = seeded(38)
    t_len, d, v = 16, 4, 5
    x = rng.normal(size=(t_len, d))
    plan, params = random_params(rng, t_len, d, v, (8, 4))
    params = pe.EncoderParams(conv_kernel=params.conv_kernel,
                              alpha_raw=constant(np.float64(-40.0)),
                              projections=params.projections)
    perm = np.array([2, 0, 3, 1])
    base = pe.embed(constant(x), params, plan).data
    permuted = pe.embed(constant(x[:, perm]), params, plan).data
    np.testing.assert_allclose(permuted, base[perm], atol=1e-12)


def test_linear_encoder_matches_reference():
    rng = seeded(39)
    t_len, d, v, m_total = 20, 3, 4, 5
    x = rng.normal(size=(t_len, d))
    w = rng.normal(size=(t_len, m_total * v)) * 0.3
    b = rng.normal(size=(m_total * v,)) * 0.1
    steps = pe.linear_encode_steps(constant(x), constant(w), constant(b),
                                   m_total, v)
    ref = reference.encode(x, {"encoder.linear.weight": w,
                               "encoder.linear.bias": b},
                           dict(T=t_len, D=d, V=v, patch_lengths=(4,),
                                encoder="linear"))
    assert len(steps) == m_total
    got = np.stack([s.data for s in steps], axis=1)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_embed_gradients_match_finite_differences():
    rng = seeded(40)
    t_len, d, v = 14, 2, 3
    x = rng.normal(size=(t_len, d))
    plan, params = random_params(rng, t_len, d, v, (7, 4))
    weights = constant(rng.normal(size=(d, plan.total_patches, v)))

    leaves = {
        "kernel": params.conv_kernel.data.copy(),
        "alpha": params.alpha_raw.data.copy(),
        "w7": params.projections[7][0].data.copy(),
        "b4": params.projections[4][1].data.copy(),
    }

    def build(vals):
        p = pe.EncoderParams(
            conv_kernel=Tensor(vals["kernel"], requires_grad=True),
            alpha_raw=Tensor(vals["alpha"], requires_grad=True),
            projections={
                7: (Tensor(vals["w7"], requires_grad=True),
                    constant(params.projections[7][1].data)),
                4: (constant(params.projections[4][0].data),
                    Tensor(vals["b4"], requires_grad=True)),
            })
        out = pe.embed(constant(x), p, plan)
        return p, reduce_sum(square(out * weights))

    with Graph() as g:
        p, loss = build(leaves)
        g.backward(loss)
    grads = {"kernel": p.conv_kernel.grad_or_zeros(),
             "alpha": p.alpha_raw.grad_or_zeros(),
             "w7": p.projections[7][0].grad_or_zeros(),
             "b4": p.projections[4][1].grad_or_zeros()}

    for key in leaves:
        def value_at(arr, key=key):
            vals = dict(leaves)
            vals[key] = arr
            with Graph():
                _, l2 = build(vals)
            return l2.item()
        num = fd_gradient(value_at, leaves[key], h=1e-5)
        assert relative_error(grads[key], num).max() < 1e-4, key
