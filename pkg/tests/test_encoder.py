import numpy as np
import pytest

from cae_rl.encoder import CurrentStepNorm, EncoderConfig, HistoryEncoder
from cae_rl.errors import DimensionError
from cae_rl.nn import average_pool, depthwise_separable, linear, multi_head_attention, pool_normalize
from cae_rl.nn.gradcheck import check_layer

SMALL = EncoderConfig(d_model=4, num_heads=2, channels=2)


def degenerate_encoder(in_features, L, cfg=SMALL):
    """Delta kernels, identity pointwise, zero-logit attention, random projection."""
    enc = HistoryEncoder(in_features, L, cfg)  # rng=None gives the degenerate init
    r = np.random.default_rng(1)
    enc.proj.params["weight"][...] = r.normal(size=enc.proj.params["weight"].shape)
    enc.proj.params["bias"][...] = r.normal(size=cfg.d_model)
    return enc


def test_pool_normalize_examples():
    assert np.array_equal(pool_normalize(np.zeros(3)), np.zeros(3))
    np.testing.assert_allclose(pool_normalize(np.array([3.0, 4.0])),
                               np.array([3.0, 4.0]) / np.sqrt(12.5 + 1e-5), rtol=0, atol=1e-15)
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(pool_normalize(10 * x), pool_normalize(x), rtol=1e-4)


def test_encode_equals_stepwise_composition(rng):
    enc = HistoryEncoder(3, 4, SMALL, rng=rng)
    w = rng.normal(size=(4, 3))
    p = enc.params
    u = depthwise_separable(w, p["conv.time_kernel"], p["conv.obs_kernel"],
                            p["conv.pointwise_weight"], p["conv.pointwise_bias"])
    tokens = np.stack([u[:, t, :].reshape(-1) for t in range(4)])  # channel-major per time step
    h = linear(tokens, p["proj.weight"], p["proj.bias"])
    a = multi_head_attention(h, p["attn.W_q"], p["attn.W_k"], p["attn.W_v"], p["attn.W_o"], 2)
    np.testing.assert_allclose(enc.forward(w), average_pool(a), rtol=0, atol=1e-15)


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_constant_window_output_independent_of_length(L):
    v = np.array([0.7, -0.2])
    outs = degenerate_encoder(2, L).forward(np.tile(v, (L, 1)))
    ref = degenerate_encoder(2, 1).forward(v[None])
    np.testing.assert_allclose(outs, ref, atol=1e-14)


def test_single_row_pool_is_identity(rng):
    enc = HistoryEncoder(2, 1, SMALL, rng=rng)
    w = rng.normal(size=(1, 2))
    enc.forward(w)
    attended = enc.attn.forward(enc.proj.forward(enc.conv.forward(w).reshape(1, -1)))
    np.testing.assert_allclose(enc.forward(w), attended[0], atol=1e-15)


def test_permutation_invariance_degenerate(rng):
    # 1x1 kernels: no time mixing, so only the pooled set of rows matters
    cfg = EncoderConfig(d_model=4, num_heads=2, channels=2, k_time=1, k_obs=1)
    enc = degenerate_encoder(3, 5, cfg)
    w = rng.normal(size=(5, 3))
    np.testing.assert_allclose(enc.forward(w[::-1]), enc.forward(w), atol=1e-14)


@pytest.mark.parametrize("N", [1, 3, 6])
def test_output_width_independent_of_history(N, rng):
    enc = HistoryEncoder(2, N, SMALL, rng=rng)
    assert enc.forward(rng.normal(size=(7, N, 2))).shape == (7, SMALL.d_model)


def test_wrong_window_length():
    with pytest.raises(DimensionError):
        HistoryEncoder(2, 3, SMALL).forward(np.zeros((4, 2)))


def test_encoder_gradients(rng, backend):
    enc = HistoryEncoder(3, 4, SMALL, rng=rng)
    errors = check_layer(enc, rng.uniform(-1, 1, size=(2, 4, 3)), rng)
    assert max(errors.values()) < 1e-6, errors


def test_zero_output_gradient(rng):
    enc = HistoryEncoder(3, 4, SMALL, rng=rng)
    enc.forward(rng.normal(size=(4, 3)))
    grads, dw = enc.backward(np.zeros(SMALL.d_model))
    assert not dw.any()
    assert all(not g.any() for g in grads.values())


def test_degenerate_row_gradient_is_pooled_pass_through():
    # 1x1 kernels keep rows separate; zero logits give each row weight 1/L,
    # so d(sum(out))/d(row) = (1/L) * column sums of the token map.
    cfg = EncoderConfig(d_model=4, num_heads=2, channels=1, k_time=1, k_obs=1)
    enc = degenerate_encoder(2, 3, cfg)
    enc.forward(np.random.default_rng(3).normal(size=(3, 2)))
    _, dw = enc.backward(np.ones(4))
    per_row = enc.proj.params["weight"].sum(axis=0) / 3.0
    np.testing.assert_allclose(dw, np.tile(per_row, (3, 1)), atol=1e-14)


def test_current_step_norm_scalar_pass_through(rng):
    norm = CurrentStepNorm()
    x = rng.normal(size=(5, 1))
    assert np.array_equal(norm.forward(x), x)
    _, dx = norm.backward(np.ones((5, 1)))
    assert np.array_equal(dx, np.ones((5, 1)))
    v = rng.normal(size=(5, 3))
    np.testing.assert_allclose(norm.forward(v), pool_normalize(v))


def test_shared_copy_aliases(rng):
    enc = HistoryEncoder(2, 3, SMALL, rng=rng)
    twin = enc.shared_copy()
    for k in enc.params:
        assert twin.params[k] is enc.params[k]
