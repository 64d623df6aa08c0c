import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geocontact import autodiff as ad
from geocontact.autodiff import ParameterStore
from geocontact.exceptions import ConfigError, DimensionError
from geocontact.interaction import (
    ResNetConfig,
    contact_probabilities,
    deinterleave,
    dilated_resnet,
    format_matrix_csv,
    format_pgm,
    init_interaction_params,
    interleave,
    read_matrix_csv,
    se_block,
    write_contact_csv,
)
from geocontact.metrics import weighted_cross_entropy

from .gradcheck import check_op, directional_check
from .test_autodiff import conv_oracle

TINY = ResNetConfig(conv_layers_per_block=(1, 2), channels=8, se_reduction=4)


def make_store(in_channels, config, seed=0):
    store = ParameterStore()
    init_interaction_params(store, in_channels, config, np.random.default_rng(seed))
    return store


def resnet_reference(x, store, config):
    """Loop-level recomputation of the decoder."""
    P = {k: t.data.astype(np.float64) for k, t in store.items()}

    def conv(name, y, dilation=1):
        return conv_oracle(y, P[name + ".w"], P[name + ".b"], dilation)

    def inorm(y):
        mu = y.mean(axis=(0, 1))
        return (y - mu) / np.sqrt(y.var(axis=(0, 1)) + 1e-5)

    y = conv("ix.entry", x)
    for b, layers in enumerate(config.conv_layers_per_block):
        block_in, z = y, y
        for l in range(layers):
            z = conv(f"ix.block{b}.conv{l}", np.maximum(inorm(z), 0), config.dilation_cycle[l % len(config.dilation_cycle)])
        z = z + conv(f"ix.block{b}.shortcut", block_in)
        pooled = z.mean(axis=(0, 1))
        hidden = np.maximum(pooled @ P[f"ix.block{b}.se1.w"] + P[f"ix.block{b}.se1.b"], 0)
        gate = 1 / (1 + np.exp(-(hidden @ P[f"ix.block{b}.se2.w"] + P[f"ix.block{b}.se2.b"])))
        y = z * gate
    return conv("ix.head", y)


# -- interleaving -----------------------------------------------------------------
def test_interleave_example():
    t = interleave(ad.Tensor([[1.0, 2.0]]), ad.Tensor([[3.0, 4.0]]))
    assert t.data[0, 0].tolist() == [1, 3, 2, 4]


def test_interleave_shape():
    rng = np.random.default_rng(0)
    t = interleave(ad.Tensor(rng.normal(size=(13, 128))), ad.Tensor(rng.normal(size=(17, 128))))
    assert t.shape == (13, 17, 256)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(1, 9), b=st.integers(1, 9), c=st.integers(1, 6), seed=st.integers(0, 1000))
def test_deinterleave_recovers_inputs(a, b, c, seed):
    rng = np.random.default_rng(seed)
    ha, hb = rng.normal(size=(a, c)), rng.normal(size=(b, c))
    t = interleave(ad.Tensor(ha, dtype=np.float64), ad.Tensor(hb, dtype=np.float64)).data
    ra, rb = deinterleave(t)
    np.testing.assert_array_equal(ra, ha)
    np.testing.assert_array_equal(rb, hb)
    np.testing.assert_array_equal(t[:, :, 0::2], np.broadcast_to(ha[:, None, :], (a, b, c)))
    np.testing.assert_array_equal(t[:, :, 1::2], np.broadcast_to(hb[None, :, :], (a, b, c)))


def test_interleave_channel_mismatch():
    with pytest.raises(DimensionError):
        interleave(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((2, 4))))


# -- squeeze-excitation ----------------------------------------------------------------
def se_store(seed=0, channels=8, reduction=4):
    store = ParameterStore()
    rng = np.random.default_rng(seed)
    store.add("se1.w", rng.normal(size=(channels, channels // reduction)))
    store.add("se1.b", rng.normal(size=channels // reduction))
    store.add("se2.w", rng.normal(size=(channels // reduction, channels)))
    store.add("se2.b", rng.normal(size=channels))
    return store


def test_se_saturated_gate_is_identity(float64):
    store = se_store()
    store["se2.w"].data[...] = 0.0
    store["se2.b"].data[...] = 50.0
    x = ad.Tensor(np.random.default_rng(0).normal(size=(4, 5, 8)))
    np.testing.assert_array_equal(se_block(x, store, "se").data, x.data)


def test_se_constant_channels_pool_to_constant(float64):
    values = np.linspace(-1, 1, 8)
    x = np.broadcast_to(values, (3, 4, 8)).copy()
    np.testing.assert_allclose(ad.global_avg_pool(ad.Tensor(x)).data, values, atol=1e-15)


def test_se_matches_channelwise_recomputation(float64):
    store = se_store(3)
    x = np.random.default_rng(1).normal(size=(5, 6, 8))
    out = se_block(ad.Tensor(x), store, "se").data
    p = {k: t.data for k, t in store.items()}
    pooled = x.reshape(-1, 8).mean(axis=0)
    hidden = np.maximum(pooled @ p["se1.w"] + p["se1.b"], 0)
    gate = 1 / (1 + np.exp(-(hidden @ p["se2.w"] + p["se2.b"])))
    for ch in range(8):
        np.testing.assert_allclose(out[:, :, ch], x[:, :, ch] * gate[ch], atol=1e-14)


# -- decoder ---------------------------------------------------------------------------------
def test_default_layout():
    config = ResNetConfig()
    assert config.total_layers == 14
    assert config.conv_layers_per_block == (2, 3, 4, 5)
    assert config.channels == 64 and config.se_reduction == 16 and config.dilation_cycle == (1, 2, 4, 8)
    store = make_store(256, config)
    assert store["ix.entry.w"].shape == (1, 1, 256, 64)
    assert store["ix.block0.se1.w"].shape == (64, 4)
    assert store["ix.head.w"].shape == (1, 1, 64, 2)
    assert sum(1 for name in store if ".conv" in name and name.endswith(".w")) == 14


@pytest.mark.parametrize("total", [4, 5, 9, 14, 20])
def test_with_total_layers(total):
    config = ResNetConfig.with_total_layers(total)
    assert config.total_layers == total and config.num_blocks == 4
    assert min(config.conv_layers_per_block) >= 1


def test_resnet_config_validation():
    with pytest.raises(ConfigError):
        ResNetConfig.with_total_layers(3)
    with pytest.raises(ConfigError):
        ResNetConfig(channels=64, se_reduction=5)
    with pytest.raises(ConfigError):
        ResNetConfig(conv_layers_per_block=(2, 0))


def test_resnet_matches_reference(float64):
    config = ResNetConfig(conv_layers_per_block=(2, 3), channels=8, se_reduction=4, dilation_cycle=(1, 2, 4, 8))
    store = make_store(6, config, seed=2)
    x = np.random.default_rng(0).normal(size=(8, 9, 6))
    out = dilated_resnet(ad.Tensor(x), config, store).data
    np.testing.assert_allclose(out, resnet_reference(x, store, config), rtol=1e-10, atol=1e-12)


def test_single_cell_input():
    store = make_store(256, ResNetConfig())
    out = dilated_resnet(ad.Tensor(np.random.default_rng(0).normal(size=(1, 1, 256))), ResNetConfig(), store)
    assert out.shape == (1, 1, 2) and np.all(np.isfinite(out.data))


def test_zero_head_gives_bias():
    store = make_store(16, TINY)
    store["ix.head.w"].data[...] = 0.0
    store["ix.head.b"].data[...] = [0.25, -1.5]
    out = dilated_resnet(ad.Tensor(np.random.default_rng(0).normal(size=(4, 6, 16))), TINY, store).data
    np.testing.assert_array_equal(out, np.broadcast_to([0.25, -1.5], (4, 6, 2)).astype(out.dtype))


def test_rectangular_shapes():
    store = make_store(10, TINY)
    for a, b in [(3, 7), (7, 3), (1, 5)]:
        assert dilated_resnet(ad.Tensor(np.ones((a, b, 10))), TINY, store).shape == (a, b, 2)
    with pytest.raises(DimensionError):
        dilated_resnet(ad.Tensor(np.ones((0, 3, 10))), TINY, store)


def test_golden_logits_8x9():
    store = make_store(12, TINY, seed=11)
    x = np.random.default_rng(11).normal(size=(8, 9, 12)).astype(np.float32)
    out = dilated_resnet(ad.Tensor(x), TINY, store).data
    assert out.shape == (8, 9, 2)
    np.testing.assert_allclose([out[..., 0].sum(), out[..., 1].sum(), np.abs(out).sum()], GOLDEN_8X9, rtol=1e-5, atol=1e-4)


GOLDEN_8X9 = (14.087193, 1.711537, 114.357018)


@pytest.mark.parametrize("seed", range(3))
def test_decoder_gradients_wrt_parameters(float64, seed):
    store = make_store(6, TINY, seed=seed)
    x = ad.Tensor(np.random.default_rng(seed).normal(size=(4, 5, 6)))
    labels = np.random.default_rng(seed).integers(0, 2, size=(4, 5))
    assert directional_check(lambda: weighted_cross_entropy(dilated_resnet(x, TINY, store), labels), store.params, np.random.default_rng(seed)) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_loss_gradients_wrt_node_reps(float64, seed):
    store = make_store(6, TINY, seed=seed)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=(4, 5))

    def pipeline(ha, hb):
        return weighted_cross_entropy(dilated_resnet(interleave(ha, hb), TINY, store), labels).reshape(1)

    assert check_op(pipeline, rng.normal(size=(4, 3)), rng.normal(size=(5, 3))) < 1e-4


# -- probabilities and files ------------------------------------------------------------------
def test_probability_examples():
    logits = np.array([[[0.0, 0.0], [0.0, math.log(3)]]])
    np.testing.assert_allclose(contact_probabilities(logits), [[0.5, 0.75]], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 30.0))
def test_probabilities_normalised(seed, scale):
    logits = np.random.default_rng(seed).normal(size=(4, 5, 2)) * scale
    p1 = contact_probabilities(logits)
    p0 = contact_probabilities(logits, positive_index=0)
    assert np.all((p1 >= 0) & (p1 <= 1))
    np.testing.assert_allclose(p0 + p1, 1.0, atol=1e-6)


def test_probabilities_reject_bad_shapes():
    with pytest.raises(DimensionError):
        contact_probabilities(np.zeros((2, 2, 3)))


def test_csv_format_and_round_trip(tmp_path):
    p = np.array([[0.1234567, 1.0], [0.0, 0.5]])
    assert format_matrix_csv(p) == "0.123457,1.000000\n0.000000,0.500000\n"
    path = tmp_path / "p.csv"
    write_contact_csv(path, p)
    np.testing.assert_allclose(read_matrix_csv(path), np.round(p, 6))


def test_read_matrix_rejects_ragged(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(DimensionError):
        read_matrix_csv(path)


def test_pgm_rounds_half_up():
    p = np.array([[0.0, 0.5, 1.0], [0.1, 127.5 / 255, 0.999]])
    text = format_pgm(p)
    assert text.splitlines()[:3] == ["P2", "3 2", "255"]
    assert text.splitlines()[3:] == ["0 128 255", "26 128 255"]
