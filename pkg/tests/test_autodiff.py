import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geocontact import autodiff as ad
from geocontact.autodiff import ParameterStore, Tensor, checkpoint
from geocontact.exceptions import BackwardError, CheckpointError, ConfigError, DimensionError, GeoContactError

from .gradcheck import check_op
from .op_catalog import CATALOG, NETWORK_SHAPES, random_composition, three_layer_network


@pytest.mark.parametrize("name", sorted(CATALOG))
@pytest.mark.parametrize("seed", range(3))
def test_operator_gradients(name, seed):
    fn, gens = CATALOG[name]
    rng = np.random.default_rng(seed)
    assert check_op(fn, *[g(rng) for g in gens], seed=seed) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_random_compositions(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(3):
        assert check_op(random_composition(rng), rng.normal(size=(3, 4)), seed=seed) < 1e-4


def test_three_layer_network():
    rng = np.random.default_rng(0)
    assert check_op(three_layer_network, *[rng.normal(size=s) for s in NETWORK_SHAPES]) < 1e-4


# -- backward contract ---------------------------------------------------------------
def test_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_square_gives_two_x():
    x = Tensor([1.0, -2.0, 3.5], requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, -4.0, 7.0])


def test_second_backward_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(BackwardError):
        loss.backward()


def test_non_scalar_backward_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(BackwardError):
        (x * 2.0).backward()


def test_backward_without_grad_inputs_raises():
    with pytest.raises(BackwardError):
        Tensor([1.0, 2.0]).sum().backward()


def test_shared_subexpression_accumulates():
    x = Tensor([3.0], requires_grad=True, dtype=np.float64)
    y = x * x
    (y + y * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2 * 3 + 3 * 9])


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_default_dtype_context():
    assert Tensor([1.0]).dtype == np.float32
    with ad.default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ValueError):
        ad.set_default_dtype(np.int32)


def test_shape_mismatch_errors_name_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros(4))
    with pytest.raises(DimensionError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(DimensionError):
        ad.conv2d(Tensor(np.zeros((3, 3, 2))), Tensor(np.zeros((3, 3, 4, 1))))


def test_conv_config_errors():
    x = Tensor(np.zeros((3, 3, 1)))
    with pytest.raises(ConfigError):
        ad.conv2d(x, Tensor(np.zeros((3, 3, 1, 1))), dilation=0)
    with pytest.raises(ConfigError):
        ad.conv2d(x, Tensor(np.zeros((2, 2, 1, 1))))


# -- operator values -------------------------------------------------------------------
def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(5, 6, 2))
    w = np.zeros((3, 3, 2, 2))
    w[1, 1] = np.eye(2)
    for dilation in (1, 3):
        out = ad.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), dilation=dilation).data
        np.testing.assert_array_equal(out, x)


def conv_oracle(x, w, b, dilation):
    h, wd, _ = x.shape
    kh, kw, _, cout = w.shape
    out = np.zeros((h, wd, cout))
    for r in range(h):
        for c in range(wd):
            for i in range(kh):
                for j in range(kw):
                    rr, cc = r + (i - kh // 2) * dilation, c + (j - kw // 2) * dilation
                    if 0 <= rr < h and 0 <= cc < wd:
                        out[r, c] += x[rr, cc] @ w[i, j]
    return out + b


@pytest.mark.parametrize("dilation", [1, 2, 4, 8])
def test_conv_matches_loop_oracle(dilation):
    rng = np.random.default_rng(dilation)
    x, w, b = rng.normal(size=(6, 7, 3)), rng.normal(size=(3, 3, 3, 2)), rng.normal(size=2)
    out = ad.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64), dilation=dilation)
    np.testing.assert_allclose(out.data, conv_oracle(x, w, b, dilation), atol=1e-12)


def test_softmax_uniform():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_segment_softmax_normalizes_per_segment():
    rng = np.random.default_rng(0)
    ids = np.array([0, 0, 1, 2, 2, 2])
    out = ad.segment_softmax(Tensor(rng.normal(size=(6, 3)) * 5, dtype=np.float64), ids, 4).data
    sums = np.zeros((4, 3))
    np.add.at(sums, ids, out)
    np.testing.assert_allclose(sums[:3], 1.0, atol=1e-12)
    np.testing.assert_array_equal(sums[3], 0.0)


def test_segment_sum_and_take_rows():
    x = Tensor(np.arange(8.0).reshape(4, 2))
    np.testing.assert_array_equal(ad.segment_sum(x, [1, 0, 1, 1], 3).data, [[2, 3], [10, 13], [0, 0]])
    np.testing.assert_array_equal(ad.take_rows(x, [3, 3]).data, [[6, 7], [6, 7]])
    with pytest.raises(DimensionError):
        ad.take_rows(x, [4])


def test_global_avg_pool_constant():
    x = np.broadcast_to(np.array([1.5, -2.0, 7.0]), (4, 5, 3))
    np.testing.assert_allclose(ad.global_avg_pool(Tensor(x)).data, [1.5, -2.0, 7.0])


def test_dropout_identities():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 4)))
    assert ad.dropout(x, 0.0, training=True) is x
    assert ad.dropout(x, 0.9, training=False) is x
    with pytest.raises(ValueError):
        ad.dropout(x, 1.0, training=True)


def test_dropout_preserves_expectation():
    rng = np.random.default_rng(0)
    x = Tensor(np.full(10_000, 3.0), dtype=np.float64)
    out = ad.dropout(x, 0.2, rng, training=True).data
    assert abs(out.mean() - 3.0) / 3.0 < 0.02
    kept = out[out != 0]
    np.testing.assert_allclose(kept, 3.0 / 0.8)


def test_dropout_mask_statistics_many_draws():
    rng = np.random.default_rng(1)
    x = Tensor(np.array([1.0, -2.0, 0.5]), dtype=np.float64)
    draws = np.stack([ad.dropout(x, 0.2, rng).data for _ in range(10_000)])
    np.testing.assert_allclose(draws.mean(axis=0), x.data, rtol=0.02)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1.0, 100.0))
def test_instance_norm_statistics(seed, scale):
    x = np.random.default_rng(seed).normal(size=(6, 7, 4)) * scale + 3.0
    out = ad.instance_norm(Tensor(x, dtype=np.float64)).data
    assert np.abs(out.mean(axis=(0, 1))).max() < 1e-6
    var = out.var(axis=(0, 1))
    # epsilon shrinks the variance by var / (var + eps)
    assert np.abs(var - 1).max() < 1e-4
    # the epsilon shrinks each variance by var / (var + eps)
    np.testing.assert_allclose(var, x.var(axis=(0, 1)) / (x.var(axis=(0, 1)) + 1e-5), atol=1e-12)


def test_layer_norm_statistics():
    x = np.random.default_rng(0).normal(size=(5, 32)) * 4 + 1
    out = ad.layer_norm(Tensor(x, dtype=np.float64)).data
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1, atol=1e-4)


# -- optimizer ---------------------------------------------------------------------------
def store_with(values, grads=None):
    with ad.default_dtype(np.float64):
        store = ParameterStore({"w": np.array(values, dtype=np.float64)})
    if grads is not None:
        store["w"].grad = np.array(grads, dtype=np.float64)
    return store


def test_clip_examples():
    store = store_with([0.0, 0.0, 0.0], [0.7, -0.3, -2.0])
    ad.clip_gradients(store, 0.5)
    np.testing.assert_array_equal(store["w"].grad, [0.5, -0.3, -0.5])


def test_clip_random():
    rng = np.random.default_rng(0)
    store = store_with(np.zeros(1000), rng.normal(size=1000) * 3)
    before = store["w"].grad.copy()
    ad.clip_gradients(store, 0.5)
    assert np.abs(store["w"].grad).max() <= 0.5
    small = np.abs(before) <= 0.5
    np.testing.assert_array_equal(store["w"].grad[small], before[small])


def test_adam_first_step():
    store = store_with(np.zeros(4), np.ones(4))
    ad.adam_step(store, lr=1e-3, weight_decay=0.0)
    np.testing.assert_allclose(store["w"].data, -1e-3 / (1 + 1e-8), rtol=1e-12)
    assert store.adam_step_count == 1


def test_adam_zero_gradient_is_noop():
    store = store_with([1.0, -2.0], [0.0, 0.0])
    ad.adam_step(store, lr=1e-3, weight_decay=0.0)
    np.testing.assert_array_equal(store["w"].data, [1.0, -2.0])


def test_adam_decay_only():
    store = store_with([1.0, -2.0], [0.0, 0.0])
    ad.adam_step(store, lr=1e-3, weight_decay=1e-2)
    np.testing.assert_allclose(store["w"].data, np.array([1.0, -2.0]) * (1 - 1e-5), rtol=1e-15)


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(5, 3))
    store = store_with(np.ones(3))
    theta, m, v = np.ones(3), np.zeros(3), np.zeros(3)
    for t, g in enumerate(grads, start=1):
        store["w"].grad = g.copy()
        ad.adam_step(store, lr=0.01, weight_decay=0.1)
        theta = theta * (1 - 0.01 * 0.1)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta = theta - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(store["w"].data, theta, rtol=1e-12)


def test_swa_examples():
    store = store_with([2.0])
    ad.swa_update(store)
    np.testing.assert_array_equal(store.swa_avg["w"], [2.0])
    store["w"].data[...] = 4.0
    ad.swa_update(store)
    np.testing.assert_array_equal(store.swa_avg["w"], [3.0])
    ad.swa_finalize(store)
    np.testing.assert_array_equal(store["w"].data, [3.0])


def test_swa_mean_of_random_snapshots():
    rng = np.random.default_rng(0)
    snaps = rng.normal(size=(5, 4))
    store = store_with(np.zeros(4))
    for s in snaps:
        store["w"].data[...] = s
        ad.swa_update(store)
    np.testing.assert_allclose(store.swa_avg["w"], snaps.mean(axis=0), atol=1e-12)


def test_swa_finalize_requires_update():
    with pytest.raises(GeoContactError):
        ad.swa_finalize(store_with([1.0]))


def test_store_rejects_duplicates():
    store = store_with([1.0])
    with pytest.raises(KeyError):
        store.add("w", np.zeros(1))


# -- checkpoint container -----------------------------------------------------------------
def sample_arrays():
    rng = np.random.default_rng(0)
    return {
        "param/b": rng.normal(size=(3, 2)).astype(np.float32),
        "param/a": rng.normal(size=(4,)),
        "__meta__/adam_step": np.array([7], dtype=np.int64),
        "__meta__/blob": np.frombuffer(b"{}", dtype=np.uint8).copy(),
        "scalar": np.array(2.5),
    }


def test_checkpoint_round_trip(tmp_path):
    arrays = sample_arrays()
    path = tmp_path / "x.geot"
    checkpoint.save(path, arrays)
    back = checkpoint.load(path)
    assert set(back) == set(arrays)
    for k, v in arrays.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        np.testing.assert_array_equal(back[k], v)


def test_checkpoint_layout():
    buf = checkpoint.dumps({"param/w": np.array([[1.0, 2.0]], dtype=np.float32)})
    assert buf[:4] == b"GEOT"
    assert int.from_bytes(buf[4:8], "little") == 1 and int.from_bytes(buf[8:12], "little") == 1
    assert int.from_bytes(buf[12:16], "little") == len("param/w")
    assert buf[16:23] == b"param/w"
    assert buf[23] == 1  # float32 code
    assert int.from_bytes(buf[24:28], "little") == 2
    assert int.from_bytes(buf[28:36], "little") == 1 and int.from_bytes(buf[36:44], "little") == 2
    assert np.frombuffer(buf[44:], dtype="<f4").tolist() == [1.0, 2.0]


def test_checkpoint_bytes_independent_of_insertion_order():
    arrays = sample_arrays()
    assert checkpoint.dumps(arrays) == checkpoint.dumps(dict(reversed(list(arrays.items()))))


def test_checkpoint_corruption():
    buf = checkpoint.dumps(sample_arrays())
    with pytest.raises(CheckpointError):
        checkpoint.loads(b"NOPE" + buf[4:])
    with pytest.raises(CheckpointError):
        checkpoint.loads(buf[:-3])
    with pytest.raises(CheckpointError):
        checkpoint.loads(buf + b"\0")
    with pytest.raises(CheckpointError):
        checkpoint.dumps({"x": np.array(["a"])})


def test_store_state_round_trip():
    store = store_with([1.0, 2.0], [0.1, -0.1])
    ad.adam_step(store, lr=0.1)
    ad.swa_update(store)
    back = ParameterStore.from_state_arrays(checkpoint.loads(checkpoint.dumps(store.state_arrays())))
    np.testing.assert_array_equal(back["w"].data, store["w"].data)
    np.testing.assert_array_equal(back.adam_m["w"], store.adam_m["w"])
    np.testing.assert_array_equal(back.adam_v["w"], store.adam_v["w"])
    assert back.adam_step_count == 1 and back.swa_count == 1
