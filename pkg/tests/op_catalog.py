"""Every differentiable operator with a small random input generator, for gradient checks."""

import numpy as np

from geocontact import autodiff as ad
from geocontact.interaction import interleave


def _dropout(x):
    return ad.dropout(x, 0.3, np.random.default_rng(7), training=True)


SEGMENTS = np.array([0, 2, 2, 1, 0, 2, 3])
ROWS = np.array([1, 0, 3, 1, 1])

# name -> (function of tensors, list of input generators taking an rng)
CATALOG = {
    "add": (lambda a, b: a + b, [lambda r: r.normal(size=(3, 4)), lambda r: r.normal(size=(4,))]),
    "sub": (lambda a, b: a - b, [lambda r: r.normal(size=(2, 3)), lambda r: r.normal(size=(2, 3))]),
    "mul": (lambda a, b: a * b, [lambda r: r.normal(size=(3, 1)), lambda r: r.normal(size=(3, 4))]),
    "div": (lambda a, b: a / b, [lambda r: r.normal(size=(3, 4)), lambda r: r.uniform(0.5, 2.0, size=(3, 4))]),
    "neg": (lambda a: -a, [lambda r: r.normal(size=(5,))]),
    "reciprocal": (ad.reciprocal, [lambda r: r.uniform(0.5, 2.0, size=(4,))]),
    "exp": (ad.exp, [lambda r: r.normal(size=(3, 3))]),
    "log": (ad.log, [lambda r: r.uniform(0.5, 3.0, size=(3, 3))]),
    "sqrt": (ad.sqrt, [lambda r: r.uniform(0.5, 3.0, size=(6,))]),
    "sum_axis": (lambda a: ad.tsum(a, axis=1, keepdims=True), [lambda r: r.normal(size=(3, 4))]),
    "sum_all": (lambda a: ad.tsum(a), [lambda r: r.normal(size=(3, 4))]),
    "mean": (lambda a: ad.tmean(a, axis=(0, 2)), [lambda r: r.normal(size=(2, 3, 4))]),
    "reshape": (lambda a: ad.reshape(a, (4, 3)), [lambda r: r.normal(size=(2, 6))]),
    "transpose": (lambda a: ad.transpose(a, (2, 0, 1)), [lambda r: r.normal(size=(2, 3, 4))]),
    "getitem": (lambda a: a[1:, ::2], [lambda r: r.normal(size=(3, 5))]),
    "concat": (lambda a, b: ad.concat([a, b], axis=-1), [lambda r: r.normal(size=(3, 2)), lambda r: r.normal(size=(3, 4))]),
    "stack": (lambda a, b: ad.stack([a, b], axis=1), [lambda r: r.normal(size=(3, 2)), lambda r: r.normal(size=(3, 2))]),
    "matmul": (ad.matmul, [lambda r: r.normal(size=(3, 4)), lambda r: r.normal(size=(4, 5))]),
    "matmul_batched": (ad.matmul, [lambda r: r.normal(size=(2, 3, 4)), lambda r: r.normal(size=(4, 2))]),
    "linear": (ad.linear, [lambda r: r.normal(size=(5, 3)), lambda r: r.normal(size=(3, 4)), lambda r: r.normal(size=(4,))]),
    "sigmoid": (ad.sigmoid, [lambda r: r.normal(size=(4, 3)) * 2]),
    "relu": (ad.relu, [lambda r: r.normal(size=(4, 3))]),
    "leaky_relu": (ad.leaky_relu, [lambda r: r.normal(size=(4, 3))]),
    "softmax": (lambda a: ad.softmax(a, axis=-1), [lambda r: r.normal(size=(3, 5))]),
    "log_softmax": (lambda a: ad.log_softmax(a, axis=-1), [lambda r: r.normal(size=(3, 2))]),
    "layer_norm": (ad.layer_norm, [lambda r: r.normal(size=(4, 6)), lambda r: r.normal(size=(6,)), lambda r: r.normal(size=(6,))]),
    "instance_norm": (ad.instance_norm, [lambda r: r.normal(size=(3, 4, 2))]),
    "dropout": (_dropout, [lambda r: r.normal(size=(5, 4))]),
    "conv2d": (lambda x, w, b: ad.conv2d(x, w, b), [lambda r: r.normal(size=(4, 5, 2)), lambda r: r.normal(size=(3, 3, 2, 3)), lambda r: r.normal(size=(3,))]),
    "conv2d_dilated": (lambda x, w: ad.conv2d(x, w, dilation=2), [lambda r: r.normal(size=(5, 4, 2)), lambda r: r.normal(size=(3, 3, 2, 2))]),
    "conv2d_1x1": (lambda x, w: ad.conv2d(x, w), [lambda r: r.normal(size=(2, 3, 4)), lambda r: r.normal(size=(1, 1, 4, 2))]),
    "global_avg_pool": (ad.global_avg_pool, [lambda r: r.normal(size=(3, 4, 5))]),
    "embedding": (lambda t: ad.embedding(t, ROWS), [lambda r: r.normal(size=(4, 3))]),
    "segment_sum": (lambda x: ad.segment_sum(x, SEGMENTS, 5), [lambda r: r.normal(size=(7, 2))]),
    "segment_softmax": (lambda x: ad.segment_softmax(x, SEGMENTS, 5), [lambda r: r.normal(size=(7, 3))]),
    "interleave": (interleave, [lambda r: r.normal(size=(3, 2)), lambda r: r.normal(size=(4, 2))]),
}

UNARY_POOL = [
    ad.sigmoid,
    ad.relu,
    ad.leaky_relu,
    lambda x: ad.softmax(x, axis=-1),
    lambda x: ad.layer_norm(x),
    lambda x: x * x,
    lambda x: ad.sqrt(x * x + 1.0),
    lambda x: ad.exp(x * 0.5),
    lambda x: ad.linear(x, ad.Tensor(np.linspace(-1, 1, 16).reshape(4, 4), dtype=np.float64)),
]


def random_composition(rng):
    """A random 3-op chain drawn from ``UNARY_POOL`` followed by a reduction-free output."""
    picks = rng.choice(len(UNARY_POOL), size=3)

    def fn(x):
        for p in picks:
            x = UNARY_POOL[p](x)
        return x

    return fn


def three_layer_network(x, w1, b1, w2, b2, w3):
    h = ad.relu(ad.linear(x, w1, b1))
    h = ad.sigmoid(ad.linear(h, w2, b2))
    return ad.linear(h, w3)


NETWORK_SHAPES = [(6, 4), (4, 5), (5,), (5, 3), (3,), (3, 2)]
