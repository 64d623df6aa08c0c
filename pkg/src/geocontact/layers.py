"""Parameter initialisers and small layer helpers over a ParameterStore."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

LEAKY_SLOPE = 0.01


def init_dense(store, name, fan_in, fan_out, rng, scale=1.0, bias=0.0):
    limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
    store.add(f"{name}.w", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    store.add(f"{name}.b", np.full(fan_out, bias))


def dense(store, name, x, activation="leaky"):
    out = ad.linear(x, store[f"{name}.w"], store[f"{name}.b"])
    if activation == "leaky":
        return ad.leaky_relu(out, LEAKY_SLOPE)
    if activation == "relu":
        return ad.relu(out)
    if activation is None:
        return out
    raise ValueError(f"unknown activation {activation!r}")


def init_norm(store, name, width):
    store.add(f"{name}.gain", np.ones(width))
    store.add(f"{name}.bias", np.zeros(width))


def norm(store, name, x):
    return ad.layer_norm(x, store[f"{name}.gain"], store[f"{name}.bias"])


def init_conv(store, name, kernel, cin, cout, rng, scale=1.0):
    std = scale * np.sqrt(2.0 / (kernel * kernel * cin))
    store.add(f"{name}.w", rng.normal(0.0, std, size=(kernel, kernel, cin, cout)))
    store.add(f"{name}.b", np.zeros(cout))


def conv(store, name, x, dilation=1):
    return ad.conv2d(x, store[f"{name}.w"], store[f"{name}.b"], dilation=dilation)
