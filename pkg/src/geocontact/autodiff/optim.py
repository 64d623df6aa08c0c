"""Parameter storage, Adam with decoupled weight decay, value clipping, SWA."""

from __future__ import annotations

import numpy as np

from ..exceptions import GeoContactError
from .tensor import Tensor


class ParameterStore:
    """Named trainable tensors plus optimizer and weight-averaging state."""

    def __init__(self, params=None):
        self.params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_step_count = 0
        self.swa_avg: dict[str, np.ndarray] = {}
        self.swa_count = 0
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self.params[name] = t
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_parameters(self):
        return sum(t.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def state_arrays(self):
        """Flatten parameters and optimizer state into a name -> array map."""
        out = {f"param/{k}": v.data for k, v in self.params.items()}
        out.update({f"adam.m/{k}": v for k, v in self.adam_m.items()})
        out.update({f"adam.v/{k}": v for k, v in self.adam_v.items()})
        out.update({f"swa.avg/{k}": v for k, v in self.swa_avg.items()})
        out["__meta__/adam_step"] = np.array([self.adam_step_count], dtype=np.int64)
        out["__meta__/swa_count"] = np.array([self.swa_count], dtype=np.int64)
        return out

    @classmethod
    def from_state_arrays(cls, arrays):
        store = cls()
        for name, arr in arrays.items():
            prefix, _, key = name.partition("/")
            if prefix == "param":
                store.add(key, Tensor(arr, dtype=arr.dtype.type))
        for name, arr in arrays.items():
            prefix, _, key = name.partition("/")
            if prefix == "adam.m":
                store.adam_m[key] = arr.copy()
            elif prefix == "adam.v":
                store.adam_v[key] = arr.copy()
            elif prefix == "swa.avg":
                store.swa_avg[key] = arr.copy()
        if "__meta__/adam_step" in arrays:
            store.adam_step_count = int(arrays["__meta__/adam_step"][0])
        if "__meta__/swa_count" in arrays:
            store.swa_count = int(arrays["__meta__/swa_count"][0])
        return store


def clip_gradients(store, clip_value):
    """Clamp every gradient component to ``[-clip_value, clip_value]``."""
    if clip_value <= 0:
        raise ValueError("clip_value must be positive")
    for t in store.params.values():
        if t.grad is not None:
            np.clip(t.grad, -clip_value, clip_value, out=t.grad)


def adam_step(store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update with decoupled weight decay.

    Parameters without a gradient are still decayed but keep their moments.
    """
    store.adam_step_count += 1
    t = store.adam_step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        if weight_decay:
            p.data *= p.data.dtype.type(1.0 - lr * weight_decay)
        g = p.grad
        if g is None:
            continue
        m = store.adam_m.get(name)
        if m is None:
            m = store.adam_m[name] = np.zeros_like(p.data)
            store.adam_v[name] = np.zeros_like(p.data)
        v = store.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)


def swa_update(store):
    """Fold the current parameters into the running weight average."""
    c = store.swa_count
    for name, p in store.params.items():
        if c == 0:
            store.swa_avg[name] = p.data.astype(np.float64).copy()
        else:
            avg = store.swa_avg[name]
            avg *= c
            avg += p.data
            avg /= c + 1
    store.swa_count = c + 1


def swa_finalize(store):
    """Copy the averaged weights into the live parameters."""
    if store.swa_count == 0:
        raise GeoContactError("swa_finalize called before any swa_update")
    for name, p in store.params.items():
        p.data[...] = store.swa_avg[name].astype(p.data.dtype)
