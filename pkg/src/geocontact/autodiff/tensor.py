"""Dense tensors with reverse-mode differentiation on top of numpy.

Every differentiable operation records its parents and a closure that maps
the output gradient to parent gradients. ``Tensor.backward`` walks the
recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from ..exceptions import BackwardError, DimensionError

_state = threading.local()


def get_default_dtype():
    return getattr(_state, "dtype", np.float32)


def set_default_dtype(dtype):
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _state.dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the floating-point width of newly created tensors."""
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or get_default_dtype()
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._consumed = False

    @classmethod
    def _make(cls, data, parents, backward, op):
        """Create a result tensor; record the graph edge only when needed."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._consumed = False
        out._op = op
        needs = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype.type)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    # -- reverse mode -----------------------------------------------------
    def backward(self, grad=None):
        """Populate ``.grad`` on every reachable leaf with ``requires_grad``.

        The recorded graph is released afterwards; calling ``backward`` a
        second time on the same output raises ``BackwardError``.
        """
        if self._consumed:
            raise BackwardError("graph already consumed by a previous backward(); re-run the forward pass")
        if grad is None:
            if self.data.size != 1:
                raise BackwardError(f"backward() needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape)
        if not self.requires_grad:
            raise BackwardError("output does not depend on any tensor with requires_grad=True")

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
                node._consumed = True
        self._consumed = True


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype.type if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ------------------------------------------------
def add(a, b):
    a, b = _lift(a), _lift(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._make(a.data + b.data, (a, b), backward, "add")


def mul(a, b):
    a = _lift(a)
    b = _lift(b, a)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._make(ad * bd, (a, b), backward, "mul")


def neg(a):
    return Tensor._make(-a.data, (a,), lambda g: (-g,), "neg")


def reciprocal(a):
    out = 1.0 / a.data
    return Tensor._make(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a):
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    ad = a.data
    return Tensor._make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a):
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


# -- reductions and shape manipulation -------------------------------------
def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)
    return Tensor._make(out, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape):
    old = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(np.transpose(g, inverse)),)

    return Tensor._make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), backward, "transpose")


def getitem(a, index):
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._make(np.ascontiguousarray(a.data[index]), (a,), backward, "getitem")


def concat(tensors, axis=-1):
    """Concatenate along ``axis``."""
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise DimensionError(
                f"concat: incompatible shapes {tensors[0].shape} and {t.shape} along axis {axis}"
            )
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.ascontiguousarray(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax))
            for i in range(len(tensors))
        )

    out = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor._make(out, tuple(tensors), backward, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


# -- linear algebra ---------------------------------------------------------
def matmul(a, b):
    """Matrix product; ``a`` may carry leading batch dimensions, ``b`` is 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.T
        a2 = ad.reshape(-1, ad.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return ga, a2.T @ g2

    return Tensor._make(ad @ bd, (a, b), backward, "matmul")


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# -- nonlinearities ---------------------------------------------------------
def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    mask = a.data > 0
    return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope=0.01):
    scale = np.where(a.data > 0, 1.0, slope).astype(a.dtype)
    return Tensor._make(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def softmax(a, axis=-1):
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), backward, "softmax")


def log_softmax(a, axis=-1):
    x = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(x).sum(axis=axis, keepdims=True))
    out = x - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (a,), backward, "log_softmax")


# -- normalization and regularization ---------------------------------------
def _normalize(a, axes, eps, op):
    x = a.data
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=axes, keepdims=True)
        gx = (g * xhat).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return Tensor._make(xhat.astype(x.dtype, copy=False), (a,), backward, op)


def layer_norm(a, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis, then apply optional gain and bias."""
    out = _normalize(a, (a.ndim - 1,), eps, "layer_norm")
    if gain is not None:
        out = mul(out, gain)
    if bias is not None:
        out = add(out, bias)
    return out


def instance_norm(a, eps=1e-5):
    """Per-channel normalization of an H x W x C map over its spatial axes."""
    if a.ndim != 3:
        raise DimensionError(f"instance_norm expects H x W x C, got {a.shape}")
    return _normalize(a, (0, 1), eps, "instance_norm")


def dropout(a, rate, rng=None, training=True):
    """Inverted dropout; the identity at evaluation time or when ``rate == 0``."""
    if not training or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# -- convolution and pooling ------------------------------------------------
def conv2d(x, weight, bias=None, dilation=1):
    """2-D convolution with 'same' zero padding on an H x W x Cin map.

    ``weight`` has shape (kh, kw, Cin, Cout) with odd kernel sides.
    """
    from ..exceptions import ConfigError

    x, weight = as_tensor(x), as_tensor(weight)
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ConfigError(f"conv2d: dilation must be a positive integer, got {dilation!r}")
    if weight.ndim != 4 or weight.shape[0] % 2 == 0 or weight.shape[1] % 2 == 0:
        raise ConfigError(f"conv2d: kernel must be (odd, odd, Cin, Cout), got {weight.shape}")
    if x.ndim != 3 or x.shape[2] != weight.shape[2]:
        raise DimensionError(f"conv2d: input {x.shape} does not match kernel {weight.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"conv2d: empty spatial extent {x.shape}")
    kh, kw, cin, cout = weight.shape
    h, w = x.shape[:2]
    ph, pw = dilation * (kh // 2), dilation * (kw // 2)
    xp = np.pad(x.data, ((ph, ph), (pw, pw), (0, 0)))
    wd = weight.data
    out = np.zeros((h, w, cout), dtype=x.dtype)
    taps = []
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * dilation, j * dilation
            # taps lying fully in the padding contribute nothing
            if r0 + h <= ph or r0 >= ph + h or c0 + w <= pw or c0 >= pw + w:
                continue
            taps.append((i, j, r0, c0))
            out += xp[r0:r0 + h, c0:c0 + w, :] @ wd[i, j]
    if bias is not None:
        out += bias.data

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        g2 = g.reshape(-1, cout)
        for i, j, r0, c0 in taps:
            patch = xp[r0:r0 + h, c0:c0 + w, :]
            gw[i, j] = patch.reshape(-1, cin).T @ g2
            gxp[r0:r0 + h, c0:c0 + w, :] += g @ wd[i, j].T
        grads = [gxp[ph:ph + h, pw:pw + w, :], gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward, "conv2d")


def global_avg_pool(x):
    """Mean over the spatial axes of an H x W x C map, giving a C-vector."""
    if x.ndim != 3:
        raise DimensionError(f"global_avg_pool expects H x W x C, got {x.shape}")
    return tmean(x, axis=(0, 1))


# -- indexing -------------------------------------------------------------
def take_rows(table, index):
    """Gather rows ``table[index]``; gradients scatter-add back."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise DimensionError(f"take_rows: index out of range for {table.shape[0]} rows")
    nrows = table.shape[0]

    def backward(g):
        full = np.zeros((nrows,) + g.shape[1:], dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._make(table.data[index], (table,), backward, "take_rows")


def embedding(table, index):
    """Embedding-table lookup; identical to :func:`take_rows`."""
    return take_rows(table, index)


def segment_sum(x, segment_ids, num_segments):
    """Scatter-add rows of ``x`` into ``num_segments`` buckets."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape[0] != x.shape[0]:
        raise DimensionError(f"segment_sum: {segment_ids.shape[0]} ids for {x.shape[0]} rows")
    out = np.zeros((num_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, segment_ids, x.data)
    return Tensor._make(out, (x,), lambda g: (g[segment_ids],), "segment_sum")


def segment_softmax(scores, segment_ids, num_segments):
    """Softmax of ``scores`` rows within each segment (per trailing channel)."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    s = scores.data
    seg_max = np.full((num_segments,) + s.shape[1:], -np.inf, dtype=s.dtype)
    np.maximum.at(seg_max, segment_ids, s)
    e = np.exp(s - seg_max[segment_ids])
    denom = np.zeros_like(seg_max, dtype=s.dtype)
    np.add.at(denom, segment_ids, e)
    out = e / denom[segment_ids]

    def backward(g):
        dot = np.zeros_like(denom)
        np.add.at(dot, segment_ids, g * out)
        return (out * (g - dot[segment_ids]),)

    return Tensor._make(out, (scores,), backward, "segment_softmax")
