"""Interaction tensor, dilated residual decoder and contact-map output files."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff.tensor import Tensor
from .exceptions import ConfigError, DimensionError
from .graph import atomic_write_text
from .layers import conv, init_conv, init_dense


@dataclass(frozen=True)
class ResNetConfig:
    conv_layers_per_block: tuple = (2, 3, 4, 5)
    channels: int = 64
    dilation_cycle: tuple = (1, 2, 4, 8)
    se_reduction: int = 16
    kernel_size: int = 3
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "conv_layers_per_block", tuple(self.conv_layers_per_block))
        object.__setattr__(self, "dilation_cycle", tuple(self.dilation_cycle))
        if not self.conv_layers_per_block or any(n < 1 for n in self.conv_layers_per_block):
            raise ConfigError("every residual block needs at least one conv layer")
        if any(d < 1 for d in self.dilation_cycle) or not self.dilation_cycle:
            raise ConfigError("dilations must be positive")
        if self.channels % self.se_reduction:
            raise ConfigError("channels must be divisible by se_reduction")
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd")

    @property
    def num_blocks(self):
        return len(self.conv_layers_per_block)

    @property
    def total_layers(self):
        return sum(self.conv_layers_per_block)

    @classmethod
    def with_total_layers(cls, total, num_blocks=4, **kwargs):
        """Spread ``total`` conv layers over blocks as [2, 3, 4, 5] does for 14."""
        if total < num_blocks:
            raise ConfigError(f"need at least {num_blocks} layers for {num_blocks} blocks")
        counts = [2 + b for b in range(num_blocks)]
        diff = total - sum(counts)
        b = num_blocks - 1
        while diff != 0:
            step = 1 if diff > 0 else -1
            if counts[b] + step >= 1:
                counts[b] += step
                diff -= step
            b = (b - 1) % num_blocks
        return cls(conv_layers_per_block=tuple(counts), **kwargs)

    def to_dict(self):
        return asdict(self)


def interleave(h_a, h_b):
    """A x B x 2C tensor: channel 2m from ``h_a[a, m]``, 2m+1 from ``h_b[b, m]``."""
    h_a, h_b = ad.as_tensor(h_a), ad.as_tensor(h_b)
    if h_a.ndim != 2 or h_b.ndim != 2 or h_a.shape[1] != h_b.shape[1]:
        raise DimensionError(f"interleave: channel mismatch between {h_a.shape} and {h_b.shape}")
    a, c = h_a.shape
    b = h_b.shape[0]
    out = np.empty((a, b, 2 * c), dtype=np.result_type(h_a.dtype, h_b.dtype))
    out[:, :, 0::2] = h_a.data[:, None, :]
    out[:, :, 1::2] = h_b.data[None, :, :]

    def backward(g):
        return g[:, :, 0::2].sum(axis=1), g[:, :, 1::2].sum(axis=0)

    return Tensor._make(out, (h_a, h_b), backward, "interleave")


def deinterleave(tensor):
    """Inverse of :func:`interleave` given a tensor built by it."""
    t = np.asarray(tensor.data if isinstance(tensor, Tensor) else tensor)
    return t[:, 0, 0::2], t[0, :, 1::2]


def init_interaction_params(store, in_channels, config, rng, prefix="ix"):
    ch = config.channels
    init_conv(store, f"{prefix}.entry", 1, in_channels, ch, rng)
    for b, layers in enumerate(config.conv_layers_per_block):
        for l in range(layers):
            init_conv(store, f"{prefix}.block{b}.conv{l}", config.kernel_size, ch, ch, rng, scale=0.5)
        init_conv(store, f"{prefix}.block{b}.shortcut", 1, ch, ch, rng)
        init_dense(store, f"{prefix}.block{b}.se1", ch, ch // config.se_reduction, rng)
        init_dense(store, f"{prefix}.block{b}.se2", ch // config.se_reduction, ch, rng)
    init_conv(store, f"{prefix}.head", 1, ch, config.num_classes, rng)


def se_block(x, store, name):
    """Squeeze-and-excitation: pooled channel descriptor -> gated rescale."""
    pooled = ad.global_avg_pool(x).reshape(1, -1)
    hidden = ad.relu(ad.linear(pooled, store[f"{name}1.w"], store[f"{name}1.b"]))
    weights = ad.sigmoid(ad.linear(hidden, store[f"{name}2.w"], store[f"{name}2.b"]))
    return x * weights.reshape(1, 1, -1)


def dilated_resnet(t, config, store, prefix="ix"):
    """Decode an interaction tensor (A x B x 2C) into A x B x 2 logits."""
    t = ad.as_tensor(t)
    if t.ndim != 3 or t.shape[0] < 1 or t.shape[1] < 1:
        raise DimensionError(f"interaction tensor must be A x B x C with A, B >= 1, got {t.shape}")
    x = conv(store, f"{prefix}.entry", t)
    cycle = config.dilation_cycle
    for b, layers in enumerate(config.conv_layers_per_block):
        block_in = x
        y = x
        for l in range(layers):
            y = ad.instance_norm(y)
            y = ad.relu(y)
            y = conv(store, f"{prefix}.block{b}.conv{l}", y, dilation=cycle[l % len(cycle)])
        y = y + conv(store, f"{prefix}.block{b}.shortcut", block_in)
        x = se_block(y, store, f"{prefix}.block{b}.se")
    return conv(store, f"{prefix}.head", x)


def contact_probabilities(logits, positive_index=1):
    """Per-cell 2-class softmax; returns the A x B positive-class map."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if data.ndim != 3 or data.shape[2] != 2:
        raise DimensionError(f"expected A x B x 2 logits, got {data.shape}")
    z = data.astype(np.float64)
    z = z - z.max(axis=2, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=2, keepdims=True)
    return p[:, :, positive_index]


# -- output files ---------------------------------------------------------------
def format_matrix_csv(matrix, decimals=6):
    fmt = f"{{:.{decimals}f}}"
    return "".join(",".join(fmt.format(v) for v in row) + "\n" for row in np.asarray(matrix, dtype=np.float64))


def write_contact_csv(path, probabilities):
    atomic_write_text(path, format_matrix_csv(probabilities))


def read_matrix_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise DimensionError(f"{path}: empty or ragged matrix")
    return np.array(rows, dtype=np.float64)


def format_pgm(probabilities):
    """Plain 'P2' grayscale image, value = round-half-up(p * 255)."""
    p = np.asarray(probabilities, dtype=np.float64)
    values = np.floor(np.clip(p, 0.0, 1.0) * 255.0 + 0.5).astype(int)
    lines = ["P2", f"{p.shape[1]} {p.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in values]
    return "\n".join(lines) + "\n"


def write_contact_pgm(path, probabilities):
    atomic_write_text(path, format_pgm(probabilities))


@dataclass
class ContactMap:
    probabilities: np.ndarray
    labels: np.ndarray | None = field(default=None)

    @property
    def shape(self):
        return self.probabilities.shape
