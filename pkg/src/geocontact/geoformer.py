"""Geometry-evolving graph transformer over a single chain graph.

Edges are first embedded from positional and geometric inputs, then each
layer runs a conformation update (neighbour-edge geometric gating followed by
residual blocks) and a pre-normalized multi-head attention layer with edge
channels. The last layer leaves edge representations untouched.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, DimensionError
from .graph import all_edge_neighborhoods
from .layers import dense, init_dense, init_norm, norm

GEOMETRIC_WIDTHS = {"f1": 16, "f2": 3, "f3": 4, "f4": 1}
FEATURE_KEYS = ("f1", "f2", "f3", "f4")


@dataclass(frozen=True)
class GeoformerConfig:
    num_layers: int = 2
    hidden_channels: int = 128
    num_heads: int = 8
    neighborhood_n: int = 2
    dropout_rate: float = 0.2
    p_embedding_dim: int = 8
    max_position: int = 2048
    node_feature_dim: int = 1

    def __post_init__(self):
        for name in ("num_layers", "hidden_channels", "num_heads", "neighborhood_n", "p_embedding_dim", "max_position", "node_feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_channels % self.num_heads:
            raise ConfigError(f"hidden_channels {self.hidden_channels} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def to_dict(self):
        return asdict(self)


class PreparedGraph(NamedTuple):
    """Model-ready tensors and index arrays for one chain graph."""

    num_nodes: int
    node_features: ad.Tensor
    src: np.ndarray
    dst: np.ndarray
    pos_src: np.ndarray
    pos_dst: np.ndarray
    dist_pe: ad.Tensor  # (E, 2): m_ij and lambda_e
    geo: dict  # f1..f4 tensors
    nbr_owner: np.ndarray
    nbr_edge: np.ndarray


def prepare_graph(graph, config):
    """Convert a :class:`ChainGraph` into tensors (current default dtype)."""
    if isinstance(graph, PreparedGraph):
        return graph
    owners, neighbors = all_edge_neighborhoods(graph, config.neighborhood_n)
    clamp = config.max_position - 1
    pos = np.clip(graph.seq_positions, 0, clamp)
    return PreparedGraph(
        num_nodes=graph.num_nodes,
        node_features=ad.Tensor(graph.node_features),
        src=graph.src.copy(),
        dst=graph.dst.copy(),
        pos_src=pos[graph.src],
        pos_dst=pos[graph.dst],
        dist_pe=ad.Tensor(np.stack([graph.m, graph.lam], axis=1)),
        geo={key: ad.Tensor(getattr(graph, key)) for key in FEATURE_KEYS},
        nbr_owner=owners,
        nbr_edge=neighbors,
    )


def init_geoformer_params(store, config, rng, prefix="gt"):
    c = config.hidden_channels
    pdim = config.p_embedding_dim
    init_dense(store, f"{prefix}.node_embed", config.node_feature_dim, c, rng)
    store.add(f"{prefix}.p1", rng.normal(0.0, 0.1, size=(config.max_position, pdim)))
    store.add(f"{prefix}.p2", rng.normal(0.0, 0.1, size=(config.max_position, pdim)))
    init_dense(store, f"{prefix}.init.phi_m", 2, c, rng)
    for key, width in GEOMETRIC_WIDTHS.items():
        init_dense(store, f"{prefix}.init.phi_{key}", width, c, rng)
    init_dense(store, f"{prefix}.init.phi_1", 2 * pdim + 5 * c, c, rng)
    init_dense(store, f"{prefix}.init.gate", c, c, rng)
    init_dense(store, f"{prefix}.init.phi_2", c, c, rng)
    for layer in range(config.num_layers):
        base = f"{prefix}.layer{layer}"
        for idx, (key, width) in enumerate(GEOMETRIC_WIDTHS.items(), start=1):
            init_dense(store, f"{base}.conf.phi_e{idx}", c, c, rng)
            init_dense(store, f"{base}.conf.phi_{key}", width, c, rng)
        init_dense(store, f"{base}.conf.phi_5", c, c, rng)
        for block in ("res1a", "res1b", "res2a", "res2b"):
            init_dense(store, f"{base}.conf.{block}.phi_res1", c, c, rng)
            init_dense(store, f"{base}.conf.{block}.phi_res2", c, c, rng, scale=0.5)
        last = layer == config.num_layers - 1
        init_norm(store, f"{base}.attn.norm_h1", c)
        init_norm(store, f"{base}.attn.norm_e1", c)
        for proj in ("q", "k", "v", "e", "out_h"):
            init_dense(store, f"{base}.attn.{proj}", c, c, rng)
        init_norm(store, f"{base}.attn.norm_h2", c)
        init_dense(store, f"{base}.attn.ffn_h1", c, 2 * c, rng)
        init_dense(store, f"{base}.attn.ffn_h2", 2 * c, c, rng)
        if not last:
            init_dense(store, f"{base}.attn.out_e", c, c, rng)
            init_norm(store, f"{base}.attn.norm_e2", c)
            init_dense(store, f"{base}.attn.ffn_e1", c, 2 * c, rng)
            init_dense(store, f"{base}.attn.ffn_e2", 2 * c, c, rng)


def init_edge_representation(pg, store, config, prefix="gt"):
    """Initial edge embedding: concatenated inputs, gated residual, projection."""
    c = config.hidden_channels
    expected = 2 * config.p_embedding_dim + 5 * c
    if store[f"{prefix}.init.phi_1.w"].shape[0] != expected:
        raise DimensionError(f"edge init width {store[f'{prefix}.init.phi_1.w'].shape[0]} != {expected}")
    parts = [
        ad.embedding(store[f"{prefix}.p1"], pg.pos_src),
        ad.embedding(store[f"{prefix}.p2"], pg.pos_dst),
        dense(store, f"{prefix}.init.phi_m", pg.dist_pe),
    ]
    parts += [dense(store, f"{prefix}.init.phi_{key}", pg.geo[key]) for key in FEATURE_KEYS]
    cij = dense(store, f"{prefix}.init.phi_1", ad.concat(parts, axis=-1))
    gated = ad.sigmoid(dense(store, f"{prefix}.init.gate", cij, activation=None)) * cij
    return dense(store, f"{prefix}.init.phi_2", cij + gated)


def _res_block(store, name, x):
    return dense(store, f"{name}.phi_res2", dense(store, f"{name}.phi_res1", x)) + x


def conformation_update(pg, edge_reps, store, layer, prefix="gt"):
    """Evolve edge representations with their geometric neighbourhoods."""
    base = f"{prefix}.layer{layer}.conf"
    gated = edge_reps
    total = None
    for idx, key in enumerate(FEATURE_KEYS, start=1):
        gated = dense(store, f"{base}.phi_e{idx}", gated) * dense(store, f"{base}.phi_{key}", pg.geo[key])
        total = gated if total is None else total + gated
    if len(pg.nbr_edge):
        messages = ad.segment_sum(ad.take_rows(total, pg.nbr_edge), pg.nbr_owner, edge_reps.shape[0])
    else:
        messages = ad.Tensor(np.zeros(edge_reps.shape), dtype=edge_reps.dtype.type)
    projected = dense(store, f"{base}.phi_5", edge_reps)
    x = _res_block(store, f"{base}.res1b", _res_block(store, f"{base}.res1a", projected + messages))
    return _res_block(store, f"{base}.res2b", _res_block(store, f"{base}.res2a", projected + x))


def attention_layer(pg, node_reps, edge_reps, store, layer, config, update_edges=True, training=False, rng=None, prefix="gt"):
    """Pre-norm multi-head graph attention with multiplicative edge modulation.

    Returns ``(node_reps, edge_reps, attention)``; ``attention`` is the (E, heads)
    matrix of softmax weights over each destination's in-edges.
    """
    base = f"{prefix}.layer{layer}.attn"
    a = pg.num_nodes
    e_count = edge_reps.shape[0]
    c = config.hidden_channels
    heads = config.num_heads
    dh = c // heads
    rate = config.dropout_rate

    hn = norm(store, f"{base}.norm_h1", node_reps)
    en = norm(store, f"{base}.norm_e1", edge_reps)
    q = dense(store, f"{base}.q", hn, activation=None)
    k = dense(store, f"{base}.k", hn, activation=None)
    v = dense(store, f"{base}.v", hn, activation=None)
    ep = dense(store, f"{base}.e", en, activation=None)

    affinity = ad.take_rows(q, pg.dst) * ad.take_rows(k, pg.src) * (1.0 / np.sqrt(dh)) * ep
    scores = affinity.reshape(e_count, heads, dh).sum(axis=2)
    attn = ad.segment_softmax(scores, pg.dst, a)
    values = ad.take_rows(v, pg.src).reshape(e_count, heads, dh)
    messages = (attn.reshape(e_count, heads, 1) * values).reshape(e_count, c)
    aggregated = ad.segment_sum(messages, pg.dst, a)

    h = node_reps + ad.dropout(dense(store, f"{base}.out_h", aggregated, activation=None), rate, rng, training)
    ffn = dense(store, f"{base}.ffn_h2", dense(store, f"{base}.ffn_h1", norm(store, f"{base}.norm_h2", h), activation="relu"), activation=None)
    h = h + ad.dropout(ffn, rate, rng, training)

    if update_edges:
        e = edge_reps + ad.dropout(dense(store, f"{base}.out_e", affinity, activation=None), rate, rng, training)
        ffn_e = dense(store, f"{base}.ffn_e2", dense(store, f"{base}.ffn_e1", norm(store, f"{base}.norm_e2", e), activation="relu"), activation=None)
        e = e + ad.dropout(ffn_e, rate, rng, training)
    else:
        e = edge_reps
    return h, e, attn


def geoformer_forward(graph, config, store, training=False, rng=None, prefix="gt", return_edges=False):
    """Final node representations (A x C) for one chain graph."""
    pg = prepare_graph(graph, config)
    d = pg.node_features.shape[1]
    if store[f"{prefix}.node_embed.w"].shape[0] != d:
        raise DimensionError(f"graph has {d} node features, parameters expect {store[f'{prefix}.node_embed.w'].shape[0]}")
    h = dense(store, f"{prefix}.node_embed", pg.node_features, activation=None)
    e = init_edge_representation(pg, store, config, prefix)
    for layer in range(config.num_layers):
        e = conformation_update(pg, e, store, layer, prefix)
        last = layer == config.num_layers - 1
        h, e, _ = attention_layer(pg, h, e, store, layer, config, update_edges=not last, training=training, rng=rng, prefix=prefix)
    return (h, e) if return_edges else h
