"""Per-chain k-nearest-neighbour graphs and their JSON file format."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import jsonschema
import numpy as np
from scipy.spatial.distance import cdist

from . import geometry
from .exceptions import DegenerateGeometryError, DimensionError, GraphFormatError

GRAPH_FORMAT_VERSION = 1
DISTANCE_SCALE = 20.0

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["format_version", "chain_id", "num_nodes", "seq_positions", "ca_coords", "node_features", "edges"],
    "properties": {
        "format_version": {"const": GRAPH_FORMAT_VERSION},
        "chain_id": {"type": "string"},
        "num_nodes": {"type": "integer", "minimum": 2},
        "seq_positions": {"type": "array", "items": {"type": "integer"}},
        "ca_coords": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        },
        "node_features": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src", "dst", "f1", "f2", "f3", "f4", "m", "lambda"],
                "properties": {
                    "src": {"type": "integer", "minimum": 0},
                    "dst": {"type": "integer", "minimum": 0},
                    "f1": {"type": "array", "items": {"type": "number"}, "minItems": 16, "maxItems": 16},
                    "f2": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                    "f3": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                    "f4": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 1},
                    "m": {"type": "number", "minimum": 0, "maximum": 1},
                    "lambda": {"type": "number", "minimum": -1, "maximum": 1},
                },
            },
        },
    },
}


@dataclass
class ChainGraph:
    """A featurized chain: nodes are residues, edges point source -> destination."""

    chain_id: str
    seq_positions: np.ndarray  # (A,)
    ca_coords: np.ndarray  # (A, 3)
    node_features: np.ndarray  # (A, D), last column is the positional channel
    edges: np.ndarray  # (E, 2) int, columns (src, dst)
    f1: np.ndarray  # (E, 16)
    f2: np.ndarray  # (E, 3)
    f3: np.ndarray  # (E, 4)
    f4: np.ndarray  # (E, 1)
    m: np.ndarray  # (E,)
    lam: np.ndarray  # (E,)
    raw_distance: np.ndarray  # (E,)

    @property
    def num_nodes(self):
        return len(self.seq_positions)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def src(self):
        return self.edges[:, 0]

    @property
    def dst(self):
        return self.edges[:, 1]

    def edge_geometry(self, e):
        return geometry.EdgeGeometry(self.f1[e], self.f2[e], self.f3[e], self.f4[e], float(self.raw_distance[e]))

    def edge_index(self, i, j):
        hits = np.flatnonzero((self.edges[:, 0] == i) & (self.edges[:, 1] == j))
        if hits.size == 0:
            raise KeyError(f"edge {i}->{j} is not in the graph")
        return int(hits[0])


@dataclass
class EdgeNeighborhood:
    edge_index: int
    neighbor_edge_indices: list


def build_knn_edges(coords, k):
    """Directed k-NN edges: each node receives edges from its k nearest others.

    Returns an (E, 2) int array of ``(src, dst)`` ordered by destination, then
    ascending distance, ties broken by lower source index.
    """
    x = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    a = len(x)
    if a < 2:
        raise ValueError(f"need at least 2 nodes, got {a}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    kk = min(k, a - 1)
    d = cdist(x, x)
    idx = np.arange(a)
    out = np.empty((a * kk, 2), dtype=np.int64)
    for j in range(a):
        order = np.lexsort((idx, d[:, j]))
        order = order[order != j][:kk]
        out[j * kk:(j + 1) * kk, 0] = order
        out[j * kk:(j + 1) * kk, 1] = j
    return out


def node_positional_encodings(seq_positions):
    p = np.asarray(seq_positions, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty position list")
    span = p.max() - p.min()
    if span == 0:
        return np.zeros_like(p)
    return (p - p.min()) / span


def _chain_arrays(chain):
    ca = chain.ca_coords
    n = np.array([r.n for r in chain.residues], dtype=np.float64)
    cb = np.array([r.effective_cbeta() for r in chain.residues], dtype=np.float64)
    c = [r.c for r in chain.residues]
    return ca, n, cb, c


def chain_rotations(chain):
    """Per-residue rotations with fallbacks for very short or straight chains."""
    ca, n, _, c = _chain_arrays(chain)
    try:
        frames = geometry.backbone_frames(ca)
    except DegenerateGeometryError:
        if all(x is not None for x in c):
            try:
                frames = geometry.residue_frames(n, ca, np.array(c, dtype=np.float64))
            except DegenerateGeometryError:
                frames = [geometry.LocalFrame(ca[i], np.eye(3), True) for i in range(len(ca))]
        else:
            frames = [geometry.LocalFrame(ca[i], np.eye(3), True) for i in range(len(ca))]
    return frames


def assemble_chain_graph(chain, features=None, k=20, feature_width=0):
    """Featurize a chain into a :class:`ChainGraph`.

    ``features`` is an optional (A, D) matrix of per-residue descriptors;
    without it, ``feature_width`` zero columns are used. The min-max
    positional channel is always appended last.
    """
    a = len(chain)
    if a < 2:
        raise ValueError(f"chain {chain.chain_id!r} too short: {a} residue(s), minimum 2")
    if features is None:
        features = np.zeros((a, feature_width))
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != a:
        raise DimensionError(f"feature matrix has shape {features.shape}, expected ({a}, D)")

    ca, n, cb, _ = _chain_arrays(chain)
    frames = chain_rotations(chain)
    rotations = np.stack([f.rotation for f in frames])
    normals, degenerate = geometry.amide_normals(ca, cb, n)

    edges = build_knn_edges(ca, k)
    src, dst = edges[:, 0], edges[:, 1]
    f1, f2, f3, f4, dist = geometry.batch_edge_features(ca, rotations, normals, degenerate, src, dst)
    pos = chain.seq_positions
    return ChainGraph(
        chain_id=chain.chain_id,
        seq_positions=pos,
        ca_coords=ca,
        node_features=np.hstack([features, node_positional_encodings(pos)[:, None]]),
        edges=edges,
        f1=f1,
        f2=f2,
        f3=f3,
        f4=f4,
        m=np.minimum(dist / DISTANCE_SCALE, 1.0),
        lam=np.sin((pos[src] - pos[dst]).astype(np.float64)),
        raw_distance=dist,
    )


def _sorted_in_edges(graph):
    """Per node: its in-edge indices by ascending distance, ties by lower source."""
    order = np.lexsort((graph.src, graph.raw_distance, graph.dst))
    buckets = [[] for _ in range(graph.num_nodes)]
    for e in order:
        buckets[graph.dst[e]].append(int(e))
    return buckets


def _neighborhood(graph, buckets, e, n):
    i, j = int(graph.src[e]), int(graph.dst[e])
    picked = []
    for node in (i, j):
        chosen = [k for k in buckets[node] if graph.src[k] not in (i, j)][:n]
        picked.extend(chosen)
    return picked


def edge_neighborhood(graph, edge, n=2):
    """Up to ``2n`` nearest in-edges onto the endpoints of ``edge``.

    ``edge`` is an edge index or an ``(i, j)`` pair. In-edges sourced at
    either endpoint are excluded.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    e = graph.edge_index(*edge) if isinstance(edge, tuple) else int(edge)
    return EdgeNeighborhood(e, _neighborhood(graph, _sorted_in_edges(graph), e, n))


def all_edge_neighborhoods(graph, n=2):
    """Flat ``(owner_edge, neighbor_edge)`` index arrays for every edge."""
    buckets = _sorted_in_edges(graph)
    owners, neighbors = [], []
    for e in range(graph.num_edges):
        picked = _neighborhood(graph, buckets, e, n)
        owners.extend([e] * len(picked))
        neighbors.extend(picked)
    return np.array(owners, dtype=np.int64), np.array(neighbors, dtype=np.int64)


# -- file format ---------------------------------------------------------------
def graph_to_dict(graph):
    def rows(arr):
        return [[float(v) for v in row] for row in np.asarray(arr)]

    return {
        "format_version": GRAPH_FORMAT_VERSION,
        "chain_id": graph.chain_id,
        "num_nodes": int(graph.num_nodes),
        "seq_positions": [int(p) for p in graph.seq_positions],
        "ca_coords": rows(graph.ca_coords),
        "node_features": rows(graph.node_features),
        "edges": [
            {
                "src": int(graph.src[e]),
                "dst": int(graph.dst[e]),
                "f1": [float(v) for v in graph.f1[e]],
                "f2": [float(v) for v in graph.f2[e]],
                "f3": [float(v) for v in graph.f3[e]],
                "f4": [float(v) for v in graph.f4[e]],
                "m": float(graph.m[e]),
                "lambda": float(graph.lam[e]),
            }
            for e in range(graph.num_edges)
        ],
    }


def validate_graph_dict(doc):
    try:
        jsonschema.validate(doc, GRAPH_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise GraphFormatError(f"graph document invalid: {exc.message}") from None
    a = doc["num_nodes"]
    if len(doc["seq_positions"]) != a or len(doc["ca_coords"]) != a or len(doc["node_features"]) != a:
        raise GraphFormatError("per-node arrays disagree with num_nodes")
    widths = {len(row) for row in doc["node_features"]}
    if len(widths) > 1:
        raise GraphFormatError("ragged node_features")
    for edge in doc["edges"]:
        if edge["src"] >= a or edge["dst"] >= a or edge["src"] == edge["dst"]:
            raise GraphFormatError(f"invalid edge {edge['src']}->{edge['dst']}")


def graph_from_dict(doc):
    validate_graph_dict(doc)
    edges = np.array([[e["src"], e["dst"]] for e in doc["edges"]], dtype=np.int64).reshape(-1, 2)
    ca = np.array(doc["ca_coords"], dtype=np.float64).reshape(-1, 3)
    dist = np.linalg.norm(ca[edges[:, 1]] - ca[edges[:, 0]], axis=1)

    def col(key, width):
        return np.array([e[key] for e in doc["edges"]], dtype=np.float64).reshape(-1, width)

    return ChainGraph(
        chain_id=doc["chain_id"],
        seq_positions=np.array(doc["seq_positions"], dtype=np.int64),
        ca_coords=ca,
        node_features=np.array(doc["node_features"], dtype=np.float64).reshape(doc["num_nodes"], -1),
        edges=edges,
        f1=col("f1", 16),
        f2=col("f2", 3),
        f3=col("f3", 4),
        f4=col("f4", 1),
        m=col("m", 1)[:, 0],
        lam=col("lambda", 1)[:, 0],
        raw_distance=dist,
    )


def dumps_graph(graph):
    # repr-based float output is round-trip exact (up to 17 significant digits)
    return json.dumps(graph_to_dict(graph), separators=(",", ":"))


def save_graph(graph, path):
    atomic_write_text(path, dumps_graph(graph))


def load_graph(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: not valid JSON ({exc})") from None
    return graph_from_dict(doc)


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
