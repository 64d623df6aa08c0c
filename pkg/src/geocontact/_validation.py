"""Input checks shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError
from .graph import ChainGraph
from .structio import ChainResidues


def check_label_matrix(labels, shape=None):
    y = np.asarray(labels)
    if y.ndim != 2:
        raise DimensionError(f"label matrix must be 2-D, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("label matrix must contain only 0 and 1")
    if shape is not None and y.shape != tuple(shape):
        raise DimensionError(f"label matrix shape {y.shape} != expected {tuple(shape)}")
    return y.astype(np.int8)


def check_graph(graph):
    if not isinstance(graph, ChainGraph):
        raise TypeError(f"expected ChainGraph, got {type(graph).__name__}")
    if graph.num_nodes < 2:
        raise ValueError("graph needs at least 2 nodes")
    if not np.all(np.isfinite(graph.node_features)):
        raise ValueError(f"graph {graph.chain_id!r} has non-finite node features")
    return graph


def check_pairs(X, y=None):
    """Validate a list of ``(graph_a, graph_b)`` pairs and optional labels."""
    pairs = list(X)
    if not pairs:
        raise ValueError("no complexes given")
    for pair in pairs:
        if len(pair) != 2:
            raise ValueError("each sample must be a (graph_a, graph_b) pair")
        check_graph(pair[0])
        check_graph(pair[1])
    if y is None:
        return pairs, None
    labels = list(y)
    if len(labels) != len(pairs):
        raise ValueError(f"{len(pairs)} complexes but {len(labels)} label matrices")
    labels = [check_label_matrix(lab, (a.num_nodes, b.num_nodes)) for (a, b), lab in zip(pairs, labels)]
    return pairs, labels


def check_chain_input(item):
    """Accept a ChainResidues or a ``(ChainResidues, features)`` tuple."""
    if isinstance(item, ChainResidues):
        return item, None
    if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], ChainResidues):
        return item
    raise TypeError("expected ChainResidues or (ChainResidues, features)")
