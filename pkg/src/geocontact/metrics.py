"""Top-k precision/recall and the class-weighted training loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import DimensionError

logger = logging.getLogger(__name__)

NOT_APPLICABLE = float("nan")


def _check(probabilities, labels):
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise DimensionError(f"prediction shape {p.shape} != label shape {y.shape}")
    return p, y


def rank_cells(probabilities):
    """Flat cell indices by descending probability, ties in row-major order."""
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    return np.lexsort((np.arange(p.size), -p))


def _clamp_k(k, total):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > total:
        logger.warning("k=%d exceeds %d cells; clamping", k, total)
        return total
    return int(k)


def true_positives_at(probabilities, labels, k):
    p, y = _check(probabilities, labels)
    k = _clamp_k(k, p.size)
    top = rank_cells(p)[:k]
    return int((y.ravel()[top] > 0).sum()), k


def topk_precision(probabilities, labels, k):
    hits, k = true_positives_at(probabilities, labels, k)
    return hits / k


def topk_recall(probabilities, labels, k):
    """Fraction of all positives found in the top ``k``; NaN when there are none."""
    p, y = _check(probabilities, labels)
    total = int((y > 0).sum())
    if total == 0:
        return NOT_APPLICABLE
    hits, _ = true_positives_at(p, y, k)
    return hits / total


def k_values(a, b):
    """Precision and recall cut-offs for an A x B complex (L = min(A, B))."""
    if a < 1 or b < 1:
        raise ValueError("chain lengths must be >= 1")
    length = min(a, b)
    precision = [10, max(1, length // 10), max(1, length // 5)]
    recall = [length, max(1, length // 2), max(1, length // 5)]
    return {"L": length, "precision": precision, "recall": recall}


@dataclass
class TopKReport:
    L: int
    precision: dict = field(default_factory=dict)  # label -> (k, value)
    recall: dict = field(default_factory=dict)

    def rows(self, complex_id="complex"):
        out = []
        for label, (k, v) in self.precision.items():
            out.append((complex_id, f"precision@{label}", k, v))
        for label, (k, v) in self.recall.items():
            out.append((complex_id, f"recall@{label}", k, v))
        return out

    def to_csv(self, complex_id="complex"):
        lines = ["complex_id,metric,k,value"]
        for cid, metric, k, v in self.rows(complex_id):
            lines.append(f"{cid},{metric},{k},{'nan' if math.isnan(v) else f'{v:.6f}'}")
        return "\n".join(lines) + "\n"

    def to_table(self, complex_id="complex"):
        rows = self.rows(complex_id)
        header = ("complex_id", "metric", "k", "value")
        body = [(c, m, str(k), "n/a" if math.isnan(v) else f"{v:.4f}") for c, m, k, v in rows]
        widths = [max(len(r[i]) for r in [header] + body) for i in range(4)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return "\n".join(fmt.format(*r).rstrip() for r in [header] + body) + "\n"


def topk_report(probabilities, labels):
    p, y = _check(probabilities, labels)
    ks = k_values(*p.shape)
    report = TopKReport(L=ks["L"])
    for label, k in zip(("10", "L/10", "L/5"), ks["precision"]):
        report.precision[label] = (min(k, p.size), topk_precision(p, y, k))
    for label, k in zip(("L", "L/2", "L/5"), ks["recall"]):
        report.recall[label] = (min(k, p.size), topk_recall(p, y, k))
    return report


def weighted_cross_entropy(logits, labels, positive_weight=5.0):
    """Mean over cells of ``-w_y log softmax(logits)[y]`` with ``w_1 = positive_weight``."""
    logits = ad.as_tensor(logits)
    y = np.asarray(labels)
    if logits.ndim != 3 or logits.shape[:2] != y.shape or logits.shape[2] != 2:
        raise DimensionError(f"logits {logits.shape} incompatible with labels {y.shape}")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    pos = y > 0
    onehot[..., 1] = pos * positive_weight
    onehot[..., 0] = ~pos
    per_cell = (ad.log_softmax(logits, axis=-1) * onehot).sum(axis=-1)
    return -(per_cell.sum() * (1.0 / y.size))


def cross_entropy(logits, labels):
    """Unweighted mean cross entropy over cells."""
    logits = ad.as_tensor(logits)
    y = (np.asarray(labels) > 0).astype(np.int64)
    a, b = y.shape
    rows, cols = np.meshgrid(np.arange(a), np.arange(b), indexing="ij")
    per_cell = ad.log_softmax(logits, axis=-1)[rows, cols, y]
    return -(per_cell.sum() * (1.0 / y.size))
