"""Run configuration and the batch-size-1 training loop."""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, NumericalError
from .geoformer import GeoformerConfig
from .graph import atomic_write_text
from .interaction import ResNetConfig, contact_probabilities
from .metrics import topk_precision, weighted_cross_entropy
from .model import ContactModel

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    dropout: float = 0.2
    positive_weight: float = 5.0
    clip_value: float = 0.5
    batch_size: int = 1
    knn_k: int = 20
    neighborhood_n: int = 2
    num_layers: int = 2
    hidden_channels: int = 128
    resnet_layers: int = 14
    early_stopping_patience: int = 5
    max_epochs: int = 50
    seed: int = 42
    swa_start_epoch: int = 10

    def __post_init__(self):
        positive = ("learning_rate", "positive_weight", "clip_value", "knn_k", "neighborhood_n",
                    "num_layers", "hidden_channels", "resnet_layers", "early_stopping_patience", "max_epochs")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.batch_size != 1:
            raise ConfigError("only batch_size = 1 is supported")
        if self.swa_start_epoch < 1:
            raise ConfigError("swa_start_epoch must be >= 1")

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self):
        return dataclasses.asdict(self)

    def geoformer_config(self, node_feature_dim):
        return GeoformerConfig(
            num_layers=self.num_layers,
            hidden_channels=self.hidden_channels,
            neighborhood_n=self.neighborhood_n,
            dropout_rate=self.dropout,
            node_feature_dim=node_feature_dim,
        )

    def resnet_config(self):
        return ResNetConfig.with_total_layers(self.resnet_layers)


class EarlyStopping:
    """Stop once ``patience`` epochs pass without a strict improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def step(self, epoch, value):
        """Record ``value``; return True if training should stop now."""
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class Sample:
    graph_a: object
    graph_b: object
    labels: np.ndarray
    name: str = ""


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    best_state: Optional[dict] = None
    swa_state: Optional[dict] = None


LOG_FIELDS = ("epoch", "train_loss", "val_loss", "train_top10_precision", "val_top10_precision")


def evaluate(model, samples, positive_weight):
    """Mean loss and mean top-10 precision in evaluation mode."""
    losses, precisions = [], []
    with ad.no_grad():
        for s in samples:
            logits = model.forward(s.graph_a, s.graph_b, training=False)
            losses.append(float(weighted_cross_entropy(logits, s.labels, positive_weight).item()))
            precisions.append(topk_precision(contact_probabilities(logits), s.labels, 10))
    return float(np.mean(losses)), float(np.mean(precisions))


def train(model, train_samples, val_samples, config, log_path=None, on_epoch=None):
    """Train ``model`` in place; returns a :class:`TrainResult`.

    Each step runs forward on one complex, the weighted loss, backward,
    gradient value clipping and an Adam step. Validation loss drives early
    stopping; the best-validation parameters and the weight average are kept.
    """
    if not train_samples:
        raise ConfigError("empty training set")
    rng = np.random.default_rng(config.seed)
    prepared = [Sample(model.prepare(s.graph_a), model.prepare(s.graph_b), s.labels, s.name) for s in train_samples]
    if not val_samples or val_samples is train_samples:
        prepared_val = prepared
    else:
        prepared_val = [Sample(model.prepare(s.graph_a), model.prepare(s.graph_b), s.labels, s.name) for s in val_samples]
    store = model.store
    stopper = EarlyStopping(config.early_stopping_patience)
    result = TrainResult()
    log = io.StringIO()
    writer = csv.writer(log, lineterminator="\n")
    writer.writerow(LOG_FIELDS)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(prepared))
        epoch_losses = []
        for idx in order:
            s = prepared[idx]
            store.zero_grad()
            logits = model.forward(s.graph_a, s.graph_b, training=True, rng=rng)
            loss = weighted_cross_entropy(logits, s.labels, config.positive_weight)
            value = float(loss.item())
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss {value} at epoch {epoch} on sample {s.name or idx}")
            loss.backward()
            ad.clip_gradients(store, config.clip_value)
            ad.adam_step(store, lr=config.learning_rate, weight_decay=config.weight_decay)
            epoch_losses.append(value)

        train_loss = float(np.mean(epoch_losses))
        val_loss, val_prec = evaluate(model, prepared_val, config.positive_weight)
        train_prec = val_prec if prepared_val is prepared else evaluate(model, prepared, config.positive_weight)[1]
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
               "train_top10_precision": train_prec, "val_top10_precision": val_prec}
        result.history.append(row)
        writer.writerow([epoch] + [f"{row[k]:.6f}" for k in LOG_FIELDS[1:]])
        logger.info("epoch %d train_loss %.4f val_loss %.4f train_p@10 %.3f", epoch, train_loss, val_loss, train_prec)
        if log_path:
            atomic_write_text(log_path, log.getvalue())

        if epoch >= config.swa_start_epoch:
            ad.swa_update(store)
        improved = val_loss < stopper.best
        stop = stopper.step(epoch, val_loss)
        if improved:
            result.best_state = copy.deepcopy(model.state_arrays())
            result.best_epoch = epoch
        if on_epoch is not None and on_epoch(epoch, row) is False:
            break
        if stop:
            result.stopped_early = True
            break

    if store.swa_count:
        swa_model = ContactModel(model.geo_config, model.resnet_config, store=_clone_store(store))
        ad.swa_finalize(swa_model.store)
        result.swa_state = swa_model.state_arrays()
    return result


def _clone_store(store):
    return ad.ParameterStore.from_state_arrays(copy.deepcopy(store.state_arrays()))
