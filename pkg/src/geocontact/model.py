"""Full contact model: two chain encoders, interleaving, dilated ResNet head."""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .autodiff import checkpoint
from .exceptions import CheckpointError, IncompatibleModelError
from .geoformer import GeoformerConfig, geoformer_forward, init_geoformer_params, prepare_graph
from .interaction import ResNetConfig, contact_probabilities, dilated_resnet, init_interaction_params, interleave

CONFIG_ENTRY = "__meta__/model_config"


class ContactModel:
    """Parameters plus architecture configuration for end-to-end prediction."""

    def __init__(self, geo_config=None, resnet_config=None, store=None, seed=0):
        self.geo_config = geo_config or GeoformerConfig()
        self.resnet_config = resnet_config or ResNetConfig()
        if store is None:
            rng = np.random.default_rng(seed)
            store = ad.ParameterStore()
            init_geoformer_params(store, self.geo_config, rng)
            init_interaction_params(store, 2 * self.geo_config.hidden_channels, self.resnet_config, rng)
        self.store = store

    def prepare(self, graph):
        return prepare_graph(graph, self.geo_config)

    def check_graph(self, graph):
        width = graph.node_features.shape[1]
        if width != self.geo_config.node_feature_dim:
            raise IncompatibleModelError(
                f"graph {getattr(graph, 'chain_id', '?')} has {width} node feature channels, "
                f"model expects {self.geo_config.node_feature_dim}"
            )

    def encode(self, graph, training=False, rng=None):
        return geoformer_forward(graph, self.geo_config, self.store, training=training, rng=rng)

    def forward(self, graph_a, graph_b, training=False, rng=None):
        """A x B x 2 logits tensor."""
        h_a = self.encode(graph_a, training, rng)
        h_b = self.encode(graph_b, training, rng)
        return dilated_resnet(interleave(h_a, h_b), self.resnet_config, self.store)

    def predict_proba(self, graph_a, graph_b):
        for g in (graph_a, graph_b):
            if not hasattr(g, "pos_src"):
                self.check_graph(g)
        with ad.no_grad():
            return contact_probabilities(self.forward(graph_a, graph_b, training=False))

    # -- persistence ---------------------------------------------------------
    def config_dict(self):
        return {"geoformer": self.geo_config.to_dict(), "resnet": self.resnet_config.to_dict()}

    def state_arrays(self, include_optimizer=True):
        arrays = self.store.state_arrays()
        if not include_optimizer:
            arrays = {k: v for k, v in arrays.items() if k.startswith("param/")}
        encoded = json.dumps(self.config_dict(), sort_keys=True).encode("utf-8")
        arrays[CONFIG_ENTRY] = np.frombuffer(encoded, dtype=np.uint8).copy()
        return arrays

    def save(self, path, include_optimizer=True):
        checkpoint.save(path, self.state_arrays(include_optimizer))

    @classmethod
    def from_state_arrays(cls, arrays):
        if CONFIG_ENTRY not in arrays:
            raise CheckpointError("checkpoint lacks model configuration")
        cfg = json.loads(bytes(arrays[CONFIG_ENTRY]).decode("utf-8"))
        geo = GeoformerConfig(**cfg["geoformer"])
        res = ResNetConfig(**cfg["resnet"])
        store = ad.ParameterStore.from_state_arrays(arrays)
        model = cls(geo, res, store=store)
        model._check_store()
        return model

    @classmethod
    def load(cls, path):
        return cls.from_state_arrays(checkpoint.load(path))

    def _check_store(self):
        # shapes of a freshly initialised store must match the loaded one
        with ad.default_dtype(np.float64):
            ref = ContactModel(self.geo_config, self.resnet_config, seed=0).store
        missing = set(ref.params) ^ set(self.store.params)
        if missing:
            raise IncompatibleModelError(f"checkpoint parameters do not match architecture: {sorted(missing)[:5]}")
        for name, t in ref.items():
            if t.shape != self.store[name].shape:
                raise IncompatibleModelError(f"parameter {name}: checkpoint {self.store[name].shape} vs expected {t.shape}")
