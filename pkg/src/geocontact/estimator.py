"""scikit-learn style wrappers: a chain featurizer and a contact predictor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_chain_input, check_pairs
from .graph import assemble_chain_graph
from .metrics import k_values, topk_precision
from .model import ContactModel
from .training import RunConfig, Sample, train


class ChainGraphFeaturizer(TransformerMixin, BaseEstimator):
    """Turn parsed chains into k-NN graphs with invariant edge features.

    ``transform`` accepts a list whose items are ``ChainResidues`` or
    ``(ChainResidues, features)`` tuples and returns ``ChainGraph`` objects.
    """

    def __init__(self, k=20, feature_width=0):
        self.k = k
        self.feature_width = feature_width

    def fit(self, X=None, y=None):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.n_features_out_ = None
        return self

    def transform(self, X):
        graphs = []
        for item in X:
            chain, features = check_chain_input(item)
            graphs.append(assemble_chain_graph(chain, features, k=self.k, feature_width=self.feature_width))
        if graphs:
            self.n_features_out_ = graphs[0].node_features.shape[1]
        return graphs


class ContactPredictor(BaseEstimator):
    """Inter-chain contact predictor over pairs of chain graphs.

    ``X`` is a sequence of ``(graph_a, graph_b)`` pairs, ``y`` a matching
    sequence of A x B binary label matrices.
    """

    def __init__(
        self,
        learning_rate=1e-3,
        weight_decay=1e-2,
        dropout=0.2,
        positive_weight=5.0,
        clip_value=0.5,
        knn_k=20,
        neighborhood_n=2,
        num_layers=2,
        hidden_channels=128,
        resnet_layers=14,
        early_stopping_patience=5,
        max_epochs=50,
        seed=42,
        swa_start_epoch=10,
        use_swa=False,
    ):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.positive_weight = positive_weight
        self.clip_value = clip_value
        self.knn_k = knn_k
        self.neighborhood_n = neighborhood_n
        self.num_layers = num_layers
        self.hidden_channels = hidden_channels
        self.resnet_layers = resnet_layers
        self.early_stopping_patience = early_stopping_patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.swa_start_epoch = swa_start_epoch
        self.use_swa = use_swa

    def run_config(self):
        params = self.get_params()
        params.pop("use_swa")
        return RunConfig(**params)

    def fit(self, X, y, X_val=None, y_val=None, warm_start_model=None):
        pairs, labels = check_pairs(X, y)
        config = self.run_config()
        width = pairs[0][0].node_features.shape[1]
        if warm_start_model is not None:
            model = warm_start_model
        else:
            model = ContactModel(config.geoformer_config(width), config.resnet_config(), seed=config.seed)
        for a, b in pairs:
            model.check_graph(a)
            model.check_graph(b)
        samples = [Sample(a, b, lab) for (a, b), lab in zip(pairs, labels)]
        val = None
        if X_val is not None:
            vpairs, vlabels = check_pairs(X_val, y_val)
            val = [Sample(a, b, lab) for (a, b), lab in zip(vpairs, vlabels)]
        result = train(model, samples, val, config)
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        chosen = result.swa_state if self.use_swa and result.swa_state is not None else result.best_state
        self.model_ = ContactModel.from_state_arrays(chosen) if chosen is not None else model
        self.swa_state_ = result.swa_state
        self.n_node_features_in_ = width
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        pairs, _ = check_pairs(X)
        return [self.model_.predict_proba(a, b) for a, b in pairs]

    def predict(self, X, threshold=0.5):
        return [(p >= threshold).astype(np.int8) for p in self.predict_proba(X)]

    def score(self, X, y):
        """Mean top-L/5 precision over complexes."""
        pairs, labels = check_pairs(X, y)
        probs = self.predict_proba(pairs)
        scores = []
        for p, lab in zip(probs, labels):
            k = k_values(*p.shape)["precision"][2]
            scores.append(topk_precision(p, lab, k))
        return float(np.mean(scores))
