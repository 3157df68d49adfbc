"""scikit-learn compatible node-level estimators.

Graph models are transductive: ``fit``, ``predict`` and ``transform`` all
take the node feature matrix ``X`` for the whole graph plus the
:class:`~axelgnn.graph.Graph` itself. Rows of ``X`` are nodes.

    >>> clf = AxelGNNClassifier(num_layers=2, hidden_dim=16, max_epochs=50)
    >>> clf.fit(X, y, graph, train_mask=split.train, val_mask=split.val)  # doctest: +SKIP
    >>> clf.score(X, y, graph, mask=split.test)  # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted

from .baseline import MeanAggConfig, MeanAggGNN
from .graph import Graph, SplitMask
from .model import AxelGNN, ModelConfig
from .tensor import Tensor
from .training import TrainConfig, fit as train_model


def check_graph_inputs(X, graph, y=None):
    """Validate a node feature matrix (and optional targets) against ``graph``."""
    if not isinstance(graph, Graph):
        raise TypeError(f"graph must be an axelgnn Graph, got {type(graph).__name__}")
    X = check_array(X, dtype=np.float64)
    if X.shape[0] != graph.n:
        raise ValueError(f"X has {X.shape[0]} rows but the graph has {graph.n} nodes")
    if y is None:
        return X
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != graph.n:
        raise ValueError(f"y must be 1-D with one entry per node ({graph.n}), got shape {y.shape}")
    return X, y


def _as_mask(mask, n: int, default) -> np.ndarray:
    if mask is None:
        return default
    mask = np.asarray(mask)
    if mask.dtype != bool:
        out = np.zeros(n, dtype=bool)
        out[mask.astype(np.int64)] = True
        return out
    if mask.shape != (n,):
        raise ValueError(f"mask must have length {n}")
    return mask


class _GraphEstimator(BaseEstimator):
    _task = "classify"

    def _train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                           max_epochs=self.max_epochs, patience=self.patience, seed=self.random_state)

    def _fit_model(self, X, target, graph, train_mask, val_mask, labeled):
        n = graph.n
        val = _as_mask(val_mask, n, np.zeros(n, dtype=bool))
        train = _as_mask(train_mask, n, labeled & ~val)
        if (train & val).any():
            raise ValueError("train and validation masks overlap")
        self.n_features_in_ = X.shape[1]
        self.model_ = self._build(X.shape[1])
        result = train_model(self.model_, graph, X, target, SplitMask(train, val, ~(train | val)),
                             self._train_config())
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def _forward(self, X, graph):
        check_is_fitted(self, "model_")
        X = check_graph_inputs(X, graph)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fit with {self.n_features_in_}")
        return self.model_.forward(graph, Tensor(X), train_mode=False)

    def transform(self, X, graph):
        """Final-layer node embeddings."""
        return self._forward(X, graph).embeddings[-1]

    def layer_embeddings(self, X, graph) -> list[np.ndarray]:
        return self._forward(X, graph).embeddings


class _ClassifierBase(ClassifierMixin, _GraphEstimator):
    def fit(self, X, y, graph, train_mask=None, val_mask=None):
        """Fit on the labeled nodes; ``-1`` marks unlabeled nodes when no ``train_mask`` is given."""
        X, y = check_graph_inputs(X, graph, y)
        y = y.astype(np.int64)
        labeled = y >= 0
        use = _as_mask(train_mask, graph.n, labeled) | _as_mask(val_mask, graph.n, np.zeros(graph.n, bool))
        self.classes_ = np.unique(y[use])
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes among training labels")
        encoded = np.full(graph.n, -1, dtype=np.int64)
        encoded[use] = np.searchsorted(self.classes_, y[use])
        return self._fit_model(X, encoded, graph, train_mask, val_mask, labeled)

    def predict_proba(self, X, graph):
        logits = self._forward(X, graph).output.data
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X, graph):
        logits = self._forward(X, graph).output.data
        return self.classes_[logits.argmax(axis=1)]

    def score(self, X, y, graph, mask=None):
        pred = self.predict(X, graph)
        idx = _as_mask(mask, graph.n, np.ones(graph.n, dtype=bool))
        return float(np.mean(pred[idx] == np.asarray(y)[idx]))


class _RegressorBase(RegressorMixin, _GraphEstimator):
    _task = "regress"

    def fit(self, X, y, graph, train_mask=None, val_mask=None):
        """Fit unit-interval targets (e.g. activation probabilities) by MAE; NaN marks unlabeled nodes."""
        X, y = check_graph_inputs(X, graph, y)
        y = y.astype(np.float64)
        labeled = np.isfinite(y)
        if (y[labeled] < 0).any() or (y[labeled] > 1).any():
            raise ValueError("regression targets must lie in [0, 1]")
        return self._fit_model(X, np.nan_to_num(y), graph, train_mask, val_mask, labeled)

    def predict(self, X, graph):
        return self._forward(X, graph).output.data[:, 0]

    def score(self, X, y, graph, mask=None):
        idx = _as_mask(mask, graph.n, np.ones(graph.n, dtype=bool))
        return float(r2_score(np.asarray(y, dtype=float)[idx], self.predict(X, graph)[idx]))


class _AxelParams:
    def _build(self, d_in: int):
        n_out = len(self.classes_) if self._task == "classify" else 1
        cfg = ModelConfig(num_layers=self.num_layers, hidden_dim=self.hidden_dim,
                          segment_size=self.segment_size, variant=self.variant, dropout=self.dropout,
                          task=self._task, num_classes=n_out, phi_hidden=self.phi_hidden,
                          literal_normalization=self.literal_normalization)
        return AxelGNN(d_in, cfg, seed=self.random_state)


class AxelGNNClassifier(_AxelParams, _ClassifierBase):
    def __init__(self, num_layers=2, hidden_dim=64, segment_size=8, variant="full", dropout=0.5,
                 learning_rate=0.01, weight_decay=5e-4, max_epochs=1000, patience=100,
                 phi_hidden=None, literal_normalization=False, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.segment_size = segment_size
        self.variant = variant
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.phi_hidden = phi_hidden
        self.literal_normalization = literal_normalization
        self.random_state = random_state


class AxelGNNRegressor(_AxelParams, _RegressorBase):
    def __init__(self, num_layers=2, hidden_dim=64, segment_size=8, variant="full", dropout=0.5,
                 learning_rate=0.01, weight_decay=5e-4, max_epochs=200, patience=30,
                 phi_hidden=None, literal_normalization=False, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.segment_size = segment_size
        self.variant = variant
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.phi_hidden = phi_hidden
        self.literal_normalization = literal_normalization
        self.random_state = random_state


class _MeanParams:
    def _build(self, d_in: int):
        n_out = len(self.classes_) if self._task == "classify" else 1
        cfg = MeanAggConfig(num_layers=self.num_layers, hidden_dim=self.hidden_dim, dropout=self.dropout,
                            task=self._task, num_classes=n_out)
        return MeanAggGNN(d_in, cfg, seed=self.random_state)


class MeanAggClassifier(_MeanParams, _ClassifierBase):
    """GCN-style mean-aggregation reference model."""

    def __init__(self, num_layers=2, hidden_dim=64, dropout=0.5, learning_rate=0.01,
                 weight_decay=5e-4, max_epochs=1000, patience=100, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state


class MeanAggRegressor(_MeanParams, _RegressorBase):
    def __init__(self, num_layers=2, hidden_dim=64, dropout=0.5, learning_rate=0.01,
                 weight_decay=5e-4, max_epochs=200, patience=30, random_state=0):
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state
