"""Losses, Adam, full-graph training with early stopping, and grid search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import Graph, SplitMask
from .model import GraphModel
from .tensor import (Tensor, Tape, absolute, backward, log_softmax, mean, neg, pick,
                     sub, take_rows, zero_grad)

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def _rows(mask) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("empty mask")
    return idx


def cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean negative log-softmax of the true class over the masked rows."""
    idx = _rows(mask)
    labels = np.asarray(labels)[idx]
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels outside [0, {k}) on masked nodes")
    return neg(mean(pick(log_softmax(take_rows(logits, idx)), labels)))


def mae_loss(pred: Tensor, target, mask) -> Tensor:
    idx = _rows(mask)
    tgt = Tensor(np.asarray(target, dtype=float)[idx].reshape(-1, 1))
    return mean(absolute(sub(take_rows(pred, idx), tgt)))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState,
              lr: float, weight_decay: float = 0.0, decay_mask: list[bool] | None = None) -> None:
    """One bias-corrected Adam update in place; L2 decay is added to the gradient."""
    if len(params) != len(state.m):
        raise ValueError("optimizer state does not match parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, p in enumerate(params):
        g = grads[i] if grads[i] is not None else np.zeros(p.shape)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}: {p.shape} vs grad {g.shape}")
        if weight_decay and (decay_mask is None or decay_mask[i]):
            g = g + weight_decay * p.data
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p.data = p.data - lr * (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + state.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 1000
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    mean_embedding_change: list[float] = field(default_factory=list)

    def rows(self):
        return zip(self.epoch, self.train_loss, self.val_loss, self.val_metric, self.mean_embedding_change)


@dataclass
class TrainResult:
    model: GraphModel
    history: History
    best_epoch: int
    best_val_metric: float
    stopped_early: bool


def accuracy_of(logits: np.ndarray, labels, idx) -> float:
    return float(np.mean(logits[idx].argmax(axis=1) == np.asarray(labels)[idx]))


def mae_of(pred: np.ndarray, target, idx) -> float:
    return float(np.mean(np.abs(pred[idx, 0] - np.asarray(target, dtype=float)[idx])))


def _embedding_change(prev: list[np.ndarray] | None, cur: list[np.ndarray]) -> float:
    if prev is None:
        return float("nan")
    return float(np.mean([np.linalg.norm(c - p, axis=1).mean() for p, c in zip(prev, cur)]))


def fit(model: GraphModel, graph: Graph, X: np.ndarray, y, splits: SplitMask,
        config: TrainConfig) -> TrainResult:
    """Full-graph training with Adam and best-validation restore.

    The model's task decides the loss: cross-entropy with accuracy for
    ``classify``, MAE for ``regress``. Validation, the early-stopping
    criterion and the embedding-change trace all come from a dropout-free
    forward pass after each update.
    """
    classify = model.config.task == "classify"
    train_idx = _rows(splits.train)
    val_idx = _rows(splits.val) if np.asarray(splits.val).any() else train_idx
    loss_fn = cross_entropy if classify else mae_loss
    rng = np.random.default_rng(config.seed)
    xt = Tensor(X)
    params = model.parameters()
    decay = model.decay_flags()
    state = AdamState.for_params(params)
    hist = History()
    best = (-math.inf, -math.inf)
    best_state, best_epoch, waited = model.state(), 0, 0
    prev_emb = None
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        zero_grad(params)
        with Tape() as tape:
            out = model.forward(graph, xt, train_mode=True, rng=rng).output
            loss = loss_fn(out, y, train_idx)
        if not np.isfinite(loss.item()):
            raise DivergenceError(f"non-finite training loss {loss.item()} at epoch {epoch}")
        backward(loss, tape)
        adam_step(params, [p.grad for p in params], state, config.learning_rate,
                  config.weight_decay, decay)

        ev = model.forward(graph, xt, train_mode=False)
        val_loss = loss_fn(ev.output, y, val_idx).item()
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        metric = accuracy_of(ev.output.data, y, val_idx) if classify else mae_of(ev.output.data, y, val_idx)
        hist.epoch.append(epoch)
        hist.train_loss.append(loss.item())
        hist.val_loss.append(val_loss)
        hist.val_metric.append(metric)
        hist.mean_embedding_change.append(_embedding_change(prev_emb, ev.embeddings))
        prev_emb = ev.embeddings

        # higher is better for both keys; val loss breaks metric ties
        key = (metric if classify else -metric, -val_loss)
        if key > best:
            best, best_state, best_epoch, waited = key, model.state(), epoch, 0
        else:
            waited += 1
            if waited >= config.patience:
                stopped = True
                break
    model.load_state(best_state)
    best_metric = best[0] if classify else -best[0]
    log.debug("stopped at epoch %d, best epoch %d (val %.4f)", epoch, best_epoch, best_metric)
    return TrainResult(model, hist, best_epoch, best_metric, stopped)


def evaluate(model: GraphModel, graph: Graph, X: np.ndarray, y, mask) -> float:
    idx = _rows(mask)
    out = model.forward(graph, Tensor(X), train_mode=False).output.data
    return accuracy_of(out, y, idx) if model.config.task == "classify" else mae_of(out, y, idx)


# ------------------------------------------------------------------ grid search

@dataclass
class GridResult:
    best: dict
    best_score: float
    cells: list[dict]


def grid_space_size(space: dict[str, list]) -> int:
    return math.prod(len(v) for v in space.values())


def grid_search(space: dict[str, list], protocol: Callable[[dict, int], float], repeats: int = 1,
                maximize: bool = True) -> GridResult:
    """Exhaustive search over the product of ``space``.

    ``protocol(cell, repeat)`` returns a validation score; a raised
    :class:`DivergenceError` or a non-finite score marks that repeat as failed.
    Cells are ranked by mean score over repeats; failed cells rank last.
    """
    if not space or any(len(v) == 0 for v in space.values()):
        raise ValueError("grid space must be non-empty")
    keys = list(space)
    cells = []
    for combo in itertools.product(*(space[k] for k in keys)):
        cell = dict(zip(keys, combo))
        scores, failed = [], False
        for r in range(repeats):
            try:
                sc = float(protocol(cell, r))
            except DivergenceError as exc:
                log.info("cell %s diverged: %s", cell, exc)
                sc = float("nan")
            if not np.isfinite(sc):
                failed = True
            scores.append(sc)
        mean_sc = float(np.mean(scores)) if not failed else float("nan")
        std_sc = float(np.std(scores)) if not failed else float("nan")
        cells.append({"params": cell, "scores": scores, "mean": mean_sc, "std": std_sc, "failed": failed})
    ok = [c for c in cells if not c["failed"]]
    if not ok:
        raise DivergenceError("every grid cell failed")
    pick_fn = max if maximize else min
    best = pick_fn(ok, key=lambda c: c["mean"])
    return GridResult(best["params"], best["mean"], cells)
