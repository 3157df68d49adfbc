"""Evaluation and embedding-analysis metrics.

All functions are pure: they take arrays (embeddings, labels, predictions)
and never touch a model. Degenerate inputs produce ``nan`` together with a
:class:`DegenerateMetricWarning` instead of an exception.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import calinski_harabasz_score, silhouette_score

from .graph import Graph

INTRA_TOL = 1e-12


class DegenerateMetricWarning(RuntimeWarning):
    pass


def _mask_idx(mask, n: int) -> np.ndarray:
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("empty mask")
    return idx


def accuracy(preds, labels, mask=None) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    idx = _mask_idx(mask, len(labels))
    return float(np.mean(preds[idx] == labels[idx]))


def mae(pred, target, mask=None) -> float:
    pred, target = np.asarray(pred, dtype=float).ravel(), np.asarray(target, dtype=float).ravel()
    idx = _mask_idx(mask, len(target))
    return float(np.mean(np.abs(pred[idx] - target[idx])))


@dataclass
class LayerPolarization:
    layer: int
    inter_class_distance: float
    intra_class_distance: float
    polarization_ratio: float
    flagged: bool


@dataclass
class PolarizationReport:
    layers: list[LayerPolarization]
    definition: str = ("intra = mean Euclidean distance of each node to its class centroid; "
                       "inter = mean pairwise Euclidean distance between class centroids")

    @property
    def ratios(self) -> np.ndarray:
        return np.array([l.polarization_ratio for l in self.layers])

    def rows(self):
        for l in self.layers:
            yield l.layer, l.inter_class_distance, l.intra_class_distance, l.polarization_ratio, l.flagged


def class_distances(emb: np.ndarray, labels) -> tuple[float, float]:
    """``(inter, intra)`` centroid distances; inter is ``nan`` with fewer than two classes."""
    emb, labels = np.asarray(emb, dtype=float), np.asarray(labels)
    classes = np.unique(labels)
    cents = np.stack([emb[labels == c].mean(axis=0) for c in classes])
    intra = float(np.mean(np.linalg.norm(emb - cents[np.searchsorted(classes, labels)], axis=1)))
    if len(classes) < 2:
        return float("nan"), intra
    i, j = np.triu_indices(len(classes), k=1)
    inter = float(np.mean(np.linalg.norm(cents[i] - cents[j], axis=1)))
    return inter, intra


def polarization_report(per_layer_embeddings, labels, mask=None) -> PolarizationReport:
    labels = np.asarray(labels)
    idx = _mask_idx(mask, len(labels))
    out = []
    for li, emb in enumerate(per_layer_embeddings, 1):
        inter, intra = class_distances(np.asarray(emb)[idx], labels[idx])
        flagged = not np.isfinite(inter) or intra <= INTRA_TOL
        ratio = float("nan") if flagged else inter / intra
        out.append(LayerPolarization(li, inter, intra, ratio, flagged))
    if any(l.flagged for l in out):
        warnings.warn("polarization ratio undefined on some layers", DegenerateMetricWarning, stacklevel=2)
    return PolarizationReport(out)


def smoothness(embeddings, graph: Graph, eps: float = 1e-8) -> float:
    """Mean cosine similarity of endpoint embeddings over the edges (1.0 = fully smoothed)."""
    emb = np.asarray(embeddings, dtype=float)
    if graph.num_edges == 0:
        return float("nan")
    a, b = emb[graph.edges[:, 0]], emb[graph.edges[:, 1]]
    num = np.einsum("ij,ij->i", a, b)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) + eps
    return float(np.mean(num / den))


def _check_clusters(labels) -> np.ndarray:
    labels = np.asarray(labels)
    uniq, counts = np.unique(labels, return_counts=True)
    if len(uniq) < 2:
        raise ValueError("need at least two classes")
    return counts


def silhouette(embeddings, labels) -> float:
    """Mean silhouette; points in singleton classes contribute 0."""
    counts = _check_clusters(labels)
    if len(counts) >= len(labels):
        warnings.warn("every point is its own class; silhouette undefined", DegenerateMetricWarning, stacklevel=2)
        return float("nan")
    return float(silhouette_score(np.asarray(embeddings, dtype=float), labels))


def calinski_harabasz(embeddings, labels) -> float:
    """Between/within dispersion ratio scaled by ``(n - k) / (k - 1)``; ``nan`` if within-dispersion is 0."""
    _check_clusters(labels)
    x, labels = np.asarray(embeddings, dtype=float), np.asarray(labels)
    within = sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))
    if within <= 0.0 or len(np.unique(labels)) >= len(labels):
        warnings.warn("zero within-class dispersion; Calinski-Harabasz undefined",
                      DegenerateMetricWarning, stacklevel=2)
        return float("nan")
    return float(calinski_harabasz_score(x, labels))
