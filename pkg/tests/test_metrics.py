import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import special_ortho_group

from axelgnn.graph import Graph, random_graph
from axelgnn.metrics import (DegenerateMetricWarning, accuracy, calinski_harabasz, class_distances, mae,
                             polarization_report, silhouette, smoothness)


def silhouette_direct(x, labels):
    d = cdist(x, x)
    out = []
    for i in range(len(x)):
        same = labels == labels[i]
        if same.sum() == 1:
            out.append(0.0)
            continue
        a = d[i, same].sum() / (same.sum() - 1)
        b = min(d[i, labels == c].mean() for c in np.unique(labels) if c != labels[i])
        out.append((b - a) / max(a, b))
    return float(np.mean(out))


def ch_direct(x, labels):
    classes = np.unique(labels)
    mu = x.mean(axis=0)
    between = sum((labels == c).sum() * np.sum((x[labels == c].mean(0) - mu) ** 2) for c in classes)
    within = sum(np.sum((x[labels == c] - x[labels == c].mean(0)) ** 2) for c in classes)
    n, k = len(x), len(classes)
    return between / within * (n - k) / (k - 1)


def blobs(rng, n=100, sep=20.0):
    labels = np.repeat([0, 1], n // 2)
    x = rng.standard_normal((n, 3)) * 0.5
    x[labels == 1, 0] += sep
    return x, labels


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([1, 0, 2], [1, 0, 2]) == 1.0

    def test_random_binary(self, rng):
        labels = np.repeat([0, 1], 5000)
        assert abs(accuracy(rng.integers(0, 2, 10_000), labels) - 0.5) <= 0.02

    def test_complement(self, rng):
        labels = rng.integers(0, 2, 50)
        preds = rng.integers(0, 2, 50)
        assert accuracy(1 - preds, labels) == pytest.approx(1 - accuracy(preds, labels))

    def test_mask_and_empty(self):
        assert accuracy([0, 1, 1], [0, 0, 1], np.array([True, False, True])) == 1.0
        with pytest.raises(ValueError):
            accuracy([0], [0], np.array([False]))

    def test_mae(self):
        assert mae([0.1, 0.5], [0.2, 0.5]) == pytest.approx(0.05)


class TestPolarization:
    def test_point_masses(self):
        emb = np.array([[0.0, 0.0]] * 3 + [[3.0, 4.0]] * 3)
        with pytest.warns(DegenerateMetricWarning):
            rep = polarization_report([emb], [0, 0, 0, 1, 1, 1])
        layer = rep.layers[0]
        assert layer.intra_class_distance == 0 and layer.inter_class_distance == 5.0 and layer.flagged
        assert np.isnan(layer.polarization_ratio)

    def test_all_identical(self):
        with pytest.warns(DegenerateMetricWarning):
            rep = polarization_report([np.ones((4, 2))], [0, 1, 0, 1])
        assert rep.layers[0].flagged and rep.layers[0].inter_class_distance == 0

    def test_single_class(self, rng):
        with pytest.warns(DegenerateMetricWarning):
            rep = polarization_report([rng.standard_normal((5, 2))], [1] * 5)
        assert rep.layers[0].flagged and np.isnan(rep.layers[0].inter_class_distance)

    def test_scaling_invariance(self, rng):
        x, labels = blobs(rng, sep=3.0)
        r1 = polarization_report([x], labels).layers[0]
        r2 = polarization_report([2 * x], labels).layers[0]
        assert r2.inter_class_distance == pytest.approx(2 * r1.inter_class_distance)
        assert r2.intra_class_distance == pytest.approx(2 * r1.intra_class_distance)
        assert r2.polarization_ratio == pytest.approx(r1.polarization_ratio)

    def test_hand_values(self):
        emb = np.array([[0.0, 1.0], [0.0, -1.0], [4.0, 1.0], [4.0, -1.0]])
        inter, intra = class_distances(emb, np.array([0, 0, 1, 1]))
        assert (inter, intra) == (4.0, 1.0)

    def test_three_class_inter(self):
        emb = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
        inter, _ = class_distances(emb, np.array([0, 1, 2]))
        assert inter == pytest.approx((3 + 4 + 5) / 3)

    def test_rows_and_mask(self, rng):
        x, labels = blobs(rng)
        rep = polarization_report([x, x * 2], labels, mask=np.arange(0, 100, 2))
        rows = list(rep.rows())
        assert [r[0] for r in rows] == [1, 2] and len(rep.ratios) == 2


class TestSmoothness:
    def test_identical(self):
        g = random_graph(10, 20, seed=0)
        assert smoothness(np.ones((10, 3)), g) == pytest.approx(1.0)

    def test_orthogonal(self):
        g = Graph(2, [(0, 1)])
        assert smoothness(np.array([[1.0, 0.0], [0.0, 2.0]]), g) == 0.0

    def test_rotation_invariant(self, rng):
        g = random_graph(12, 25, seed=1)
        x = rng.standard_normal((12, 4))
        R = special_ortho_group.rvs(4, random_state=0)
        assert smoothness(x @ R, g) == pytest.approx(smoothness(x, g), abs=1e-12)

    def test_no_edges(self):
        assert np.isnan(smoothness(np.ones((3, 2)), Graph(3)))


class TestClustering:
    def test_blobs_high(self, rng):
        x, labels = blobs(rng)
        s = silhouette(x, labels)
        assert s > 0.9 and s == pytest.approx(silhouette_direct(x, labels), abs=1e-12)

    def test_shuffled_near_zero(self, rng):
        x, labels = blobs(rng)
        shuffled = rng.permutation(labels)
        s = silhouette(x, shuffled)
        assert abs(s) <= 0.1 and s == pytest.approx(silhouette_direct(x, shuffled), abs=1e-12)

    def test_singleton_class_contributes_zero(self, rng):
        x = rng.standard_normal((6, 2))
        labels = np.array([0, 0, 0, 1, 1, 2])
        assert silhouette(x, labels) == pytest.approx(silhouette_direct(x, labels), abs=1e-12)

    def test_ch_direct(self, rng):
        x = rng.standard_normal((30, 3))
        labels = rng.integers(0, 3, 30)
        assert calinski_harabasz(x, labels) == pytest.approx(ch_direct(x, labels), rel=1e-10)

    def test_ch_degenerate(self):
        with pytest.warns(DegenerateMetricWarning):
            assert np.isnan(calinski_harabasz(np.array([[0.0], [1.0]]), [0, 1]))

    def test_one_class(self):
        with pytest.raises(ValueError):
            silhouette(np.zeros((3, 2)), [0, 0, 0])

    @settings(max_examples=30)
    @given(st.integers(0, 2**31))
    def test_ranges_and_reorder(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 30))
        x = rng.standard_normal((n, 3))
        labels = np.arange(n) % 3
        perm = rng.permutation(n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateMetricWarning)
            s, ch = silhouette(x, labels), calinski_harabasz(x, labels)
            assert -1 <= s <= 1 and ch >= 0
            assert silhouette(x[perm], labels[perm]) == pytest.approx(s, abs=1e-12)
            assert calinski_harabasz(x[perm], labels[perm]) == pytest.approx(ch, rel=1e-10)
            p1 = polarization_report([x], labels).ratios
            p2 = polarization_report([x[perm]], labels[perm]).ratios
        np.testing.assert_allclose(p1, p2, rtol=1e-12)

    @settings(max_examples=20)
    @given(st.integers(0, 2**31))
    def test_smoothness_reorder(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(9, 15, seed=seed)
        perm = rng.permutation(9)
        x = rng.standard_normal((9, 3))
        xp = np.empty_like(x)
        xp[perm] = x
        assert smoothness(xp, g.permute(perm)) == pytest.approx(smoothness(x, g), abs=1e-12)
