import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_samples, silhouette_score

from gbppm.core import SQ_EUCLIDEAN_MODEL, Dataset, Partition, manhattan, random_labels
from gbppm.dissim import pairwise_matrix
from gbppm.select import avg_silhouette, elbow_curve, silhouette_curve, silhouette_values


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1_000_000))
def test_silhouette_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    K = int(rng.integers(2, min(n - 1, 6) + 1))
    X = rng.normal(size=(n, 2))
    part = Partition(random_labels(n, K, rng))
    D = pairwise_matrix(Dataset(X), manhattan())
    np.testing.assert_allclose(silhouette_values(part, D), silhouette_samples(D.values, part.labels, metric="precomputed"),
                               atol=1e-9)
    assert avg_silhouette(part, D) == pytest.approx(silhouette_score(D.values, part.labels, metric="precomputed"),
                                                    abs=1e-9)


def test_silhouette_examples():
    D = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]], float)
    assert avg_silhouette(Partition([0, 0, 1, 1]), D) == 1.0
    assert avg_silhouette(Partition([0, 0, 1, 1]), np.ones((4, 4)) - np.eye(4)) == 0.0
    with pytest.raises(ValueError):
        avg_silhouette(Partition([0, 0, 0, 0]), D)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1_000_000), st.floats(0.1, 100))
def test_silhouette_bounds_and_invariances(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    lab = random_labels(15, 3, rng)
    D = pairwise_matrix(Dataset(X), manhattan()).values
    s = silhouette_values(Partition(lab), D)
    assert np.all((s >= -1) & (s <= 1))
    perm = rng.permutation(3)
    np.testing.assert_allclose(silhouette_values(Partition(perm[lab]), D), s)
    np.testing.assert_allclose(silhouette_values(Partition(lab), c * D), s, atol=1e-12)


def blobs(rng, per=10):
    centers = np.array([[0, 0], [8, 0], [0, 8], [8, 8]], float)
    return Dataset(np.repeat(centers, per, axis=0) + 0.5 * rng.normal(size=(4 * per, 2)))


def test_elbow_reaches_zero_and_drops_at_true_K():
    data = blobs(np.random.default_rng(0))
    curve = dict(elbow_curve(data, SQ_EUCLIDEAN_MODEL, range(1, 8), restarts=5, nested=True))
    assert (curve[3] - curve[4]) / (curve[4] - curve[5]) > 5
    assert all(curve[k + 1] <= curve[k] + 1e-9 for k in range(1, 7))
    small = Dataset(np.random.default_rng(1).normal(size=(6, 2)))
    assert dict(elbow_curve(small, manhattan(), [6]))[6] == 0.0
    with pytest.raises(ValueError):
        elbow_curve(small, SQ_EUCLIDEAN_MODEL, [7])


def test_nested_elbow_monotone_for_dissimilarities():
    data = Dataset(np.random.default_rng(2).standard_t(2, size=(30, 2)))
    curve = [v for _, v in elbow_curve(data, manhattan(), range(1, 9), restarts=2, nested=True)]
    assert np.all(np.diff(curve) <= 1e-9)


def test_silhouette_curve_peaks_at_true_K():
    data = blobs(np.random.default_rng(3))
    D = pairwise_matrix(data, manhattan())
    curve = silhouette_curve(data, manhattan(), range(2, 7), D, restarts=5)
    assert max(curve, key=lambda t: t[1])[0] == 4
