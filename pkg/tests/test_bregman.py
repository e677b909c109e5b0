import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.cluster import KMeans

from gbppm.bregman import (
    adjusted_centroids,
    bregman_divergence,
    bregman_kmeans,
    divergence_matrix,
    plain_centroids,
)
from gbppm.core import (
    BERNOULLI_KL_MODEL,
    BINARY,
    SQ_EUCLIDEAN_MODEL,
    Dataset,
    DegenerateDataError,
    DomainError,
    InitSpec,
    InvariantError,
    Partition,
    enumerate_partitions,
    loss,
    manhattan,
    random_labels,
)


def enumerated_losses(X, n, K, kind="sq"):
    """Loss of every K-block partition, vectorized over the enumeration."""
    parts = enumerate_partitions(n, K)
    lab = np.array([p.labels for p in parts])
    total = np.zeros(len(parts))
    for k in range(K):
        mask = (lab == k).astype(float)
        cnt = mask.sum(1)
        s = mask @ X
        if kind == "sq":
            total += mask @ (X ** 2).sum(1) - (s ** 2).sum(1) / cnt
        else:
            mu = cnt[:, None] / (cnt[:, None] + 1) * s / cnt[:, None] + 0.5 / (cnt[:, None] + 1)
            total += -(s * np.log(mu) + (cnt[:, None] - s) * np.log1p(-mu)).sum(1)
    return parts, total


# divergences -----------------------------------------------------------------

def test_divergence_examples():
    assert bregman_divergence(SQ_EUCLIDEAN_MODEL, [1, 2], [0, 0]) == 5.0
    assert bregman_divergence(BERNOULLI_KL_MODEL, [1], [0.75]) == pytest.approx(math.log(4 / 3), abs=1e-6)
    assert bregman_divergence(SQ_EUCLIDEAN_MODEL, [0.3, 0.4], [0.3, 0.4]) == 0.0
    assert bregman_divergence(BERNOULLI_KL_MODEL, [0.3, 0.4], [0.3, 0.4]) == pytest.approx(0.0, abs=1e-15)


def test_divergence_boundary_and_shape_errors():
    with pytest.raises(DomainError):
        bregman_divergence(BERNOULLI_KL_MODEL, [1], [1.0])
    with pytest.raises(DomainError):
        bregman_divergence(BERNOULLI_KL_MODEL, [0], [0.0])
    with pytest.raises(DomainError):
        bregman_divergence(SQ_EUCLIDEAN_MODEL, [1, 2], [0])
    with pytest.raises(DomainError):
        bregman_divergence(manhattan(), [1], [0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3))
def test_kl_divergence_nonnegative_and_matches_definition(x, mu):
    x, mu = np.array(x), np.array(mu)
    got = bregman_divergence(BERNOULLI_KL_MODEL, x, mu)
    want = 0.0
    for a, b in zip(x, mu):
        want += (a * math.log(a / b) if a > 0 else 0.0) + ((1 - a) * math.log((1 - a) / (1 - b)) if a < 1 else 0.0)
    assert got >= -1e-15
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_divergence_matrix_agrees_with_pointwise():
    rng = np.random.default_rng(0)
    B = (rng.random((9, 4)) < 0.4).astype(float)
    M = rng.uniform(0.05, 0.95, size=(3, 4))
    D = divergence_matrix(BERNOULLI_KL_MODEL, B, M)
    for i in range(9):
        for k in range(3):
            assert D[i, k] == pytest.approx(bregman_divergence(BERNOULLI_KL_MODEL, B[i], M[k]), rel=1e-12)


# centroids -------------------------------------------------------------------

def test_plain_centroids():
    ds = Dataset([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]])
    c = plain_centroids(ds, Partition([0, 0, 1]))
    np.testing.assert_array_equal(c.means, [[1.0, 0.0], [5.0, 5.0]])
    assert not c.adjusted
    X = np.random.default_rng(1).normal(size=(7, 3)) * 1e3
    c = plain_centroids(Dataset(X), Partition([0] * 7))
    np.testing.assert_allclose(c.means[0], [math.fsum(X[:, j]) / 7 for j in range(3)], rtol=0, atol=1e-12 * 1e3)


def test_adjusted_centroid_examples():
    ds = Dataset([[1, 1], [1, 0], [1, 1], [0, 1]], BINARY)
    c = adjusted_centroids(ds, Partition([0, 0, 0, 1]))
    assert c.adjusted
    assert c.means[0, 0] == pytest.approx(0.875)
    assert c.means[1, 0] == pytest.approx(0.25)
    half = adjusted_centroids(Dataset([[1], [0], [1], [0]], BINARY), Partition([0, 0, 0, 0]))
    assert half.means[0, 0] == pytest.approx(0.5)
    with pytest.raises(DomainError):
        adjusted_centroids(Dataset([[0.5]]), Partition([0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_adjusted_centroids_strictly_inside(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    B = (rng.random((n, 3)) < rng.random()).astype(float)
    c = adjusted_centroids(Dataset(B, BINARY), Partition(random_labels(n, int(rng.integers(1, n + 1)), rng)))
    assert np.all((c.means > 0) & (c.means < 1))


# k-means ---------------------------------------------------------------------

def test_recovers_separated_blobs_which_is_the_enumerated_optimum():
    rng = np.random.default_rng(3)
    centers = np.array([[-10, -10], [-10, 10], [10, -10], [10, 10]], float)
    truth = np.repeat(np.arange(4), 3)
    X = centers[truth] + 0.1 * rng.normal(size=(12, 2))
    part, _ = bregman_kmeans(Dataset(X), SQ_EUCLIDEAN_MODEL, 4, rng=np.random.default_rng(0))
    parts, losses = enumerated_losses(X, 12, 4)
    assert parts[int(np.argmin(losses))] == Partition(truth)
    assert part == Partition(truth)


def test_k_equals_n_gives_singletons():
    X = Dataset(np.random.default_rng(0).normal(size=(6, 2)))
    part, trace = bregman_kmeans(X, SQ_EUCLIDEAN_MODEL, 6, rng=np.random.default_rng(0))
    assert part.K == 6 and trace[-1] == 0.0


def test_binary_pure_blocks_recovered():
    B = np.vstack([np.zeros((4, 5)), np.ones((4, 5))])
    ds = Dataset(B, BINARY)
    part, _ = bregman_kmeans(ds, BERNOULLI_KL_MODEL, 2, rng=np.random.default_rng(0))
    parts, losses = enumerated_losses(B, 8, 2, kind="kl")
    assert part == Partition([0] * 4 + [1] * 4) == parts[int(np.argmin(losses))]
    np.testing.assert_allclose(min(losses), loss(part, ds, BERNOULLI_KL_MODEL), rtol=1e-12)


def test_matches_lloyd_kmeans_from_shared_start():
    rng = np.random.default_rng(8)
    for _ in range(10):
        X = rng.normal(size=(40, 2)) + rng.integers(0, 3, size=(40, 1)) * 3
        start = random_labels(40, 3, rng)
        part, _ = bregman_kmeans(Dataset(X), SQ_EUCLIDEAN_MODEL, 3, init=InitSpec("labels", tuple(start)))
        init_centers = np.array([X[start == k].mean(0) for k in range(3)])
        km = KMeans(3, init=init_centers, n_init=1, algorithm="lloyd", tol=0, max_iter=300).fit(X)
        assert part == Partition(km.labels_)


@pytest.mark.parametrize("model_kind", ["sq", "kl"])
def test_best_of_restarts_reaches_enumerated_minimum(model_kind):
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, K = 9, 3
        if model_kind == "sq":
            X = rng.normal(size=(n, 2))
            model, ds = SQ_EUCLIDEAN_MODEL, Dataset(X)
        else:
            X = (rng.random((n, 4)) < 0.5).astype(float)
            model, ds = BERNOULLI_KL_MODEL, Dataset(X, BINARY)
        _, losses = enumerated_losses(X, n, K, kind=model_kind)
        best = min(bregman_kmeans(ds, model, K, init=InitSpec("random"), rng=np.random.default_rng(r))[1][-1]
                   for r in range(60))
        assert best == pytest.approx(losses.min(), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["kmeans++", "random"]))
def test_trace_monotone_and_terminates(seed, init):
    rng = np.random.default_rng(seed)
    n, K = int(rng.integers(5, 40)), int(rng.integers(2, 6))
    for model, ds in ((SQ_EUCLIDEAN_MODEL, Dataset(rng.normal(size=(n, 3)))),
                      (BERNOULLI_KL_MODEL, Dataset((rng.random((n, 5)) < 0.4).astype(float), BINARY))):
        try:
            part, trace = bregman_kmeans(ds, model, K, init=InitSpec(init), max_iter=10 * n, rng=rng)
        except DegenerateDataError:
            continue
        assert part.K == K
        assert np.all(np.diff(trace) <= 1e-10)
        assert len(trace) < 10 * n + 1
        assert trace[-1] == pytest.approx(loss(part, ds, model), rel=1e-12, abs=1e-12)


def test_kl_never_hits_boundary_on_pure_blocks():
    B = np.vstack([np.zeros((5, 3)), np.ones((5, 3)), [[1, 0, 1]] * 3])
    for seed in range(30):
        part, _ = bregman_kmeans(Dataset(B, BINARY), BERNOULLI_KL_MODEL, 3, init=InitSpec("random"),
                                 rng=np.random.default_rng(seed))
        assert part.K == 3


def test_degenerate_and_invalid_inputs():
    with pytest.raises(DegenerateDataError):
        bregman_kmeans(Dataset(np.ones((5, 2))), SQ_EUCLIDEAN_MODEL, 2)
    with pytest.raises(InvariantError):
        bregman_kmeans(Dataset(np.eye(3)), SQ_EUCLIDEAN_MODEL, 4)
    with pytest.raises(DomainError):
        bregman_kmeans(Dataset(np.eye(3)), manhattan(), 2)
    with pytest.raises(DomainError):
        bregman_kmeans(Dataset(np.eye(3) * 0.5), BERNOULLI_KL_MODEL, 2)
    with pytest.raises(ValueError):
        bregman_kmeans(Dataset(np.eye(3)), SQ_EUCLIDEAN_MODEL, 2, max_iter=0)


def test_empty_block_is_repaired():
    # a far-away seed centroid attracts nothing on the first pass
    X = np.array([[0.0], [0.1], [0.2], [0.3], [10.0]])
    part, _ = bregman_kmeans(Dataset(X), SQ_EUCLIDEAN_MODEL, 3, init=InitSpec("labels", (0, 0, 0, 1, 2)))
    assert part.K == 3


def test_deterministic_under_seed():
    X = Dataset(np.random.default_rng(2).normal(size=(30, 2)))
    a = bregman_kmeans(X, SQ_EUCLIDEAN_MODEL, 4, rng=np.random.default_rng(5))
    b = bregman_kmeans(X, SQ_EUCLIDEAN_MODEL, 4, rng=np.random.default_rng(5))
    assert a[0] == b[0] and a[1] == b[1]
