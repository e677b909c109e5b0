import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbppm.bregman import bregman_kmeans
from gbppm.core import (
    SQ_EUCLIDEAN_MODEL,
    CohesionModel,
    ConfigError,
    Dataset,
    DegenerateDataError,
    DomainError,
    InitSpec,
    InvariantError,
    Partition,
    ResourceError,
    enumerate_partitions,
    loss,
    manhattan,
    pairwise_sq_euclidean,
    random_labels,
)
from gbppm.dissim import (
    ClusterCache,
    DissimMatrix,
    avg_dissimilarity,
    k_dissimilarities,
    pairwise_matrix,
    reallocation_delta,
)
from gbppm.sim import MixtureSpec, gen_mixture
from gbppm.uq import vi_distance
from oracles import avg_dissim_loss

EUCLID = CohesionModel("avg_dissimilarity", "p_th_root", 2.0)


def block_total(D, members):
    members = np.asarray(members)
    if members.size == 0:
        return 0.0
    return D[np.ix_(members, members)].sum() / members.size


def test_pairwise_examples():
    ds = Dataset([[0.0, 0.0], [3.0, 4.0]])
    assert pairwise_matrix(ds, pairwise_sq_euclidean()).values[0, 1] == 25
    assert pairwise_matrix(ds, manhattan()).values[0, 1] == 7
    assert pairwise_matrix(ds, EUCLID).values[0, 1] == pytest.approx(5)


def test_pairwise_matrix_properties_and_errors():
    X = Dataset(np.random.default_rng(0).normal(size=(30, 3)))
    D = pairwise_matrix(X, manhattan()).values
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0) and np.all(D >= 0)
    with pytest.raises(ConfigError):
        pairwise_matrix(X, SQ_EUCLIDEAN_MODEL)
    with pytest.raises(ResourceError):
        pairwise_matrix(X, manhattan(), max_n=10)
    with pytest.raises(ConfigError):
        CohesionModel("avg_dissimilarity", "p_th_root", 0.9)


def test_dissim_matrix_file_roundtrip(tmp_path):
    D = pairwise_matrix(Dataset(np.random.default_rng(1).normal(size=(7, 2))), manhattan())
    D.save(tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    assert len(raw) == 8 + 8 * 49 and int.from_bytes(raw[:8], "little") == 7
    back = DissimMatrix.load(tmp_path / "d.bin", p=1.0, gamma="p_th_root")
    assert np.array_equal(back.values, D.values)
    (tmp_path / "bad.bin").write_bytes(raw[:-8])
    with pytest.raises(InvariantError):
        DissimMatrix.load(tmp_path / "bad.bin")


def test_avg_dissimilarity_examples():
    D = np.array([[0, 2, 2, 9], [2, 0, 5, 1], [2, 5, 0, 3], [9, 1, 3, 0]], float)
    part = Partition([0, 1, 1, 2])
    cache = ClusterCache(D, part.labels, 3)
    assert avg_dissimilarity(0, 0, cache, part) == 0.0
    assert avg_dissimilarity(0, 1, cache) == 2.0  # equal dissimilarity to every member
    assert avg_dissimilarity(3, 1, cache) == pytest.approx(2.0)
    with pytest.raises(InvariantError):
        avg_dissimilarity(0, 0, cache, Partition([0, 0, 1, 2]))


def test_reallocation_delta_examples():
    D = np.array([[0, 4, 7], [4, 0, 1], [7, 1, 0]], float)
    cache = ClusterCache(D, [0, 1, 1], 2)
    # point 1 joins the singleton {0} at dissimilarity 4
    moved = ClusterCache(D, [0, 0, 1], 2)
    assert reallocation_delta(1, 0, cache) == pytest.approx(4.0)
    assert moved.T[0] == pytest.approx(4.0)
    dup = np.array([[0, 0, 3], [0, 0, 3], [3, 3, 0]], float)
    assert reallocation_delta(0, 0, ClusterCache(dup, [0, 0, 1], 2)) == pytest.approx(0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1_000_000))
def test_reallocation_delta_matches_recomputation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 26))
    K = int(rng.integers(1, min(n, 5) + 1))
    model = [manhattan(), pairwise_sq_euclidean(), EUCLID][seed % 3]
    D = pairwise_matrix(Dataset(rng.normal(size=(n, 2))), model).values
    lab = random_labels(n, K, rng)
    cache = ClusterCache(D, lab, K)
    for i in range(n):
        for k in range(K):
            members = np.flatnonzero(lab == k)
            with_i = np.union1d(members, [i])
            without_i = np.setdiff1d(members, [i])
            want = block_total(D, with_i) - block_total(D, without_i)
            got = reallocation_delta(i, k, cache)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9 * (1 + abs(want)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1_000_000))
def test_cache_stays_consistent_after_moves(seed):
    rng = np.random.default_rng(seed)
    n, K = int(rng.integers(4, 20)), int(rng.integers(2, 4))
    D = pairwise_matrix(Dataset(rng.normal(size=(n, 2))), manhattan()).values
    cache = ClusterCache(D, random_labels(n, K, rng), K)
    for _ in range(30):
        i = int(rng.integers(n))
        if cache.counts[cache.labels[i]] == 1:
            with pytest.raises(InvariantError):
                cache.move(i, (cache.labels[i] + 1) % K)
            continue
        cache.move(i, int(rng.integers(K)))
        cache.check()
        assert cache.loss == pytest.approx(avg_dissim_loss(D, cache.labels), rel=1e-9)


def test_check_detects_corruption():
    D = pairwise_matrix(Dataset(np.random.default_rng(0).normal(size=(6, 2))), manhattan()).values
    cache = ClusterCache(D, [0, 0, 0, 1, 1, 1], 2)
    cache.T[0] += 1.0
    with pytest.raises(InvariantError):
        cache.check()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000), st.sampled_from(["kmeans++", "random"]))
def test_k_dissimilarities_monotone_and_terminates(seed, init):
    rng = np.random.default_rng(seed)
    n, K = int(rng.integers(5, 40)), int(rng.integers(2, 6))
    ds = Dataset(rng.normal(size=(n, 2)))
    part, trace = k_dissimilarities(ds, manhattan(), K, init=InitSpec(init), max_sweeps=10 * n, rng=rng)
    assert part.K == K
    assert np.all(np.diff(trace) <= 1e-10)
    assert len(trace) < 10 * n + 1
    assert trace[-1] == pytest.approx(loss(part, ds, manhattan()), rel=1e-10)


def test_k_equals_n_and_errors():
    ds = Dataset(np.random.default_rng(0).normal(size=(5, 2)))
    part, trace = k_dissimilarities(ds, manhattan(), 5, rng=np.random.default_rng(0))
    assert part.K == 5 and trace[-1] == 0.0
    with pytest.raises(DegenerateDataError):
        k_dissimilarities(Dataset(np.ones((4, 2))), manhattan(), 2)
    with pytest.raises(InvariantError):
        k_dissimilarities(ds, manhattan(), 6)
    with pytest.raises(DomainError):
        k_dissimilarities(ds, SQ_EUCLIDEAN_MODEL, 2)


def test_pairwise_squared_optimum_equals_kmeans_optimum():
    rng = np.random.default_rng(5)
    for _ in range(4):
        X = rng.normal(size=(8, 2)) + np.repeat([[0, 0], [6, 0]], 4, axis=0)
        ds = Dataset(X)
        parts = enumerate_partitions(8, 2)
        sq = [loss(p, ds, SQ_EUCLIDEAN_MODEL) for p in parts]
        pw = [0.5 * loss(p, ds, pairwise_sq_euclidean()) for p in parts]
        assert parts[int(np.argmin(sq))] == parts[int(np.argmin(pw))]
        start = InitSpec("labels", tuple(random_labels(8, 2, rng)))
        a, _ = k_dissimilarities(ds, pairwise_sq_euclidean(), 2, init=start)
        b, _ = bregman_kmeans(ds, SQ_EUCLIDEAN_MODEL, 2, init=start)
        assert loss(a, ds, SQ_EUCLIDEAN_MODEL) == pytest.approx(min(sq))
        assert loss(b, ds, SQ_EUCLIDEAN_MODEL) == pytest.approx(min(sq))


def test_row_permutation_equivariance():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(20, 2))
    perm = rng.permutation(20)
    start = random_labels(20, 3, rng)
    a, _ = k_dissimilarities(Dataset(X), manhattan(), 3, init=InitSpec("labels", tuple(start)))
    b, _ = k_dissimilarities(Dataset(X[perm]), manhattan(), 3, init=InitSpec("labels", tuple(start[perm])))
    back = np.empty(20, dtype=int)
    back[perm] = b.labels
    assert Partition(back) == a


def test_manhattan_recovers_heavy_tailed_blobs_better_than_squared():
    spec = MixtureSpec("student_t", sigma2=1.0, df=2.0)
    wins = 0
    for seed in range(50):
        data, truth = gen_mixture(spec, seed=1000 + seed)
        vi = {}
        for name, model in (("l1", manhattan()), ("l2", pairwise_sq_euclidean())):
            D = pairwise_matrix(data, model)
            best = min((k_dissimilarities(data, model, 4, rng=np.random.default_rng(r), dmat=D) for r in range(5)),
                       key=lambda t: t[1][-1])
            vi[name] = vi_distance(best[0], truth)
        wins += vi["l1"] < vi["l2"]
    assert wins >= 40
