"""Bregman-divergence cohesions and the (adjusted) Bregman k-means MAP search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .core import (
    BERNOULLI_KL,
    BINARY,
    SQ_EUCLIDEAN,
    CohesionModel,
    Dataset,
    DegenerateDataError,
    DomainError,
    InitSpec,
    InvariantError,
    Partition,
    loss,
    random_labels,
)


@dataclass(frozen=True, eq=False)
class Centroids:
    means: np.ndarray
    adjusted: bool = False


def bregman_divergence(model: CohesionModel, x, mu) -> float:
    """``phi(x) - phi(mu) - <x - mu, grad phi(mu)>`` for the model's ``phi``.

    For the Bernoulli KL kind this is the coordinatewise sum of
    ``KL((x, 1-x) || (mu, 1-mu))`` with ``0 log 0 = 0``; ``mu`` must lie
    strictly inside the unit cube.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if x.shape != mu.shape:
        raise DomainError(f"shape mismatch {x.shape} vs {mu.shape}")
    if model.kind == SQ_EUCLIDEAN:
        return float(((x - mu) ** 2).sum())
    if model.kind == BERNOULLI_KL:
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise DomainError("Bernoulli KL divergence needs every centroid coordinate in (0, 1)")
        if np.any(x < 0) or np.any(x > 1):
            raise DomainError("Bernoulli KL divergence needs x in [0, 1]")
        return float((rel_entr(x, mu) + rel_entr(1 - x, 1 - mu)).sum())
    raise DomainError(f"{model.kind} is not a Bregman cohesion")


def divergence_matrix(model: CohesionModel, X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``n x K`` matrix of divergences from every row of ``X`` to every centroid."""
    if model.kind == SQ_EUCLIDEAN:
        return ((X[:, None, :] - M[None, :, :]) ** 2).sum(axis=-1)
    if np.any(M <= 0) or np.any(M >= 1):
        raise DomainError("Bernoulli KL divergence needs every centroid coordinate in (0, 1)")
    # binary rows: KL reduces to a cross-entropy, the entropy of x being zero
    return -(X @ np.log(M).T + (1 - X) @ np.log1p(-M).T)


def _block_stats(X: np.ndarray, labels: np.ndarray, K: int):
    counts = np.bincount(labels, minlength=K).astype(float)
    sums = np.zeros((K, X.shape[1]))
    np.add.at(sums, labels, X)
    if np.any(counts == 0):
        raise InvariantError("empty block")
    return counts, sums


def plain_centroids(data: Dataset, partition: Partition) -> Centroids:
    counts, sums = _block_stats(data.values, partition.labels, partition.K)
    return Centroids(sums / counts[:, None], adjusted=False)


def _adjust(mean: np.ndarray, counts: np.ndarray) -> np.ndarray:
    w = counts[:, None]
    return w / (w + 1) * mean + 0.5 / (w + 1)


def adjusted_centroids(data: Dataset, partition: Partition) -> Centroids:
    """Firth-adjusted block proportions ``n/(n+1) * mean + 1/(2(n+1))``."""
    if data.domain != BINARY:
        raise DomainError("adjusted centroids are defined for binary data only")
    counts, sums = _block_stats(data.values, partition.labels, partition.K)
    return Centroids(_adjust(sums / counts[:, None], counts), adjusted=True)


def _centroids(model: CohesionModel, X: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    counts, sums = _block_stats(X, labels, K)
    mean = sums / counts[:, None]
    return _adjust(mean, counts) if model.kind == BERNOULLI_KL else mean


def _seed_centroid(model: CohesionModel, x: np.ndarray) -> np.ndarray:
    # a singleton block's centroid; the adjusted one keeps KL seeding finite
    return 0.5 * x + 0.25 if model.kind == BERNOULLI_KL else x.copy()


def kmeanspp_seeds(model: CohesionModel, X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with the model's divergence in place of squared distance."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    M = _seed_centroid(model, X[chosen[0]])[None, :]
    best = divergence_matrix(model, X, M)[:, 0]
    for _ in range(1, K):
        w = best.copy()
        w[chosen] = 0.0
        if w.sum() <= 0:
            pool = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(pool))
        else:
            nxt = int(rng.choice(n, p=w / w.sum()))
        chosen.append(nxt)
        m = _seed_centroid(model, X[nxt])
        M = np.vstack([M, m])
        best = np.minimum(best, divergence_matrix(model, X, m[None, :])[:, 0])
    return M


def _repair(model, X, labels, M, K):
    """Refill emptied blocks with the worst-fitting point of a multi-point block."""
    counts = np.bincount(labels, minlength=K)
    for k in np.flatnonzero(counts == 0):
        div = divergence_matrix(model, X, M)[np.arange(X.shape[0]), labels]
        div[counts[labels] <= 1] = -np.inf
        i = int(np.argmax(div))
        if not div[i] > 0:
            raise DegenerateDataError("cannot refill an empty block: every point sits on its centroid")
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] = 1
        M = M.copy()
        M[k] = _seed_centroid(model, X[i])
    return labels


def _check_degenerate(X: np.ndarray, K: int) -> None:
    if K > X.shape[0]:
        raise InvariantError(f"cannot split {X.shape[0]} points into {K} blocks")
    if K > 1 and np.unique(X, axis=0).shape[0] < K:
        raise DegenerateDataError(f"fewer than {K} distinct rows")


def bregman_kmeans(data: Dataset, model: CohesionModel, K: int, init: InitSpec | None = None,
                   max_iter: int = 300, rng: np.random.Generator | None = None):
    """Lloyd-style alternation between nearest-centroid assignment and centroid updates.

    The Bernoulli KL kind recomputes Firth-adjusted centroids, so no
    divergence is ever evaluated at a boundary centroid.  Stops when a full
    assignment pass leaves every label unchanged.

    Returns
    -------
    (Partition, list of float)
        The final partition and the loss after every completed iteration.
    """
    if not model.is_bregman:
        raise DomainError(f"{model.kind} is not a Bregman cohesion")
    model.check_compatible(data)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    init = init or InitSpec()
    rng = rng if rng is not None else np.random.default_rng()
    X = data.values
    _check_degenerate(X, K)

    trace = []
    if init.kind == "kmeans++":
        labels = None
        M = kmeanspp_seeds(model, X, K, rng)
    else:
        if init.kind == "random":
            labels = random_labels(data.n, K, rng)
        else:
            labels = Partition(init.labels, K).labels.copy()
        M = _centroids(model, X, labels, K)
        trace.append(loss(Partition(labels), data, model))

    for _ in range(max_iter):
        new = np.argmin(divergence_matrix(model, X, M), axis=1)
        new = _repair(model, X, new, M, K)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        M = _centroids(model, X, labels, K)
        trace.append(loss(Partition(labels), data, model))
    return Partition(labels, K), trace
