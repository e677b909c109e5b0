"""Average-dissimilarity cohesions and the k-dissimilarities MAP search."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import (
    AVG_DISSIMILARITY,
    CohesionModel,
    ConfigError,
    Dataset,
    DegenerateDataError,
    DomainError,
    InitSpec,
    InvariantError,
    Partition,
    ResourceError,
    random_labels,
)

MAX_N = 20_000


@dataclass(frozen=True, eq=False)
class DissimMatrix:
    """Symmetric matrix of ``gamma(||x_i - x_j||_p^p)`` with zero diagonal."""

    values: np.ndarray
    p: float = 2.0
    gamma: str = "identity"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        """Write ``n`` as a little-endian uint64 followed by row-major float64 entries."""
        with Path(path).open("wb") as fh:
            fh.write(struct.pack("<Q", self.n))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, p: float = 2.0, gamma: str = "identity") -> "DissimMatrix":
        raw = Path(path).read_bytes()
        if len(raw) < 8:
            raise InvariantError("truncated dissimilarity file")
        (n,) = struct.unpack("<Q", raw[:8])
        if len(raw) != 8 + 8 * n * n:
            raise InvariantError(f"dissimilarity file size does not match n={n}")
        vals = np.frombuffer(raw, dtype="<f8", offset=8).reshape(n, n).astype(np.float64)
        return cls(vals, p, gamma)


def pairwise_matrix(data: Dataset, model: CohesionModel, max_n: int = MAX_N) -> DissimMatrix:
    if model.kind != AVG_DISSIMILARITY:
        raise ConfigError("pairwise_matrix needs an avg_dissimilarity model")
    if data.n > max_n:
        raise ResourceError(f"n={data.n} exceeds the dissimilarity matrix cap {max_n}")
    X = data.values
    D = np.empty((data.n, data.n))
    step = max(1, 2**22 // max(1, data.n * data.d))
    for lo in range(0, data.n, step):
        D[lo:lo + step] = model.dissimilarity(X[lo:lo + step], X)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return DissimMatrix(D, model.p, model.gamma)


class ClusterCache:
    """Point-to-block sums ``R[i, k]`` and block totals ``T[k]`` for a partition.

    ``T[k]`` is the sum over block ``k`` of every member's average
    dissimilarity to the block, i.e. ``sum_{i in C_k} R[i, k] / n_k``.
    """

    def __init__(self, D: np.ndarray, labels, K: int):
        self.D = np.ascontiguousarray(D, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64).copy()
        self.K = K
        self.refresh()

    def refresh(self) -> None:
        onehot = np.zeros((self.labels.size, self.K))
        onehot[np.arange(self.labels.size), self.labels] = 1.0
        self.counts = np.bincount(self.labels, minlength=self.K).astype(np.int64)
        if np.any(self.counts == 0):
            raise InvariantError("empty block")
        self.R = self.D @ onehot
        self.T = (onehot * self.R).sum(axis=0) / self.counts

    @property
    def loss(self) -> float:
        return float(self.T.sum())

    def check(self, rtol: float = 1e-9) -> None:
        onehot = np.zeros((self.labels.size, self.K))
        onehot[np.arange(self.labels.size), self.labels] = 1.0
        expect = (onehot * self.R).sum(axis=0) / self.counts
        if not np.allclose(self.T, expect, rtol=rtol, atol=rtol * (1 + np.abs(expect).max())):
            raise InvariantError("cluster cache totals are inconsistent with R")

    def deltas(self, i: int) -> np.ndarray:
        out = np.empty(self.K)
        _kernels.dissim_deltas(i, self.labels[i], self.counts, self.R, self.T, out)
        return out

    def move(self, i: int, k: int) -> None:
        a = self.labels[i]
        if a == k:
            return
        if self.counts[a] == 1:
            raise InvariantError("moving a block's sole member would empty it")
        delta = self.deltas(i)
        _kernels.apply_move(_kernels.DISSIM, i, a, k, np.empty((0, 0)), self.D, self.labels,
                            self.counts, np.empty((0, 0)), self.R, self.T, delta)


def avg_dissimilarity(i: int, k: int, cache: ClusterCache, partition: Partition | None = None) -> float:
    """Mean dissimilarity of point ``i`` to the members of block ``k``."""
    if partition is not None and not np.array_equal(Partition(cache.labels).labels, partition.labels):
        raise InvariantError("cache does not describe the given partition")
    return float(cache.R[i, k] / cache.counts[k])


def reallocation_delta(i: int, k: int, cache: ClusterCache) -> float:
    """Change in block ``k``'s total between containing and not containing ``i``."""
    if cache.labels[i] == k and cache.counts[k] == 1:
        return float(cache.T[k])
    return float(cache.deltas(i)[k])


def _medoid_seeds(D: np.ndarray, K: int, rng: np.random.Generator) -> list[int]:
    n = D.shape[0]
    chosen = [int(rng.integers(n))]
    best = D[chosen[0]].copy()
    for _ in range(1, K):
        w = best.copy()
        w[chosen] = 0.0
        if w.sum() <= 0:
            nxt = int(rng.choice(np.setdiff1d(np.arange(n), chosen)))
        else:
            nxt = int(rng.choice(n, p=w / w.sum()))
        chosen.append(nxt)
        best = np.minimum(best, D[nxt])
    return chosen


def initial_labels(D: np.ndarray, K: int, init: InitSpec, rng: np.random.Generator) -> np.ndarray:
    n = D.shape[0]
    if init.kind == "labels":
        return Partition(init.labels, K).labels.copy()
    if init.kind == "random":
        return random_labels(n, K, rng)
    seeds = _medoid_seeds(D, K, rng)
    labels = np.argmin(D[:, seeds], axis=1)
    labels[seeds] = np.arange(K)
    return labels


def k_dissimilarities(data: Dataset | None, model: CohesionModel, K: int, init: InitSpec | None = None,
                      max_sweeps: int = 300, rng: np.random.Generator | None = None,
                      dmat: DissimMatrix | None = None):
    """Greedy sweeps reallocating each point to the block with the smallest delta.

    Points that are their block's only member stay put, so exactly ``K``
    blocks survive.  Stops after a sweep that moves nothing.

    Returns
    -------
    (Partition, list of float)
        Final partition and the loss before the first and after every sweep.
    """
    if model.kind != AVG_DISSIMILARITY:
        raise DomainError(f"{model.kind} is not an average-dissimilarity cohesion")
    if dmat is None:
        dmat = pairwise_matrix(data, model)
    D = dmat.values
    n = D.shape[0]
    if K > n:
        raise InvariantError(f"cannot split {n} points into {K} blocks")
    if K > 1 and data is not None and np.unique(data.values, axis=0).shape[0] < K:
        raise DegenerateDataError(f"fewer than {K} distinct rows")
    init = init or InitSpec()
    rng = rng if rng is not None else np.random.default_rng()

    cache = ClusterCache(D, initial_labels(D, K, init, rng), K)
    trace = [cache.loss]
    dummy = np.empty((0, 0))
    for _ in range(max_sweeps):
        _, moved = _kernels.greedy_sweep(_kernels.DISSIM, dummy, cache.D, cache.labels, cache.counts,
                                         dummy, cache.R, cache.T)
        cache.refresh()
        trace.append(cache.loss)
        if moved == 0:
            break
    return Partition(cache.labels, K), trace
