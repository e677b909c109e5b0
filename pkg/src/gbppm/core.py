"""Shared domain types, loss evaluation and exact enumeration.

A generalized Bayes product partition model puts mass
``exp(-lambda * scale * loss(c))`` on every partition ``c`` of the rows of a
dataset into exactly ``K`` nonempty blocks.  ``loss`` factorizes over blocks
as a sum of per-point discrepancies to the point's own block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp, rel_entr

CONTINUOUS = "continuous"
BINARY = "binary"

SQ_EUCLIDEAN = "bregman_sq_euclidean"
BERNOULLI_KL = "bregman_bernoulli_kl"
AVG_DISSIMILARITY = "avg_dissimilarity"

GAMMA_IDENTITY = "identity"
GAMMA_PTH_ROOT = "p_th_root"

ENUMERATION_CAP = 10**6
_INT64_MAX = 2**63 - 1


class GBPPMError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GBPPMError, ValueError):
    """Data or parameters fall outside the domain a model is defined on."""


class InvariantError(GBPPMError):
    """An internal or structural invariant does not hold."""


class ResourceError(GBPPMError):
    """A requested computation exceeds a configured size cap."""


class ConfigError(GBPPMError, ValueError):
    """Inconsistent sampler or algorithm configuration."""


class DegenerateDataError(GBPPMError):
    """No partition with K nonempty blocks can be produced from the data."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense ``n x d`` matrix of reals tagged with its domain."""

    values: np.ndarray
    domain: str = CONTINUOUS

    def __post_init__(self):
        x = np.asarray(self.values, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DomainError(f"expected a non-empty n x d matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("dataset contains non-finite entries")
        if self.domain not in (CONTINUOUS, BINARY):
            raise DomainError(f"unknown domain tag {self.domain!r}")
        if self.domain == BINARY and not np.all((x == 0) | (x == 1)):
            raise DomainError("binary dataset has entries outside {0, 1}")
        object.__setattr__(self, "values", _readonly(x))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_csv(cls, path, domain: str = CONTINUOUS) -> "Dataset":
        """Read a headerless or single-header CSV of reals."""
        path = Path(path)
        with path.open() as fh:
            first = fh.readline()
        skip = 0
        try:
            [float(tok) for tok in first.strip().split(",") if tok.strip()]
        except ValueError:
            skip = 1
        try:
            values = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
        except ValueError as exc:
            raise DomainError(f"{path}: {exc}") from None
        return cls(values, domain)

    def to_csv(self, path, header: Sequence[str] | None = None) -> None:
        kw = {"header": ",".join(header), "comments": ""} if header else {}
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g", **kw)


def _canonical(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.ravel()]


class Partition:
    """A set partition of ``{0, ..., n-1}`` stored as canonical labels.

    Labels are renumbered ``0..K-1`` in order of first occurrence, so two
    labelings inducing the same set partition compare (and hash) equal.
    """

    __slots__ = ("_labels", "_sizes", "_key")

    def __init__(self, labels, K: int | None = None):
        raw = np.asarray(labels)
        if raw.ndim != 1 or raw.size == 0:
            raise InvariantError("labels must be a non-empty 1-d sequence")
        if not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise InvariantError("labels must be integers")
            raw = raw.astype(np.int64)
        canon = _canonical(raw)
        sizes = np.bincount(canon)
        if K is not None and sizes.size != K:
            raise InvariantError(f"partition has {sizes.size} nonempty blocks, expected {K}")
        self._labels = _readonly(canon)
        self._sizes = _readonly(sizes)
        self._key = canon.tobytes()

    @property
    def labels(self) -> np.ndarray:
        """Canonical 0-based labels."""
        return self._labels

    @property
    def K(self) -> int:
        return self._sizes.size

    @property
    def n(self) -> int:
        return self._labels.size

    @property
    def block_sizes(self) -> np.ndarray:
        return self._sizes

    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self._labels, kind="stable")
        return np.split(order, np.cumsum(self._sizes)[:-1])

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Partition({(self._labels + 1).tolist()})"

    def __str__(self):
        sep = "" if self.n < 10 else ","
        return "|".join(sep.join(str(i + 1) for i in b) for b in self.blocks())

    def to_json(self) -> str:
        return json.dumps((self._labels + 1).tolist())

    @classmethod
    def from_json(cls, text: str, K: int | None = None) -> "Partition":
        labels = json.loads(text)
        if not isinstance(labels, list) or not labels or min(labels) < 1:
            raise InvariantError("expected a JSON array of 1-based integer labels")
        return cls(labels, K)


@dataclass(frozen=True)
class CohesionModel:
    """Discrepancy family used to score a point against its block.

    ``gamma`` and ``p`` only matter for ``avg_dissimilarity``: the pairwise
    dissimilarity is ``gamma(||x - y||_p^p)`` with ``gamma`` either the
    identity or the p-th root (Minkowski distance).
    """

    kind: str
    gamma: str = GAMMA_IDENTITY
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in (SQ_EUCLIDEAN, BERNOULLI_KL, AVG_DISSIMILARITY):
            raise ConfigError(f"unknown cohesion kind {self.kind!r}")
        if self.kind == AVG_DISSIMILARITY:
            if self.gamma not in (GAMMA_IDENTITY, GAMMA_PTH_ROOT):
                raise ConfigError(f"unsupported gamma {self.gamma!r}")
            if not self.p >= 1:
                raise ConfigError(f"p must be >= 1, got {self.p}")

    @property
    def is_bregman(self) -> bool:
        return self.kind != AVG_DISSIMILARITY

    @property
    def energy_scale(self) -> float:
        """Factor multiplying ``lambda * loss`` in the log posterior.

        Average-dissimilarity cohesions carry a 1/2 so that ``gamma=identity,
        p=2`` gives the same posterior as the squared Euclidean model.
        """
        return 0.5 if self.kind == AVG_DISSIMILARITY else 1.0

    def check_compatible(self, data: Dataset) -> None:
        if self.kind == BERNOULLI_KL and data.domain != BINARY:
            raise DomainError("bernoulli KL cohesion requires a binary dataset")

    def dissimilarity(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix of ``gamma(||a_i - b_j||_p^p)`` for row sets ``a`` and ``b``."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        diff = np.abs(a[:, None, :] - b[None, :, :])
        if self.p == 2.0:
            powsum = np.einsum("ijk,ijk->ij", diff, diff)
        elif self.p == 1.0:
            powsum = diff.sum(axis=-1)
        else:
            powsum = (diff ** self.p).sum(axis=-1)
        if self.gamma == GAMMA_PTH_ROOT:
            if self.p == 1.0:
                return powsum
            return powsum ** (1.0 / self.p)
        return powsum

    def block_loss(self, block: np.ndarray) -> float:
        """Sum of discrepancies of every row of ``block`` to the block itself."""
        m = block.shape[0]
        if m == 0:
            raise InvariantError("empty block")
        if self.kind == SQ_EUCLIDEAN:
            return float(((block - block.mean(axis=0)) ** 2).sum())
        if self.kind == BERNOULLI_KL:
            xt = m / (m + 1) * block.mean(axis=0) + 0.5 / (m + 1)
            return float((rel_entr(block, xt) + rel_entr(1 - block, 1 - xt)).sum())
        return float(self.dissimilarity(block, block).sum() / m)


SQ_EUCLIDEAN_MODEL = CohesionModel(SQ_EUCLIDEAN)
BERNOULLI_KL_MODEL = CohesionModel(BERNOULLI_KL)


def manhattan() -> CohesionModel:
    return CohesionModel(AVG_DISSIMILARITY, GAMMA_PTH_ROOT, 1.0)


def minkowski(p: float) -> CohesionModel:
    return CohesionModel(AVG_DISSIMILARITY, GAMMA_PTH_ROOT, float(p))


def pairwise_sq_euclidean() -> CohesionModel:
    return CohesionModel(AVG_DISSIMILARITY, GAMMA_IDENTITY, 2.0)


def _check(partition: Partition, data: Dataset, model: CohesionModel) -> None:
    model.check_compatible(data)
    if partition.n != data.n:
        raise InvariantError(f"partition covers {partition.n} points, dataset has {data.n}")
    if np.any(partition.block_sizes == 0):
        raise InvariantError("partition has an empty block")


def block_losses(partition: Partition, data: Dataset, model: CohesionModel) -> np.ndarray:
    _check(partition, data, model)
    return np.array([model.block_loss(data.values[idx]) for idx in partition.blocks()])


def loss(partition: Partition, data: Dataset, model: CohesionModel) -> float:
    """Factorized clustering loss, summed over blocks."""
    return float(block_losses(partition, data, model).sum())


def log_posterior_unnormalized(partition: Partition, lam: float, data: Dataset,
                               model: CohesionModel) -> float:
    """``-lambda * scale * loss``; the uniform prior constant is dropped."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return -lam * model.energy_scale * loss(partition, data, model)


def stirling2(n: int, K: int) -> int:
    """Stirling number of the second kind, exact; int64 range enforced."""
    if K < 1 or K > n:
        raise ValueError(f"need 1 <= K <= n, got n={n}, K={K}")
    row = [1] + [0] * K
    for m in range(1, n + 1):
        for k in range(min(m, K), 0, -1):
            row[k] = k * row[k] + row[k - 1]
        row[0] = 0
    if row[K] > _INT64_MAX:
        raise OverflowError(f"S({n}, {K}) exceeds the 64-bit integer range")
    return row[K]


def _restricted_growth(n: int, K: int) -> Iterator[list[int]]:
    labels = [0] * n

    def rec(i: int, used: int):
        if n - i < K - used:
            return
        if i == n:
            yield list(labels)
            return
        for lab in range(min(used + 1, K)):
            labels[i] = lab
            yield from rec(i + 1, max(used, lab + 1))

    yield from rec(1, 1)


def enumerate_partitions(n: int, K: int, cap: int = ENUMERATION_CAP) -> list[Partition]:
    """Every partition of ``n`` items into ``K`` nonempty blocks, once each.

    Order is lexicographic in the canonical label vector, so the block
    holding item 0 always comes first.
    """
    try:
        count = stirling2(n, K)
    except OverflowError:
        raise ResourceError(f"S({n}, {K}) exceeds the enumeration cap") from None
    if count > cap:
        raise ResourceError(f"S({n}, {K}) = {count} exceeds the enumeration cap {cap}")
    return [Partition(lab) for lab in _restricted_growth(n, K)]


def exact_posterior(data: Dataset, model: CohesionModel, K: int, lam: float,
                    cap: int = ENUMERATION_CAP) -> tuple[list[Partition], np.ndarray]:
    """Brute-force posterior over all K-block partitions (small n only)."""
    parts = enumerate_partitions(data.n, K, cap)
    logp = np.array([log_posterior_unnormalized(c, lam, data, model) for c in parts])
    return parts, np.exp(logp - logsumexp(logp))


@dataclass(frozen=True)
class InitSpec:
    """How a MAP search picks its starting point.

    ``kind`` is ``"kmeans++"`` (divergence-weighted seeding), ``"random"``
    (uniform labels) or ``"labels"`` (explicit ``labels``).
    """

    kind: str = "kmeans++"
    labels: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("kmeans++", "random", "labels"):
            raise ConfigError(f"unknown init kind {self.kind!r}")
        if self.kind == "labels" and self.labels is None:
            raise ConfigError("explicit init requires labels")

    @classmethod
    def from_partition(cls, partition: Partition) -> "InitSpec":
        return cls("labels", tuple(partition.labels.tolist()))


def random_labels(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform labels conditioned on all K blocks being nonempty."""
    if K > n:
        raise InvariantError(f"cannot split {n} points into {K} blocks")
    labels = rng.integers(K, size=n)
    perm = rng.permutation(n)
    labels[perm[:K]] = np.arange(K)
    return labels


@dataclass(frozen=True)
class GibbsConfig:
    """Sampler settings.

    ``lambda_mode`` is ``"fixed"`` (use ``lam``) or ``"hierarchical"`` with a
    Gamma(``a_lambda``, ``b_lambda``) prior (shape, rate) and power ``xi`` on
    lambda; ``xi=None`` picks the model default.  ``lambda_tilde`` tempers the
    whole joint loss.
    """

    lambda_mode: str = "fixed"
    lam: float = 1.0
    a_lambda: float = 1.0
    b_lambda: float = 0.0
    xi: float | None = None
    lambda_tilde: float = 1.0
    n_iterations: int = 6000
    n_burnin: int = 1000
    thin: int = 1
    rng_seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lambda_mode not in ("fixed", "hierarchical"):
            raise ConfigError(f"unknown lambda mode {self.lambda_mode!r}")
        if not 0 < self.lambda_tilde <= 1e300:
            raise ConfigError("lambda_tilde must be positive")
        if self.lambda_mode == "fixed" and not self.lam > 0:
            raise ConfigError("fixed lambda must be positive")
        if self.lambda_mode == "hierarchical":
            if self.a_lambda < 0 or self.b_lambda < 0:
                raise ConfigError("Gamma prior parameters must be non-negative")
            if self.xi is not None and self.xi < 0:
                raise ConfigError("xi must be non-negative")
            if self.a_lambda == 0 and self.b_lambda == 0 and self.xi == 0:
                raise ConfigError("improper lambda prior with xi = 0")
        if self.n_iterations < 0 or not 0 <= self.n_burnin or self.thin < 1:
            raise ConfigError("iteration counts must be non-negative and thin >= 1")


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for an independent, reproducible sub-stream."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


__all__ = [
    "Dataset", "Partition", "CohesionModel", "GibbsConfig", "InitSpec", "random_labels",
    "loss", "block_losses", "log_posterior_unnormalized", "stirling2",
    "enumerate_partitions", "exact_posterior", "rng_stream",
    "manhattan", "minkowski", "pairwise_sq_euclidean",
    "SQ_EUCLIDEAN_MODEL", "BERNOULLI_KL_MODEL",
    "GBPPMError", "DomainError", "InvariantError", "ResourceError", "ConfigError",
    "DegenerateDataError",
]
