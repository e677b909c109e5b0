"""Synthetic mixtures and their exact (oracle) co-clustering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .core import Dataset, Partition
from .uq import CoClusteringMatrix

DEFAULT_CENTERS = ((-2.0, -2.0), (-2.0, 2.0), (2.0, -2.0), (2.0, 2.0))


@dataclass(frozen=True)
class MixtureSpec:
    """Equal-scale spherical mixture: Gaussian or multivariate Student t."""

    kind: str = "gaussian"
    centers: tuple = DEFAULT_CENTERS
    sigma2: float = 1.5
    sizes: tuple = (50, 50, 50, 50)
    df: float = 2.0

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if self.kind not in ("gaussian", "student_t"):
            raise ValueError(f"unknown mixture kind {self.kind!r}")
        if c.ndim != 2 or c.shape[0] != len(self.sizes):
            raise ValueError("need one center row per block size")
        if any(s < 1 for s in self.sizes):
            raise ValueError("block sizes must be positive")
        if self.sigma2 < 0 or (self.kind == "student_t" and not self.df > 0):
            raise ValueError("sigma2 must be >= 0 and df > 0")

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=float)


def gen_mixture(spec: MixtureSpec, seed: int = 0) -> tuple[Dataset, Partition]:
    """Draw ``sizes[k]`` points around each center; labels follow block order.

    Student t draws use the Gaussian / chi-square scale mixture.
    """
    rng = np.random.default_rng(seed)
    mu = spec.center_array
    labels = np.repeat(np.arange(len(spec.sizes)), spec.sizes)
    z = rng.standard_normal((labels.size, mu.shape[1]))
    if spec.kind == "student_t":
        w = rng.chisquare(spec.df, size=labels.size) / spec.df
        z = z / np.sqrt(w)[:, None]
    X = mu[labels] + np.sqrt(spec.sigma2) * z
    return Dataset(X), Partition(labels)


def oracle_allocation(data: Dataset, spec: MixtureSpec) -> np.ndarray:
    """``n x K`` exact allocation probabilities under the generating mixture (equal weights)."""
    mu = spec.center_array
    r2 = ((data.values[:, None, :] - mu[None, :, :]) ** 2).sum(axis=-1)
    if spec.sigma2 == 0:
        P = np.zeros_like(r2)
        P[np.arange(r2.shape[0]), np.argmin(r2, axis=1)] = 1.0
        return P
    if spec.kind == "gaussian":
        logd = -r2 / (2 * spec.sigma2)
    else:
        logd = -0.5 * (spec.df + data.d) * np.log1p(r2 / (spec.df * spec.sigma2))
    return softmax(logd, axis=1)


def oracle_coclustering(data: Dataset, spec: MixtureSpec) -> CoClusteringMatrix:
    """Closed-form oracle co-clustering ``s_ij = sum_k p_ik p_jk`` with unit diagonal."""
    P = oracle_allocation(data, spec)
    S = P @ P.T
    np.fill_diagonal(S, 1.0)
    return CoClusteringMatrix(np.clip(S, 0.0, 1.0), 0)


def oracle_misclassification(data: Dataset, spec: MixtureSpec) -> np.ndarray:
    """Probability that each point is not in its most probable oracle component."""
    return 1.0 - oracle_allocation(data, spec).max(axis=1)


def mean_abs_deviation(S1, S2) -> float:
    """Average ``|s - s'|`` over the strict upper triangle."""
    a = getattr(S1, "values", S1)
    b = getattr(S2, "values", S2)
    iu = np.triu_indices(a.shape[0], k=1)
    return float(np.abs(a[iu] - b[iu]).mean())
