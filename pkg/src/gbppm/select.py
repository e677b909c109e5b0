"""Exploratory choice of the number of clusters."""

from __future__ import annotations

import numpy as np

from .core import CohesionModel, Dataset, InitSpec, Partition, loss
from .dissim import DissimMatrix
from .fit import fit_map


def _split_largest(partition: Partition, data: Dataset, model: CohesionModel) -> np.ndarray:
    """Labels for K+1 blocks: peel the worst-fitting point off the block with the largest loss."""
    from .uq import _point_discrepancies

    disc = _point_discrepancies(partition, data, model)
    labels = partition.labels.copy()
    sizes = partition.block_sizes
    cand = np.flatnonzero(sizes[labels] > 1)
    i = cand[np.argmax(disc[cand])]
    labels[i] = partition.K
    return labels


def elbow_curve(data: Dataset, model: CohesionModel, K_range, restarts: int = 10, seed: int = 0,
                nested: bool = False, dmat: DissimMatrix | None = None) -> list[tuple[int, float]]:
    """Minimized loss per K.

    With ``nested`` the search for K+1 also starts from the K solution with
    one block split, which makes the curve non-increasing by construction.
    """
    out = []
    prev = None
    for K in sorted(K_range):
        if not 1 <= K <= data.n:
            raise ValueError(f"K={K} outside [1, {data.n}]")
        fit = fit_map(data, model, K, restarts=restarts, seed=seed, dmat=dmat)
        best_part, best_loss = fit.partition, fit.loss
        if nested and prev is not None and prev.K == K - 1:
            alt = fit_map(data, model, K, init=InitSpec("labels", tuple(_split_largest(prev, data, model))),
                          dmat=dmat)
            if alt.loss < best_loss:
                best_part, best_loss = alt.partition, alt.loss
        out.append((K, float(best_loss)))
        prev = best_part
    return out


def silhouette_values(partition: Partition, dmat: DissimMatrix | np.ndarray) -> np.ndarray:
    """Per-point silhouette ``(b - a) / max(a, b)``; points in singleton blocks get 0."""
    D = dmat.values if isinstance(dmat, DissimMatrix) else np.asarray(dmat)
    lab = partition.labels
    K = partition.K
    sizes = partition.block_sizes
    onehot = np.zeros((lab.size, K))
    onehot[np.arange(lab.size), lab] = 1.0
    sums = D @ onehot
    own = sizes[lab]
    a = sums[np.arange(lab.size), lab] / np.maximum(own - 1, 1)
    other = sums / sizes[None, :]
    other[np.arange(lab.size), lab] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own == 1] = 0.0
    return s


def avg_silhouette(partition: Partition, dmat: DissimMatrix | np.ndarray) -> float:
    if partition.K < 2:
        raise ValueError("silhouette needs at least two blocks")
    return float(silhouette_values(partition, dmat).mean())


def silhouette_curve(data: Dataset, model: CohesionModel, K_range, dmat: DissimMatrix, restarts: int = 10,
                     seed: int = 0) -> list[tuple[int, float]]:
    """Average silhouette of the MAP partition for each K >= 2."""
    return [(K, avg_silhouette(fit_map(data, model, K, restarts=restarts, seed=seed, dmat=dmat).partition, dmat))
            for K in sorted(K_range)]
