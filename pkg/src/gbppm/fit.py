"""Best-of-restarts MAP search dispatched on the cohesion kind."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bregman import bregman_kmeans
from .core import CohesionModel, Dataset, InitSpec, Partition, rng_stream
from .dissim import DissimMatrix, k_dissimilarities, pairwise_matrix


@dataclass(frozen=True, eq=False)
class MapFit:
    partition: Partition
    loss: float
    trace: list
    restart: int


def fit_map(data: Dataset, model: CohesionModel, K: int, restarts: int = 10, seed: int = 0,
            init: InitSpec | None = None, max_iter: int = 300, dmat: DissimMatrix | None = None) -> MapFit:
    """Run the model's MAP algorithm from ``restarts`` seeded starts and keep the lowest loss.

    Bregman kinds use (adjusted) Bregman k-means, average dissimilarities use
    k-dissimilarities.  Restart ``r`` draws from its own stream of ``seed``.
    An explicit ``init`` of kind ``"labels"`` runs once.
    """
    init = init or InitSpec()
    if init.kind == "labels":
        restarts = 1
    if not model.is_bregman and dmat is None:
        dmat = pairwise_matrix(data, model)
    best = None
    for r in range(restarts):
        rng = rng_stream(seed, r)
        if model.is_bregman:
            part, trace = bregman_kmeans(data, model, K, init, max_iter, rng)
        else:
            part, trace = k_dissimilarities(data, model, K, init, max_iter, rng, dmat=dmat)
        if best is None or trace[-1] < best.loss:
            best = MapFit(part, trace[-1], trace, r)
    return best
