"""Posterior summaries of sampled partitions.

Everything here works on label-invariant quantities (co-clustering,
variation of information), so raw sample labels never need aligning.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import softmax

from . import _kernels
from .bregman import divergence_matrix
from .core import (
    AVG_DISSIMILARITY,
    BERNOULLI_KL,
    SQ_EUCLIDEAN,
    CohesionModel,
    Dataset,
    DomainError,
    InvariantError,
    Partition,
)
from .dissim import DissimMatrix

REPORT_SCHEMA = 1


@dataclass(frozen=True, eq=False)
class CoClusteringMatrix:
    values: np.ndarray
    sample_count: int

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.6g")

    def to_long_csv(self, path) -> None:
        """Plot-ready table with 1-based ``i, j`` and the probability ``s``."""
        n = self.values.shape[0]
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "s"])
            for a, b, s in zip(ii.ravel() + 1, jj.ravel() + 1, self.values.ravel()):
                w.writerow([a, b, f"{s:.6g}"])


def _as_label_matrix(samples) -> np.ndarray:
    if hasattr(samples, "labels") and not isinstance(samples, Partition):
        lab = np.asarray(samples.labels)
    else:
        lab = np.array([p.labels if isinstance(p, Partition) else np.asarray(p) for p in samples])
    if lab.ndim != 2 or lab.shape[0] == 0:
        raise ValueError("need at least one sampled partition")
    return lab


def coclustering(samples, chunk: int = 256) -> CoClusteringMatrix:
    """Fraction of draws in which each pair of points shares a block."""
    lab = _as_label_matrix(samples)
    m, n = lab.shape
    K = int(lab.max()) + 1
    S = np.zeros((n, n))
    for lo in range(0, m, chunk):
        block = lab[lo:lo + chunk]
        H = np.zeros((n, block.shape[0] * K))
        cols = block.T + K * np.arange(block.shape[0])[None, :]
        H[np.arange(n)[:, None], cols] = 1.0
        S += H @ H.T
    S /= m
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return CoClusteringMatrix(np.clip(S, 0.0, 1.0), m)


def _point_discrepancies(partition: Partition, data: Dataset, model: CohesionModel,
                         dmat: DissimMatrix | None = None) -> np.ndarray:
    X = data.values
    lab = partition.labels
    counts = partition.block_sizes.astype(float)
    if model.kind == AVG_DISSIMILARITY:
        if dmat is not None:
            D = dmat.values
            onehot = np.zeros((partition.n, partition.K))
            onehot[np.arange(partition.n), lab] = 1.0
            R = D @ onehot
            return R[np.arange(partition.n), lab] / counts[lab]
        out = np.empty(partition.n)
        for idx in partition.blocks():
            out[idx] = model.dissimilarity(X[idx], X[idx]).mean(axis=1)
        return out
    sums = np.zeros((partition.K, data.d))
    np.add.at(sums, lab, X)
    M = sums / counts[:, None]
    if model.kind == BERNOULLI_KL:
        M = counts[:, None] / (counts[:, None] + 1) * M + 0.5 / (counts[:, None] + 1)
    return divergence_matrix(model, X, M)[np.arange(partition.n), lab]


def medoids(partition: Partition, data: Dataset, model: CohesionModel,
            dmat: DissimMatrix | None = None) -> np.ndarray:
    """Index of the member with the smallest discrepancy to its block, per block."""
    disc = _point_discrepancies(partition, data, model, dmat)
    return np.array([idx[np.argmin(disc[idx])] for idx in partition.blocks()], dtype=np.int64)


def misclassification(S: CoClusteringMatrix, estimate: Partition, medoid_indices) -> np.ndarray:
    """``1 - s[i, medoid of i's block]`` for every point."""
    med = np.asarray(medoid_indices)
    if med.size != estimate.K:
        raise InvariantError("need one medoid per block of the estimate")
    target = med[estimate.labels]
    out = 1.0 - S.values[np.arange(estimate.n), target]
    out[med] = 0.0
    return np.clip(out, 0.0, 1.0)


def insertion_deltas(x_new, reference: Partition, data: Dataset, model: CohesionModel) -> np.ndarray:
    """Loss increase of each block of ``reference`` when ``x_new`` joins it."""
    x = np.asarray(x_new, dtype=float).ravel()
    if x.size != data.d:
        raise DomainError(f"new point has {x.size} coordinates, data has {data.d}")
    if reference.n != data.n:
        raise InvariantError("reference partition does not match data")
    if model.kind == BERNOULLI_KL and not np.all((x == 0) | (x == 1)):
        raise DomainError("new point must be binary for the Bernoulli KL model")
    X = data.values
    counts = reference.block_sizes.astype(np.int64)
    sums = np.zeros((reference.K, data.d))
    np.add.at(sums, reference.labels, X)
    out = np.empty(reference.K)
    if model.kind == SQ_EUCLIDEAN:
        diff = x[None, :] - sums / counts[:, None]
        out[:] = counts / (counts + 1.0) * (diff ** 2).sum(axis=1)
    elif model.kind == BERNOULLI_KL:
        for k in range(reference.K):
            out[k] = _kernels.kl_block(counts[k] + 1, sums[k] + x) - _kernels.kl_block(counts[k], sums[k])
    else:
        to_new = model.dissimilarity(x[None, :], X)[0]
        for k, idx in enumerate(reference.blocks()):
            T = model.dissimilarity(X[idx], X[idx]).sum() / idx.size
            out[k] = (2.0 * to_new[idx].sum() - T) / (idx.size + 1.0)
    return out


def predictive_allocation(x_new, reference: Partition, lam: float, data: Dataset, model: CohesionModel,
                          samples=None) -> np.ndarray:
    """Allocation probabilities of a new point over the blocks of ``reference``.

    With ``samples`` (a ChainSamples), probabilities are averaged over draws
    using each draw's lambda; every sampled block is credited to the
    reference block it overlaps most.
    """
    if samples is None:
        return softmax(-lam * model.energy_scale * insertion_deltas(x_new, reference, data, model))
    lab = _as_label_matrix(samples)
    lams = np.asarray(getattr(samples, "lambdas", np.full(lab.shape[0], lam)), dtype=float)
    ref_onehot = np.zeros((reference.n, reference.K))
    ref_onehot[np.arange(reference.n), reference.labels] = 1.0
    total = np.zeros(reference.K)
    for row, lm in zip(lab, lams):
        part = Partition(row)
        p = softmax(-lm * model.energy_scale * insertion_deltas(x_new, part, data, model))
        blk = np.zeros((part.n, part.K))
        blk[np.arange(part.n), part.labels] = 1.0
        owner = np.argmax(blk.T @ ref_onehot, axis=1)
        np.add.at(total, owner, p)
    return total / total.sum()


def _entropy(counts: np.ndarray, n: int) -> float:
    p = np.sort(counts[counts > 0]) / n
    return float(-(p * np.log(p)).sum())


def vi_distance(c1: Partition, c2: Partition) -> float:
    """Variation of information ``H(c1) + H(c2) - 2 I(c1, c2)``, natural logs."""
    a = c1.labels if isinstance(c1, Partition) else Partition(c1).labels
    b = c2.labels if isinstance(c2, Partition) else Partition(c2).labels
    if a.size != b.size:
        raise ValueError(f"partitions have different sizes {a.size} and {b.size}")
    n = a.size
    joint = np.bincount(a * (b.max() + 1) + b)
    # summing the marginals first keeps the result exactly symmetric
    vi = 2 * _entropy(joint, n) - (_entropy(np.bincount(a), n) + _entropy(np.bincount(b), n))
    return max(vi, 0.0)


def _distinct(samples) -> tuple[list[Partition], np.ndarray]:
    lab = _as_label_matrix(samples)
    counter = Counter(Partition(row) for row in lab)
    parts = list(counter)
    freq = np.array([counter[p] for p in parts], dtype=float) / lab.shape[0]
    return parts, freq


def vi_lower_bound(partition: Partition, S: np.ndarray) -> float:
    """Jensen-type surrogate for the posterior expected VI to ``partition``, from the co-clustering matrix.

    Commonly called a lower bound, though it can exceed the exact expectation;
    its minimizer is what matters.
    """
    lab = partition.labels
    onehot = np.zeros((lab.size, partition.K))
    onehot[np.arange(lab.size), lab] = 1.0
    size = partition.block_sizes[lab]
    within = (S @ onehot)[np.arange(lab.size), lab]
    return float(np.mean(np.log(size) + np.log(S.sum(axis=1)) - 2 * np.log(within)))


def vi_point_estimate(samples, S: CoClusteringMatrix | None = None) -> Partition:
    """Sampled partition minimizing the VI lower bound."""
    S = S if S is not None else coclustering(samples)
    parts, _ = _distinct(samples)
    scores = [vi_lower_bound(p, S.values) for p in parts]
    return parts[int(np.argmin(scores))]


@dataclass(frozen=True, eq=False)
class CredibleBallSummary:
    point_estimate: Partition
    alpha: float
    ball_members: list
    horizontal_bounds: list
    bound_distance: float
    coverage: float


def credible_ball(samples, estimate: Partition, alpha: float = 0.05, atol: float = 1e-12) -> CredibleBallSummary:
    """Smallest VI ball around ``estimate`` holding at least ``1 - alpha`` of the draws.

    Distinct sampled partitions are added in tiers of equal distance, so
    every partition tied with the boundary is included.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    parts, freq = _distinct(samples)
    dist = np.array([vi_distance(estimate, p) for p in parts])
    order = np.argsort(dist, kind="stable")
    mass = 0.0
    members = []
    j = 0
    while j < order.size:
        tier_d = dist[order[j]]
        while j < order.size and dist[order[j]] <= tier_d + atol:
            members.append(order[j])
            mass += freq[order[j]]
            j += 1
        if mass >= 1 - alpha - 1e-12:
            break
    radius = float(dist[members].max())
    bounds = [parts[m] for m in members if dist[m] >= radius - atol]
    return CredibleBallSummary(estimate, alpha, [parts[m] for m in members], bounds, radius, float(mass))


def summary_report(samples, estimate_map: Partition, data: Dataset, model: CohesionModel,
                   alpha: float = 0.05, dmat: DissimMatrix | None = None, new_points=None,
                   lam: float | None = None) -> dict:
    """JSON-ready summary consumed by the command line front end."""
    S = coclustering(samples)
    vi_est = vi_point_estimate(samples, S)
    report = {"schema": REPORT_SCHEMA, "n": data.n, "K": estimate_map.K, "alpha": alpha,
              "sample_count": S.sample_count}
    for name, est in (("map", estimate_map), ("vi", vi_est)):
        med = medoids(est, data, model, dmat)
        ball = credible_ball(samples, est, alpha)
        report[name] = {
            "labels": (est.labels + 1).tolist(),
            "medoids": (med + 1).tolist(),
            "misclassification": misclassification(S, est, med).round(6).tolist(),
            "horizontal_bound": (ball.horizontal_bounds[0].labels + 1).tolist(),
            "horizontal_bound_vi": ball.bound_distance,
            "ball_size": len(ball.ball_members),
            "ball_coverage": ball.coverage,
        }
    if new_points is not None:
        lam_ref = lam if lam is not None else float(np.mean(getattr(samples, "lambdas", [1.0])))
        report["predictive"] = [
            {"x": np.asarray(x).tolist(),
             "probabilities": predictive_allocation(x, vi_est, lam_ref, data, model).round(6).tolist()}
            for x in np.atleast_2d(new_points)
        ]
    return report


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2))
