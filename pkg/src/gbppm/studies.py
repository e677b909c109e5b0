"""End-to-end pipelines for the simulation and carcinoma studies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bregman import adjusted_centroids
from .core import (
    BERNOULLI_KL_MODEL,
    BINARY,
    SQ_EUCLIDEAN_MODEL,
    Dataset,
    GibbsConfig,
    manhattan,
    pairwise_sq_euclidean,
)
from .dissim import pairwise_matrix
from .fit import fit_map
from .gibbs import run_chain
from .select import elbow_curve, silhouette_curve
from .sim import MixtureSpec, gen_mixture, mean_abs_deviation, oracle_coclustering
from .uq import coclustering, credible_ball, predictive_allocation, vi_distance, vi_point_estimate

SIM1_SIGMA2 = (0.75, 1.5, 3.0)
CARCINOMA_NEW_POINTS = ((0, 1, 0, 0, 0, 0, 0), (0, 1, 0, 0, 1, 0, 0), (1, 1, 1, 0, 1, 0, 1))


@dataclass
class StudyResult:
    """Tidy rows ``(replicate, setting, method, metric, value)`` plus free-form extras."""

    rows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def add(self, replicate, method, metric, value, setting="") -> None:
        self.rows.append({"replicate": replicate, "setting": setting, "method": method, "metric": metric,
                          "value": value})

    def values(self, method, metric, setting="") -> np.ndarray:
        return np.array([r["value"] for r in self.rows
                         if (r["method"], r["metric"], r["setting"]) == (method, metric, setting)])

    def value(self, replicate, method, metric, setting=""):
        for r in self.rows:
            if (r["replicate"], r["method"], r["metric"], r["setting"]) == (replicate, method, metric, setting):
                return r["value"]
        raise KeyError((replicate, method, metric, setting))

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["replicate", "setting", "method", "metric", "value"])
            w.writeheader()
            w.writerows(self.rows)


def _hierarchical(seed: int, n_iterations: int, n_burnin: int) -> GibbsConfig:
    return GibbsConfig(lambda_mode="hierarchical", a_lambda=1.0, b_lambda=0.0, n_iterations=n_iterations,
                       n_burnin=n_burnin, rng_seed=seed)


def sim1(sigma2_levels=SIM1_SIGMA2, replicates: int = 1, seed: int = 1, n_iterations: int = 6000,
         n_burnin: int = 1000, alpha: float = 0.05, restarts: int = 10) -> StudyResult:
    """Squared Euclidean model on Gaussian blobs, compared with the exact oracle.

    Replicate ``r`` at level ``j`` draws its data from ``seed + 1000 j + r``.
    """
    res = StudyResult()
    for j, s2 in enumerate(sigma2_levels):
        spec = MixtureSpec("gaussian", sigma2=s2)
        tag = f"sigma2={s2:g}"
        for r in range(replicates):
            data, truth = gen_mixture(spec, seed=seed + 1000 * j + r)
            fit = fit_map(data, SQ_EUCLIDEAN_MODEL, 4, restarts=restarts, seed=seed + r)
            chain = run_chain(data, SQ_EUCLIDEAN_MODEL, 4, _hierarchical(seed + r, n_iterations, n_burnin),
                              fit.partition)
            S = coclustering(chain)
            ball = credible_ball(chain, fit.partition, alpha)
            res.add(r, "sq_euclidean", "mean_abs_dev_oracle",
                    mean_abs_deviation(S, oracle_coclustering(data, spec)), tag)
            res.add(r, "sq_euclidean", "vi_map_to_bound", ball.bound_distance, tag)
            res.add(r, "sq_euclidean", "vi_map_to_truth", vi_distance(fit.partition, truth), tag)
            res.add(r, "sq_euclidean", "lambda_mean", float(chain.lambdas.mean()), tag)
    return res


def sim2(replicates: int = 1, seed: int = 1, n_iterations: int = 6000, n_burnin: int = 1000,
         K_range=range(2, 9), restarts: int = 10) -> StudyResult:
    """Squared Euclidean vs Manhattan dissimilarities on Student t blobs."""
    res = StudyResult()
    spec = MixtureSpec("student_t", sigma2=1.0, df=2.0)
    models = {"sq_euclidean": pairwise_sq_euclidean(), "manhattan": manhattan()}
    for r in range(replicates):
        data, truth = gen_mixture(spec, seed=seed + r)
        S_oracle = oracle_coclustering(data, spec)
        for name, model in models.items():
            dmat = pairwise_matrix(data, model)
            curve = silhouette_curve(data, model, K_range, dmat, restarts=restarts, seed=seed)
            for K, s in curve:
                res.add(r, name, f"silhouette_K{K}", s)
            res.add(r, name, "silhouette_best_K", max(curve, key=lambda t: t[1])[0])
            fit = fit_map(data, model, 4, restarts=restarts, seed=seed, dmat=dmat)
            chain = run_chain(data, model, 4, _hierarchical(seed + r, n_iterations, n_burnin), fit.partition,
                              dmat=dmat)
            res.add(r, name, "mean_abs_dev_oracle", mean_abs_deviation(coclustering(chain), S_oracle))
            res.add(r, name, "vi_map_to_truth", vi_distance(fit.partition, truth))
    return res


def carcinoma(data: Dataset, seed: int = 1, K: int = 3, n_iterations: int = 16000, n_burnin: int = 1000,
              restarts: int = 10, new_points=CARCINOMA_NEW_POINTS, K_range=range(1, 8)) -> StudyResult:
    """Bernoulli KL model on binary ratings: elbow curve, VI estimate, adjusted centroids, predictive."""
    if data.domain != BINARY:
        data = Dataset(data.values, BINARY)
    res = StudyResult()
    for k, v in elbow_curve(data, BERNOULLI_KL_MODEL, K_range, restarts=restarts, seed=seed, nested=True):
        res.add(0, "bernoulli_kl", f"elbow_K{k}", v)
    fit = fit_map(data, BERNOULLI_KL_MODEL, K, restarts=restarts, seed=seed)
    cfg = GibbsConfig(lambda_mode="fixed", lam=1.0, n_iterations=n_iterations, n_burnin=n_burnin, rng_seed=seed)
    chain = run_chain(data, BERNOULLI_KL_MODEL, K, cfg, fit.partition)
    S = coclustering(chain)
    vi_est = vi_point_estimate(chain, S)
    # order blocks by overall positive rate so block 1 is "mostly negative"
    cent = adjusted_centroids(data, vi_est).means
    order = np.argsort(cent.mean(axis=1), kind="stable")
    cent = cent[order]
    probs = np.array([predictive_allocation(x, vi_est, 1.0, data, BERNOULLI_KL_MODEL)[order] for x in new_points])
    res.extras.update(map=fit.partition, vi=vi_est, centroids=cent, predictive=probs, S=S)
    for k, row in enumerate(cent):
        for j, v in enumerate(row):
            res.add(0, "bernoulli_kl", f"centroid_{k + 1}_{j + 1}", float(v))
    for m, row in enumerate(probs):
        for k, v in enumerate(row):
            res.add(0, "bernoulli_kl", f"predictive_{m + 1}_{k + 1}", float(v))
    return res
