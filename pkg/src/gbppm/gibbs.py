"""Gibbs sampling over fixed-K partitions, with optional conjugate lambda updates."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import softmax

from . import _kernels
from .core import (
    AVG_DISSIMILARITY,
    BERNOULLI_KL,
    GAMMA_IDENTITY,
    SQ_EUCLIDEAN,
    CohesionModel,
    ConfigError,
    Dataset,
    DomainError,
    GibbsConfig,
    InvariantError,
    Partition,
    loss,
    rng_stream,
)
from .dissim import DissimMatrix, pairwise_matrix

SCHEMA_VERSION = 1
REFRESH_EVERY = 1000

_KIND_CODE = {SQ_EUCLIDEAN: _kernels.SQ, BERNOULLI_KL: _kernels.KL, AVG_DISSIMILARITY: _kernels.DISSIM}


class ContractError(InvariantError):
    """A caller violated an operation's precondition."""


def default_xi(model: CohesionModel, n: int, d: int) -> float:
    """Power of lambda in the joint pseudo-posterior.

    ``nd/2`` for squared Euclidean losses (including the pairwise form with
    ``gamma=identity, p=2``), ``nd`` for Minkowski distances.
    """
    if model.kind == BERNOULLI_KL:
        raise ConfigError("lambda is fixed at 1 for the Bernoulli KL model")
    if model.kind == SQ_EUCLIDEAN or model.gamma == GAMMA_IDENTITY:
        return n * d / 2
    return float(n * d)


@dataclass(eq=False)
class ChainState:
    """Mutable sampler state: labels, lambda, cached loss and sufficient statistics."""

    data: Dataset
    model: CohesionModel
    labels: np.ndarray
    lam: float
    loss: float = 0.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    D: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    counts: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)
    R: np.ndarray = field(init=False)
    T: np.ndarray = field(init=False)

    def __post_init__(self):
        self.model.check_compatible(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64).copy()
        if self.labels.size != self.data.n:
            raise InvariantError("labels and data disagree on n")
        self.K = int(self.labels.max()) + 1
        self.kind = _KIND_CODE[self.model.kind]
        self.X = np.ascontiguousarray(self.data.values)
        if self.kind == _kernels.DISSIM and self.D.shape[0] != self.data.n:
            self.D = pairwise_matrix(self.data, self.model).values
        self.refresh()

    @classmethod
    def initialize(cls, data: Dataset, model: CohesionModel, partition: Partition, lam: float = 1.0,
                   rng: np.random.Generator | None = None, dmat: DissimMatrix | None = None) -> "ChainState":
        kw = {"D": dmat.values} if dmat is not None else {}
        return cls(data, model, partition.labels, lam, rng=rng if rng is not None else np.random.default_rng(),
                   **kw)

    @property
    def partition(self) -> Partition:
        return Partition(self.labels, self.K)

    def refresh(self) -> float:
        """Rebuild caches and the loss from scratch; return the drift of the cached loss."""
        self.counts = np.bincount(self.labels, minlength=self.K).astype(np.int64)
        if np.any(self.counts == 0):
            raise InvariantError("empty block")
        if self.kind == _kernels.DISSIM:
            onehot = np.zeros((self.labels.size, self.K))
            onehot[np.arange(self.labels.size), self.labels] = 1.0
            self.R = self.D @ onehot
            self.T = (onehot * self.R).sum(axis=0) / self.counts
            self.sums = np.empty((0, 0))
            fresh = float(self.T.sum())
        else:
            self.sums = np.zeros((self.K, self.X.shape[1]))
            np.add.at(self.sums, self.labels, self.X)
            self.R = np.empty((0, 0))
            self.T = np.empty(0)
            fresh = loss(Partition(self.labels), self.data, self.model)
        drift = abs(self.loss - fresh)
        self.loss = fresh
        return drift

    def deltas(self, i: int) -> np.ndarray:
        out = np.empty(self.K)
        _kernels.site_deltas(self.kind, i, self.X, self.labels, self.counts, self.sums, self.R, self.T, out)
        return out


def full_conditional(i: int, state: ChainState, lambda_tilde: float = 1.0) -> np.ndarray:
    """Allocation probabilities of point ``i`` given every other label."""
    if state.counts[state.labels[i]] == 1:
        raise ContractError(f"point {i} is the only member of its block and cannot be reallocated")
    beta = state.lam * lambda_tilde * state.model.energy_scale
    return softmax(-beta * state.deltas(i))


def gibbs_sweep(state: ChainState, lambda_tilde: float = 1.0) -> ChainState:
    """Resample every non-singleton label once, in ascending order."""
    u = state.rng.random(state.data.n)
    beta = state.lam * lambda_tilde * state.model.energy_scale
    state.loss += _kernels.gibbs_sweep(state.kind, beta, state.X, state.D, state.labels, state.counts,
                                       state.sums, state.R, state.T, u)
    return state


def _lambda_posterior(state_loss: float, model: CohesionModel, config: GibbsConfig, n: int, d: int):
    if model.kind == BERNOULLI_KL:
        raise ConfigError("lambda is fixed at 1 for the Bernoulli KL model; use fixed mode")
    xi = default_xi(model, n, d) if config.xi is None else config.xi
    shape = config.a_lambda + config.lambda_tilde * xi
    rate = config.b_lambda + config.lambda_tilde * model.energy_scale * state_loss
    if not (shape > 0 and rate > 0):
        raise ConfigError(f"improper lambda full conditional Gamma({shape}, {rate})")
    return shape, rate


def sample_lambda(state: ChainState, config: GibbsConfig) -> float:
    """Draw lambda from its Gamma(shape, rate) full conditional given the partition."""
    if config.lambda_mode != "hierarchical":
        raise ConfigError("sample_lambda needs hierarchical lambda mode")
    shape, rate = _lambda_posterior(state.loss, state.model, config, state.data.n, state.data.d)
    return float(state.rng.gamma(shape, 1.0 / rate))


@dataclass(eq=False)
class ChainSamples:
    """Post-burn-in draws; ``labels`` rows are raw 0-based labels."""

    labels: np.ndarray
    lambdas: np.ndarray
    losses: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def partitions(self) -> list[Partition]:
        return [Partition(row) for row in self.labels]

    def to_ndjson(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write(json.dumps({"type": "meta", "schema": SCHEMA_VERSION, **self.meta}) + "\n")
            for lab, lam, ls in zip(self.labels, self.lambdas, self.losses):
                fh.write(json.dumps({"labels": (lab + 1).tolist(), "lambda": float(lam), "loss": float(ls)})
                         + "\n")

    @classmethod
    def from_ndjson(cls, path) -> "ChainSamples":
        meta, labels, lambdas, losses = {}, [], [], []
        with Path(path).open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("type") == "meta":
                    meta = {k: v for k, v in rec.items() if k != "type"}
                    continue
                labels.append(rec["labels"])
                lambdas.append(rec["lambda"])
                losses.append(rec["loss"])
        n = meta.get("n", len(labels[0]) if labels else 0)
        lab = np.asarray(labels, dtype=np.int64).reshape(-1, n) - 1
        return cls(lab, np.asarray(lambdas, float), np.asarray(losses, float), meta=meta)


def run_chain(data: Dataset, model: CohesionModel, K: int, config: GibbsConfig, init: Partition,
              dmat: DissimMatrix | None = None, chain: int = 0, check_tol: float = 1e-8) -> ChainSamples:
    """Run ``config.n_iterations`` sweeps from ``init``, keeping draws after ``config.n_burnin``.

    Lambda, when hierarchical, is redrawn once after every sweep.  Every
    ``REFRESH_EVERY`` sweeps the caches are rebuilt and the incrementally
    tracked loss is checked against a fresh evaluation.
    """
    if init.K != K or init.n != data.n:
        raise InvariantError("initial partition does not match data/K")
    hierarchical = config.lambda_mode == "hierarchical"
    rng = rng_stream(config.rng_seed, chain)
    state = ChainState.initialize(data, model, init, lam=config.lam, rng=rng, dmat=dmat)
    n, d = data.n, data.d
    shape = rate0 = 0.0
    if hierarchical:
        shape, _ = _lambda_posterior(state.loss, model, config, n, d)
        rate0 = config.b_lambda
        state.lam = sample_lambda(state, config)

    total = config.n_iterations
    kept = max(0, (total - config.n_burnin + config.thin - 1) // config.thin)
    if kept == 0:
        warnings.warn("burn-in covers every iteration; no samples are kept", RuntimeWarning, stacklevel=2)
    out_labels = np.empty((kept, n), dtype=np.int64)
    out_lambda = np.empty(kept)
    out_loss = np.empty(kept)
    trace = np.empty(total)
    rec = 0
    max_drift = 0.0
    lam, cur = state.lam, state.loss
    scale = model.energy_scale
    for t0 in range(0, total, REFRESH_EVERY):
        m = min(REFRESH_EVERY, total - t0)
        uniforms = rng.random((m, n))
        gammas = rng.standard_gamma(shape, size=m) if hierarchical else np.empty(m)
        lam, cur, rec = _kernels.run_block(state.kind, state.X, state.D, state.labels, state.counts, state.sums,
                                           state.R, state.T, uniforms, gammas, lam, hierarchical, rate0, scale,
                                           config.lambda_tilde, cur, out_labels, out_lambda, out_loss,
                                           trace, t0, config.n_burnin, config.thin, rec)
        state.loss = cur
        drift = state.refresh()
        if drift > check_tol * (1.0 + state.loss):
            raise InvariantError(f"cached loss drifted by {drift:.3g} after {t0 + m} sweeps")
        max_drift = max(max_drift, drift)
        cur = state.loss
    state.lam = lam

    meta = {
        "n": n, "d": d, "K": K, "model": model.kind, "gamma": model.gamma, "p": model.p,
        "lambda_mode": config.lambda_mode, "lam": config.lam, "a_lambda": config.a_lambda,
        "b_lambda": config.b_lambda,
        "xi": (None if not hierarchical else (default_xi(model, n, d) if config.xi is None else config.xi)),
        "lambda_tilde": config.lambda_tilde, "n_iterations": total, "n_burnin": config.n_burnin,
        "thin": config.thin, "seed": config.rng_seed, "chain": chain, "max_loss_drift": max_drift,
    }
    return ChainSamples(out_labels, out_lambda, out_loss, trace=trace, meta=meta)
