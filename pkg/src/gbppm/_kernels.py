"""Compiled single-site update kernels.

Each kernel scores moving point ``i`` into every block ``k`` by the change in
that block's loss, computed with ``i`` first removed from its current block:
``delta[k] = loss(C_k + i) - loss(C_k - i)``.  Only sufficient statistics are
touched: per-block counts and sums for the Bregman kinds, and the
point-to-block dissimilarity sums ``R`` plus block totals ``T`` for average
dissimilarities.
"""

import numba
import numpy as np

SQ = 0
KL = 1
DISSIM = 2


@numba.njit(cache=True)
def kl_block(m, s):
    """Adjusted-centroid Bernoulli KL loss of a block of ``m`` binary rows with column sums ``s``."""
    out = 0.0
    for j in range(s.shape[0]):
        xt = (s[j] + 0.5) / (m + 1.0)
        out -= s[j] * np.log(xt) + (m - s[j]) * np.log1p(-xt)
    return out


@numba.njit(cache=True)
def sq_deltas(x, ci, counts, sums, out):
    K, d = sums.shape
    for k in range(K):
        m = counts[k] - (1 if k == ci else 0)
        acc = 0.0
        if m == 0:
            out[k] = 0.0
            continue
        for j in range(d):
            s = sums[k, j] - (x[j] if k == ci else 0.0)
            diff = x[j] - s / m
            acc += diff * diff
        out[k] = m / (m + 1.0) * acc


@numba.njit(cache=True)
def kl_deltas(x, ci, counts, sums, out):
    K, d = sums.shape
    s = np.empty(d)
    for k in range(K):
        m = counts[k] - (1 if k == ci else 0)
        for j in range(d):
            s[j] = sums[k, j] - (x[j] if k == ci else 0.0)
        before = kl_block(m, s)
        for j in range(d):
            s[j] += x[j]
        out[k] = kl_block(m + 1, s) - before


@numba.njit(cache=True)
def dissim_deltas(i, ci, counts, R, T, out):
    """Recursive reallocation delta ``(2 R_ik - T_{k,-i}) / n_k`` with ``n_k`` counting ``i``."""
    K = T.shape[0]
    for k in range(K):
        if k == ci:
            m = counts[k] - 1
            t_minus = ((m + 1.0) * T[k] - 2.0 * R[i, k]) / m if m > 0 else 0.0
        else:
            m = counts[k]
            t_minus = T[k]
        out[k] = (2.0 * R[i, k] - t_minus) / (m + 1.0)


@numba.njit(cache=True)
def site_deltas(kind, i, X, labels, counts, sums, R, T, out):
    ci = labels[i]
    if kind == SQ:
        sq_deltas(X[i], ci, counts, sums, out)
    elif kind == KL:
        kl_deltas(X[i], ci, counts, sums, out)
    else:
        dissim_deltas(i, ci, counts, R, T, out)


@numba.njit(cache=True)
def apply_move(kind, i, a, b, X, D, labels, counts, sums, R, T, delta):
    """Move ``i`` from block ``a`` to ``b`` and refresh the caches."""
    if a == b:
        return
    labels[i] = b
    counts[a] -= 1
    counts[b] += 1
    if kind == DISSIM:
        n = D.shape[0]
        # delta[a] is the removal gain from a, delta[b] the insertion cost into b
        T[a] -= delta[a]
        T[b] += delta[b]
        for r in range(n):
            R[r, a] -= D[r, i]
            R[r, b] += D[r, i]
    else:
        for j in range(X.shape[1]):
            sums[a, j] -= X[i, j]
            sums[b, j] += X[i, j]


@numba.njit(cache=True)
def categorical(logw, u):
    """Inverse-CDF draw from unnormalized log weights using uniform ``u``."""
    K = logw.shape[0]
    mx = logw[0]
    for k in range(1, K):
        if logw[k] > mx:
            mx = logw[k]
    total = 0.0
    w = np.empty(K)
    for k in range(K):
        w[k] = np.exp(logw[k] - mx)
        total += w[k]
    target = u * total
    acc = 0.0
    for k in range(K):
        acc += w[k]
        if target < acc:
            return k
    return K - 1


@numba.njit(cache=True)
def gibbs_sweep(kind, beta, X, D, labels, counts, sums, R, T, u):
    """One ascending pass of single-site Gibbs updates; returns the loss change."""
    n = labels.shape[0]
    K = counts.shape[0]
    delta = np.empty(K)
    logw = np.empty(K)
    change = 0.0
    for i in range(n):
        a = labels[i]
        if counts[a] == 1:
            continue
        site_deltas(kind, i, X, labels, counts, sums, R, T, delta)
        for k in range(K):
            logw[k] = -beta * delta[k]
        b = categorical(logw, u[i])
        if b != a:
            change += delta[b] - delta[a]
            apply_move(kind, i, a, b, X, D, labels, counts, sums, R, T, delta)
    return change


@numba.njit(cache=True)
def greedy_sweep(kind, X, D, labels, counts, sums, R, T):
    """One ascending pass moving each point to its loss-minimizing block.

    A point only leaves its block on a strict improvement, which rules out
    cycling between equal-loss configurations.
    """
    n = labels.shape[0]
    K = counts.shape[0]
    delta = np.empty(K)
    change = 0.0
    moved = 0
    for i in range(n):
        a = labels[i]
        if counts[a] == 1:
            continue
        site_deltas(kind, i, X, labels, counts, sums, R, T, delta)
        b = a
        best = delta[a]
        for k in range(K):
            if delta[k] < best:
                best = delta[k]
                b = k
        if b != a and delta[b] - delta[a] < -1e-12 * (1.0 + abs(delta[a])):
            change += delta[b] - delta[a]
            apply_move(kind, i, a, b, X, D, labels, counts, sums, R, T, delta)
            moved += 1
    return change, moved


@numba.njit(cache=True)
def run_block(kind, X, D, labels, counts, sums, R, T, uniforms, gammas,
              lam, hierarchical, rate0, scale, lam_tilde, loss,
              out_labels, out_lambda, out_loss, out_trace, t0, burnin, thin, rec_start):
    """Run ``len(uniforms)`` sweeps numbered from ``t0``; record every ``thin``-th after ``burnin``.

    With ``hierarchical`` set, lambda is redrawn after each sweep as
    ``gammas[t] / (rate0 + lam_tilde * scale * loss)``, where ``gammas`` are
    standard Gamma variates of the (fixed) posterior shape.
    """
    n_sweeps = uniforms.shape[0]
    rec = rec_start
    for t in range(n_sweeps):
        beta = lam * lam_tilde * scale
        loss += gibbs_sweep(kind, beta, X, D, labels, counts, sums, R, T, uniforms[t])
        if hierarchical:
            lam = gammas[t] / (rate0 + lam_tilde * scale * loss)
        step = t0 + t
        out_trace[step] = loss
        if step >= burnin and (step - burnin) % thin == 0:
            out_labels[rec, :] = labels
            out_lambda[rec] = lam
            out_loss[rec] = loss
            rec += 1
    return lam, loss, rec
