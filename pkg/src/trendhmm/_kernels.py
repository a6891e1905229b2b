"""Compiled log-space recursions.

Every sequential pass (forward, backward, filter/signal loop, FFBS) lives
here as a numba kernel. All mass accumulation happens in log space with
log-sum-exp reductions; -inf propagates cleanly for zero-probability
entries, and an all--inf column is reported as a degeneracy index instead
of producing NaNs.

Kernels take the emission table as (K, G) state-by-gridpoint log-pmfs plus
an int64 observation index per step, so callers never materialize a (T, K)
emission matrix.
"""

import numpy as np
from numba import njit

NO_DEGENERACY = -1


@njit(cache=True)
def _lse(x):
    m = -np.inf
    for i in range(x.shape[0]):
        if x[i] > m:
            m = x[i]
    if m == -np.inf:
        return -np.inf
    s = 0.0
    for i in range(x.shape[0]):
        s += np.exp(x[i] - m)
    return np.log(s) + m


@njit(cache=True)
def forward_log(log_pi, log_A, log_emission, obs_idx):
    """Log-space forward pass.

    Returns (log_alpha (T, K), loglik, degenerate_t); degenerate_t is the
    first step whose column is entirely -inf, or NO_DEGENERACY.
    """
    T = obs_idx.shape[0]
    K = log_pi.shape[0]
    la = np.full((T, K), -np.inf)
    work = np.empty(K)
    for k in range(K):
        la[0, k] = log_pi[k] + log_emission[k, obs_idx[0]]
    if _lse(la[0]) == -np.inf:
        return la, -np.inf, 0
    for t in range(1, T):
        for k in range(K):
            for j in range(K):
                work[j] = la[t - 1, j] + log_A[j, k]
            la[t, k] = _lse(work) + log_emission[k, obs_idx[t]]
        if _lse(la[t]) == -np.inf:
            return la, -np.inf, t
    return la, _lse(la[T - 1]), NO_DEGENERACY


@njit(cache=True)
def backward_log(log_A, log_emission, obs_idx):
    """Log-space backward pass; log_beta[T-1] = 0."""
    T = obs_idx.shape[0]
    K = log_A.shape[0]
    lb = np.zeros((T, K))
    work = np.empty(K)
    for t in range(T - 2, -1, -1):
        for k in range(K):
            for j in range(K):
                work[j] = log_A[k, j] + log_emission[j, obs_idx[t + 1]] + lb[t + 1, j]
            lb[t, k] = _lse(work)
    return lb


@njit(cache=True)
def loglik_log(log_pi, log_A, log_emission, obs_idx):
    """Log-likelihood only, O(K) memory."""
    T = obs_idx.shape[0]
    K = log_pi.shape[0]
    prev = np.empty(K)
    cur = np.empty(K)
    work = np.empty(K)
    for k in range(K):
        prev[k] = log_pi[k] + log_emission[k, obs_idx[0]]
    if _lse(prev) == -np.inf:
        return -np.inf, 0
    for t in range(1, T):
        for k in range(K):
            for j in range(K):
                work[j] = prev[j] + log_A[j, k]
            cur[k] = _lse(work) + log_emission[k, obs_idx[t]]
        if _lse(cur) == -np.inf:
            return -np.inf, t
        for k in range(K):
            prev[k] = cur[k]
    return _lse(prev), NO_DEGENERACY


@njit(cache=True)
def expected_stats(log_pi, log_A, log_emission, obs_idx):
    """One E-step: smoothed state probabilities and expected transition counts.

    Returns (gamma (T, K), counts (K, K), loglik, degenerate_t). gamma rows
    are renormalized in linear space to remove round-off drift.
    """
    T = obs_idx.shape[0]
    K = log_pi.shape[0]
    la, loglik, deg = forward_log(log_pi, log_A, log_emission, obs_idx)
    gamma = np.zeros((T, K))
    counts = np.zeros((K, K))
    if deg != NO_DEGENERACY:
        return gamma, counts, loglik, deg
    lb = backward_log(log_A, log_emission, obs_idx)
    for t in range(T):
        m = -np.inf
        for k in range(K):
            v = la[t, k] + lb[t, k]
            gamma[t, k] = v
            if v > m:
                m = v
        s = 0.0
        for k in range(K):
            gamma[t, k] = np.exp(gamma[t, k] - m)
            s += gamma[t, k]
        for k in range(K):
            gamma[t, k] /= s
    for t in range(1, T):
        for i in range(K):
            for j in range(K):
                v = la[t - 1, i] + log_A[i, j] \
                    + log_emission[j, obs_idx[t]] + lb[t, j] - loglik
                counts[i, j] += np.exp(v)
    return gamma, counts, loglik, NO_DEGENERACY


@njit(cache=True)
def signal_filter(log_pi, log_A_stack, log_emission_stack, mu_star_stack,
                  obs_idx, bucket_idx):
    """Online predict/update filter with per-step parameter lookup.

    At each step t the parameter set ``bucket_idx[t]`` supplies the
    transition matrix, emission table and grid-renormalized state means.
    The one-step state prediction and the return prediction are formed
    *before* the Bayes update with observation t; a single filter state
    persists across bucket switches. A plain HMM is the single-bucket case.

    Returns (omega_pred (T, K), omega_filt (T, K), predictions (T,), loglik,
    degenerate_t).
    """
    T = obs_idx.shape[0]
    K = log_pi.shape[0]
    omega_pred = np.zeros((T, K))
    omega_filt = np.zeros((T, K))
    predictions = np.zeros(T)
    logw = np.empty(K)
    loglik = 0.0
    for t in range(T):
        r = bucket_idx[t]
        if t == 0:
            for k in range(K):
                omega_pred[0, k] = np.exp(log_pi[k])
        else:
            # omega_pred = A' @ omega_filt[t-1]; linear space, inputs normalized
            for k in range(K):
                acc = 0.0
                for j in range(K):
                    acc += np.exp(log_A_stack[r, j, k]) * omega_filt[t - 1, j]
                omega_pred[t, k] = acc
        pred = 0.0
        for k in range(K):
            pred += omega_pred[t, k] * mu_star_stack[r, k]
        predictions[t] = pred
        for k in range(K):
            logw[k] = np.log(omega_pred[t, k]) + log_emission_stack[r, k, obs_idx[t]]
        c = _lse(logw)
        if c == -np.inf:
            return omega_pred, omega_filt, predictions, -np.inf, t
        loglik += c
        for k in range(K):
            omega_filt[t, k] = np.exp(logw[k] - c)
    return omega_pred, omega_filt, predictions, loglik, NO_DEGENERACY


@njit(cache=True)
def ffbs(log_pi, log_A, log_emission, obs_idx, uniforms):
    """Forward-filter backward-sample one latent path.

    ``uniforms`` must hold T pre-drawn U(0,1) variates; the path is a
    deterministic function of them, so seeding lives with the caller.
    Returns (states (T,), degenerate_t).
    """
    T = obs_idx.shape[0]
    K = log_pi.shape[0]
    filt = np.zeros((T, K))
    logw = np.empty(K)
    states = np.zeros(T, dtype=np.int64)
    A = np.exp(log_A)
    for t in range(T):
        if t == 0:
            for k in range(K):
                logw[k] = log_pi[k] + log_emission[k, obs_idx[0]]
        else:
            for k in range(K):
                acc = 0.0
                for j in range(K):
                    acc += A[j, k] * filt[t - 1, j]
                logw[k] = np.log(acc) + log_emission[k, obs_idx[t]]
        c = _lse(logw)
        if c == -np.inf:
            return states, t
        for k in range(K):
            filt[t, k] = np.exp(logw[k] - c)
    # backward sampling
    u = uniforms[T - 1]
    acc = 0.0
    pick = K - 1
    for k in range(K):
        acc += filt[T - 1, k]
        if u <= acc:
            pick = k
            break
    states[T - 1] = pick
    for t in range(T - 2, -1, -1):
        total = 0.0
        for k in range(K):
            total += filt[t, k] * A[k, states[t + 1]]
        u = uniforms[t] * total
        acc = 0.0
        pick = K - 1
        for k in range(K):
            acc += filt[t, k] * A[k, states[t + 1]]
            if u <= acc:
                pick = k
                break
        states[t] = pick
    return states, NO_DEGENERACY
