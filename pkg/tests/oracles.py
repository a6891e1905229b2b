"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (exhaustive path
enumeration, direct density ratios, textbook closed forms) with no imports
from the package under test, so agreement is evidence rather than tautology.
"""

import math
from itertools import product

import numpy as np
from scipy.special import gammaln


def nearest_index(values, x):
    """Index of the grid value closest to x (first on ties)."""
    best, best_d = 0, abs(values[0] - x)
    for i, v in enumerate(values):
        d = abs(v - x)
        if d < best_d:
            best, best_d = i, d
    return best


def brute_pmf(values, mu, sigma2):
    """Normal density renormalized over the grid, computed directly."""
    w = [math.exp(-(v - mu) ** 2 / (2.0 * sigma2)) for v in values]
    s = sum(w)
    return [wi / s for wi in w]


def _path_prob(path, upto, pi, A, pmf, obs):
    p = pi[path[0]] * pmf[path[0]][obs[0]]
    for t in range(1, upto):
        p *= A[path[t - 1]][path[t]] * pmf[path[t]][obs[t]]
    return p


def brute_filter(returns, A, pi, mu, sigma2, values):
    """Filtering by exhaustive enumeration of all state paths.

    Returns (omega_pred, omega_filt, predictions, loglik) where
    omega_pred[t] is the state distribution predicted before observation t
    (omega_pred[0] is pi) and predictions[t] uses the grid-renormalized
    state means.
    """
    K, T = len(pi), len(returns)
    pmf = [brute_pmf(values, mu[k], sigma2[k]) for k in range(K)]
    obs = [nearest_index(values, r) for r in returns]
    mu_star = [sum(v * p for v, p in zip(values, pmf[k])) for k in range(K)]

    omega_pred, omega_filt, predictions = [], [], []
    for t in range(T):
        if t == 0:
            pred = list(pi)
        else:
            dist = [0.0] * K
            for path in product(range(K), repeat=t):
                p = _path_prob(path, t, pi, A, pmf, obs)
                for k in range(K):
                    dist[k] += p * A[path[-1]][k]
            s = sum(dist)
            pred = [d / s for d in dist]
        omega_pred.append(pred)
        predictions.append(sum(pred[k] * mu_star[k] for k in range(K)))

        dist = [0.0] * K
        for path in product(range(K), repeat=t + 1):
            p = _path_prob(path, t + 1, pi, A, pmf, obs)
            dist[path[-1]] += p
        s = sum(dist)
        omega_filt.append([d / s for d in dist])

    total = sum(_path_prob(path, T, pi, A, pmf, obs)
                for path in product(range(K), repeat=T))
    return (np.array(omega_pred), np.array(omega_filt),
            np.array(predictions), math.log(total))


def brute_smoother(returns, A, pi, mu, sigma2, values):
    """Smoothed state probabilities and expected transition counts by full
    path enumeration. Returns (gamma (T, K), counts (K, K), loglik)."""
    K, T = len(pi), len(returns)
    pmf = [brute_pmf(values, mu[k], sigma2[k]) for k in range(K)]
    obs = [nearest_index(values, r) for r in returns]
    gamma = np.zeros((T, K))
    counts = np.zeros((K, K))
    total = 0.0
    for path in product(range(K), repeat=T):
        p = _path_prob(path, T, pi, A, pmf, obs)
        total += p
        for t in range(T):
            gamma[t][path[t]] += p
        for t in range(1, T):
            counts[path[t - 1]][path[t]] += p
    return gamma / total, counts / total, math.log(total)


def nig_log_evidence(data, b0, kappa0, c0, C0):
    """Closed-form log marginal likelihood of i.i.d. normal data under the
    conjugate prior mu | s2 ~ N(b0, s2/kappa0), s2 ~ InvGamma(c0, scale C0)."""
    z = np.asarray(data, dtype=float)
    T = z.size
    zbar = float(z.mean())
    ss = float(((z - zbar) ** 2).sum())
    kT = kappa0 + T
    cT = c0 + 0.5 * T
    CT = C0 + 0.5 * (ss + kappa0 * T * (zbar - b0) ** 2 / kT)
    return (-0.5 * T * math.log(2.0 * math.pi)
            + 0.5 * (math.log(kappa0) - math.log(kT))
            + gammaln(cT) - gammaln(c0)
            + c0 * math.log(C0) - cT * math.log(CT))


def simple_ols(x, y):
    """Plain least-squares line fit; returns (intercept, slope, residuals)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xbar, ybar = x.mean(), y.mean()
    slope = ((x - xbar) * (y - ybar)).sum() / ((x - xbar) ** 2).sum()
    intercept = ybar - slope * xbar
    return intercept, slope, y - intercept - slope * x
