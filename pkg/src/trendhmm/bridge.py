"""Marginal likelihood by bridge sampling over the MCMC output.

The importance density is assembled from the chain itself: every stored
sweep contributes one mixture component, the product of that sweep's
complete-data conditionals (Dirichlet over each transition row, normal
over each state mean, inverse gamma over each state variance). Each
component sits on an actual draw, so the mixture tracks the posterior
even when an overfitted state count splits it into several clusters of
duplicated states, and the random label relabeling inside the sampler
spreads the components over every permutation mode. Both the target and
the mixture are densities over the raw parameters (simplex rows, means,
variances) with the same dominating measure, so no coordinate change is
needed. The ratio estimator is iterated with the optimal bridge function
to a 1e-8 relative change, and the standard error treats the two samples
as i.i.d., which is mildly optimistic for an autocorrelated chain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels
from .exceptions import BridgeFailureError, InvalidParameterError
from .grid import TrendGrid, log_discretized_gaussian_pmf
from .mcmc import (McmcChain, McmcConfig, McmcPrior, ResolvedMcmcPrior,
                   mcmc_sample, posterior_mode)
from .params import HmmParams, stationary_distribution
from .validation import check_returns

MAX_BRIDGE_ITERATIONS = 500
RELIABLE_K = 6  # beyond this the K! label modes outgrow practical chains
_EVAL_CHUNK = 256  # points per block when crossing points x components


@dataclass(frozen=True)
class BridgeEstimate:
    log_marginal_likelihood: float
    standard_error: float
    n_importance: int
    n_posterior: int

    def __post_init__(self):
        if not np.isfinite(self.log_marginal_likelihood):
            raise BridgeFailureError("non-finite bridge estimate")
        if not self.standard_error >= 0.0:
            raise BridgeFailureError("negative bridge standard error")


class _ConditionalMixture:
    """Equal-weight mixture of the per-sweep complete-data conditionals."""

    def __init__(self, chain: McmcChain):
        cond = chain.conditionals
        self.conc = cond.dirichlet          # (S, K, K)
        self.mu_mean = cond.mu_mean         # (S, K)
        self.mu_var = cond.mu_var
        self.s2_shape = cond.s2_shape
        self.s2_scale = cond.s2_scale
        self.n_components = self.mu_mean.shape[0]
        self.K = self.mu_mean.shape[1]
        # per-component log normalizers, constant across evaluation points
        self._dir_norm = (gammaln(self.conc.sum(axis=2))
                          - gammaln(self.conc).sum(axis=2)).sum(axis=1)
        self._mu_norm = -0.5 * (np.log(2.0 * np.pi * self.mu_var)
                                + self.mu_mean ** 2 / self.mu_var).sum(axis=1)
        self._s2_norm = (self.s2_shape * np.log(self.s2_scale)
                         - gammaln(self.s2_shape)).sum(axis=1)

    def log_density(self, A, mu, sigma2) -> np.ndarray:
        B = mu.shape[0]
        out = np.empty(B)
        log_A = np.log(np.maximum(A, 1e-300))
        log_s2 = np.log(sigma2)
        inv_s2 = 1.0 / sigma2
        for lo in range(0, B, _EVAL_CHUNK):
            hi = min(lo + _EVAL_CHUNK, B)
            sl = slice(lo, hi)
            ld = (np.einsum("bij,sij->bs", log_A[sl], self.conc)
                  - log_A[sl].sum(axis=(1, 2))[:, None]
                  + self._dir_norm[None, :])
            ld += (self._mu_norm[None, :]
                   - np.einsum("bk,sk->bs", mu[sl] ** 2, 0.5 / self.mu_var)
                   + np.einsum("bk,sk->bs", mu[sl],
                               self.mu_mean / self.mu_var))
            ld += (self._s2_norm[None, :]
                   - np.einsum("bk,sk->bs", log_s2[sl], self.s2_shape + 1.0)
                   - np.einsum("bk,sk->bs", inv_s2[sl], self.s2_scale))
            out[sl] = logsumexp(ld, axis=1)
        return out - np.log(self.n_components)

    def sample(self, n: int, rng):
        comp = rng.integers(0, self.n_components, n)
        # gamma draws normalized per row are exactly Dirichlet rows
        g = np.maximum(rng.gamma(self.conc[comp]), 1e-300)
        A = g / g.sum(axis=2, keepdims=True)
        mu = rng.normal(self.mu_mean[comp], np.sqrt(self.mu_var[comp]))
        sigma2 = 1.0 / rng.gamma(self.s2_shape[comp],
                                 1.0 / self.s2_scale[comp])
        return A, mu, sigma2


def _log_pstar(A, mu, sigma2, obs_idx, grid: TrendGrid,
               prior: ResolvedMcmcPrior) -> np.ndarray:
    """Unnormalized log posterior for a batch of raw parameter arrays;
    -inf where a variance sits below the grid floor (the truncated prior's
    support)."""
    B = mu.shape[0]
    out = np.full(B, -np.inf)
    floor = grid.variance_floor * (1.0 - 1e-12)
    for b in range(B):
        if sigma2[b].min() < floor:
            continue
        pi = stationary_distribution(A[b])
        pi = np.clip(pi, 1e-300, None)
        pi /= pi.sum()
        log_em = np.stack([
            log_discretized_gaussian_pmf(grid, float(m), float(s))
            for m, s in zip(mu[b], sigma2[b])])
        ll, deg = _kernels.loglik_log(np.log(pi), np.log(A[b]), log_em,
                                      obs_idx)
        if deg != _kernels.NO_DEGENERACY:
            continue
        out[b] = float(ll) + prior.log_density(A[b], mu[b], sigma2[b])
    return out


def _iterate_bridge(lw_q: np.ndarray, lw_p: np.ndarray,
                    tol: float = 1e-8) -> float:
    """Fixed point of the optimal-bridge recursion on log importance
    ratios; lw_* = log p*(x) - log q(x) at q-draws and posterior draws."""
    L, N = lw_q.size, lw_p.size
    log_s1 = np.log(N / (N + L))
    log_s2 = np.log(L / (N + L))
    finite_q = lw_q[np.isfinite(lw_q)]
    if finite_q.size == 0:
        raise BridgeFailureError(
            "no importance draw overlaps the posterior support")
    lam = logsumexp(finite_q) - np.log(L)  # plain importance start
    for _ in range(MAX_BRIDGE_ITERATIONS):
        log_num = logsumexp(
            lw_q - np.logaddexp(log_s1 + lw_q - lam, log_s2)) - np.log(L)
        log_den = logsumexp(
            -np.logaddexp(log_s1 + lw_p - lam, log_s2)) - np.log(N)
        new = log_num - log_den
        if not np.isfinite(new):
            raise BridgeFailureError("bridge recursion left the finite range")
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return float(new)
        lam = new
    raise BridgeFailureError(
        f"bridge recursion did not converge in {MAX_BRIDGE_ITERATIONS} "
        "iterations")


def _bridge_se(lw_q: np.ndarray, lw_p: np.ndarray, lam: float) -> float:
    L, N = lw_q.size, lw_p.size
    log_s1 = np.log(N / (N + L))
    log_s2 = np.log(L / (N + L))
    f1 = np.exp(lw_q - np.logaddexp(log_s1 + lw_q - lam, log_s2) - lam)
    f2 = np.exp(-np.logaddexp(log_s1 + lw_p - lam, log_s2))
    var = (f1.var(ddof=1) / (L * f1.mean() ** 2)
           + f2.var(ddof=1) / (N * f2.mean() ** 2))
    return float(np.sqrt(max(var, 0.0)))


def bridge_marginal_likelihood(chain: McmcChain, returns,
                               prior: McmcPrior | ResolvedMcmcPrior,
                               n_importance: int | None = None,
                               seed: int | None = None) -> BridgeEstimate:
    """Bridge-sampling estimate of log p(data | K) from a posterior chain.

    The importance sample is freshly drawn from the chain's conditional
    mixture; its size defaults to the chain length. The stored chain log
    posteriors are reused as the posterior-side numerator.
    """
    returns = check_returns(returns)
    if chain.n_draws < 1000:
        raise InvalidParameterError(
            f"bridge sampling needs >= 1000 draws, chain has {chain.n_draws}")
    if isinstance(prior, McmcPrior):
        prior = prior.resolve(returns, chain.n_states, chain.grid)
    if prior.n_states != chain.n_states:
        raise InvalidParameterError("prior resolved for a different K")
    grid = chain.grid
    obs_idx = grid.snap_index(returns)
    N = chain.n_draws
    L = N if n_importance is None else int(n_importance)
    if L < 1:
        raise InvalidParameterError("n_importance must be >= 1")
    rng = np.random.default_rng(chain.seed + 1 if seed is None else seed)

    q = _ConditionalMixture(chain)
    A_q, mu_q, s2_q = q.sample(L, rng)
    lw_q = (_log_pstar(A_q, mu_q, s2_q, obs_idx, grid, prior)
            - q.log_density(A_q, mu_q, s2_q))

    lw_p = chain.log_posterior - q.log_density(chain.A, chain.mu,
                                               chain.sigma2)
    if not np.isfinite(lw_p).all():
        raise BridgeFailureError("non-finite weight on a posterior draw")

    lam = _iterate_bridge(lw_q, lw_p)
    se = _bridge_se(lw_q, lw_p, lam)
    return BridgeEstimate(log_marginal_likelihood=lam, standard_error=se,
                          n_importance=L, n_posterior=N)


@dataclass(frozen=True)
class BridgeScore:
    k: int
    log_marginal_likelihood: float
    standard_error: float
    error: str | None = None


@dataclass(frozen=True)
class BridgeTable:
    """Per-K marginal-likelihood scores from a bridge-sampling sweep."""

    scores: tuple
    best_k: int
    params_by_k: dict

    @property
    def best_params(self) -> HmmParams:
        return self.params_by_k[self.best_k]

    def log_bayes_factor(self, k1: int, k2: int) -> float:
        by_k = {s.k: s for s in self.scores}
        return (by_k[k1].log_marginal_likelihood
                - by_k[k2].log_marginal_likelihood)


def select_k_bridge(returns, grid: TrendGrid, k_range=range(1, 11),
                    prior: McmcPrior = McmcPrior(),
                    config: McmcConfig = McmcConfig(),
                    n_importance: int | None = None) -> BridgeTable:
    """Sweep state counts, estimating log p(data | K) for each, and pick
    the maximizer. Per-K failures are recorded and skipped."""
    returns = check_returns(returns)
    k_list = [int(k) for k in k_range]
    if not k_list:
        raise InvalidParameterError("k_range must be non-empty")
    if max(k_list) > RELIABLE_K:
        warnings.warn(
            f"bridge sampling degrades above K={RELIABLE_K}: the "
            "importance density stops covering all posterior modes",
            RuntimeWarning, stacklevel=2)
    scores = []
    params_by_k = {}
    for k in k_list:
        try:
            chain = mcmc_sample(returns, k, grid, prior, config)
            est = bridge_marginal_likelihood(chain, returns, prior,
                                             n_importance=n_importance)
        except Exception as exc:  # recorded per K, sweep continues
            scores.append(BridgeScore(k=k, log_marginal_likelihood=np.nan,
                                      standard_error=np.nan, error=str(exc)))
            continue
        scores.append(BridgeScore(
            k=k, log_marginal_likelihood=est.log_marginal_likelihood,
            standard_error=est.standard_error))
        params_by_k[k] = posterior_mode(chain)
    usable = [s for s in scores if s.error is None]
    if not usable:
        raise BridgeFailureError(
            "all state counts failed: " +
            "; ".join(f"K={s.k}: {s.error}" for s in scores))
    best = max(usable, key=lambda s: s.log_marginal_likelihood)
    return BridgeTable(scores=tuple(scores), best_k=best.k,
                       params_by_k=params_by_k)
