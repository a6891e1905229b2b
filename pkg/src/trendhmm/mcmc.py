"""Bayesian learning for the latent-trend HMM by data-augmented MCMC.

Each sweep forward-filter backward-samples the latent path, then draws the
parameter blocks from their conjugate conditionals. The conjugate forms
target the plain-Gaussian emission, while the model emits the
grid-renormalized pmf, so the mean and variance draws are
Metropolis-corrected with the normalizer ratio (S_old/S_new)^n_k; the
transition draw is corrected for the initial-state factor because pi is
tied to the ergodic distribution of A rather than sampled separately. A
random label permutation closes every sweep so the chain visits all K!
posterior modes.

State variances carry either a fixed-scale inverse-gamma prior (conjugate
mode, closed-form evidence available for K=1) or the default hierarchical
one where the scale itself is gamma-distributed; in the latter case the
stored log posterior integrates the hyperparameter out analytically so
downstream marginal-likelihood work sees a density over theta alone.
Variance draws are truncated below at the grid floor via the inverse-cdf
of the precision so every stored draw is a valid parameter set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import _kernels
from .exceptions import (InsufficientDataError, InvalidParameterError,
                         SamplerError)
from .grid import TrendGrid, log_discretized_gaussian_pmf
from .params import HmmParams, stationary_distribution
from .validation import check_returns


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 2000
    run_length: int = 10000
    seed: int = 0
    permute: bool = True

    def __post_init__(self):
        if self.burn_in < 0:
            raise InvalidParameterError("burn_in must be >= 0")
        if self.run_length <= self.burn_in:
            raise InvalidParameterError("run_length must exceed burn_in")


@dataclass(frozen=True)
class McmcPrior:
    """Prior settings; None fields resolve against the data.

    Transition rows are Dirichlet with diagonal concentration ``e_diag``
    and off-diagonal ``e_off`` (default 1/(K-1)); keeping e_diag > e_off
    bounds the chain away from a plain mixture. State means are normal,
    centered on the data mean, with variance ``mean_var`` defaulting to 4x
    the data variance. State variances are inverse-gamma with shape
    ``variance_shape``; by default the scale is hierarchical,
    Gamma(hyper_shape, rate matched so the implied variance scale equals
    the data variance). Setting ``variance_scale`` fixes the scale instead,
    and ``conjugate_scaling`` switches the mean prior to the scaled form
    N(center, sigma2/conjugate_scaling), the fully conjugate pairing.
    """

    e_diag: float = 4.0
    e_off: float | None = None
    mean_center: float | None = None
    mean_var: float | None = None
    variance_shape: float = 2.5
    variance_scale: float | None = None
    hyper_shape: float = 0.5
    conjugate_scaling: float | None = None

    def __post_init__(self):
        if self.e_diag <= 0:
            raise InvalidParameterError("e_diag must be positive")
        if self.e_off is not None and not 0 < self.e_off < self.e_diag:
            raise InvalidParameterError(
                "e_off must be in (0, e_diag): the sticky-diagonal prior is "
                "what separates the HMM from a plain mixture")
        if self.variance_shape <= 0:
            raise InvalidParameterError("variance_shape must be positive")
        if self.hyper_shape <= 0:
            raise InvalidParameterError("hyper_shape must be positive")
        if self.conjugate_scaling is not None:
            if self.conjugate_scaling <= 0:
                raise InvalidParameterError("conjugate_scaling must be > 0")
            if self.mean_var is not None:
                raise InvalidParameterError(
                    "conjugate_scaling replaces mean_var; set only one")
        if self.variance_scale is None and self.variance_shape <= 1:
            raise InvalidParameterError(
                "hierarchical variance prior needs variance_shape > 1 to "
                "match its scale to the data variance")

    def resolve(self, returns, n_states: int, grid: TrendGrid
                ) -> "ResolvedMcmcPrior":
        returns = check_returns(returns)
        K = int(n_states)
        if K < 1:
            raise InvalidParameterError("n_states must be >= 1")
        e_off = self.e_off if self.e_off is not None else \
            (1.0 / (K - 1) if K > 1 else 1.0)
        if e_off >= self.e_diag:
            raise InvalidParameterError("resolved e_off must stay below e_diag")
        e = np.full((K, K), e_off)
        np.fill_diagonal(e, self.e_diag)

        data_var = max(float(returns.var()), grid.variance_floor)
        b0 = float(returns.mean()) if self.mean_center is None \
            else float(self.mean_center)
        mean_var = None
        if self.conjugate_scaling is None:
            mean_var = 4.0 * data_var if self.mean_var is None \
                else float(self.mean_var)
            if mean_var <= 0:
                raise InvalidParameterError("mean_var must be positive")

        hyper_rate = None
        if self.variance_scale is None:
            hyper_rate = self.hyper_shape / ((self.variance_shape - 1.0)
                                             * data_var)
        elif self.variance_scale <= 0:
            raise InvalidParameterError("variance_scale must be positive")

        return ResolvedMcmcPrior(
            n_states=K, grid=grid, e=e, mean_center=b0, mean_var=mean_var,
            conjugate_scaling=self.conjugate_scaling,
            variance_shape=self.variance_shape,
            variance_scale=self.variance_scale,
            hyper_shape=self.hyper_shape, hyper_rate=hyper_rate)


@dataclass(frozen=True)
class ResolvedMcmcPrior:
    """Concrete prior for one (data, K, grid) triple; all densities proper."""

    n_states: int
    grid: TrendGrid
    e: np.ndarray
    mean_center: float
    mean_var: float | None          # None in the conjugate-scaling mode
    conjugate_scaling: float | None
    variance_shape: float
    variance_scale: float | None    # None -> hierarchical scale
    hyper_shape: float
    hyper_rate: float | None

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        e.setflags(write=False)
        object.__setattr__(self, "e", e)

    @property
    def hierarchical(self) -> bool:
        return self.variance_scale is None

    def log_density(self, A: np.ndarray, mu: np.ndarray,
                    sigma2: np.ndarray) -> float:
        """log p(theta) with every normalization constant included, so
        values are comparable across K. The hierarchical variance scale is
        integrated out in closed form. The grid-floor truncation of the
        variance prior is left unnormalized: its mass is far below any
        tolerance used downstream."""
        K = self.n_states
        out = 0.0
        for i in range(K):
            out += (gammaln(self.e[i].sum()) - gammaln(self.e[i]).sum()
                    + ((self.e[i] - 1.0) * np.log(A[i])).sum())

        if self.conjugate_scaling is not None:
            var = sigma2 / self.conjugate_scaling
            out += float(-0.5 * (np.log(2.0 * np.pi * var)
                                 + (mu - self.mean_center) ** 2 / var).sum())
        else:
            out += float(-0.5 * (np.log(2.0 * np.pi * self.mean_var)
                                 + (mu - self.mean_center) ** 2
                                 / self.mean_var).sum())

        c0 = self.variance_shape
        if self.hierarchical:
            g0, rate = self.hyper_shape, self.hyper_rate
            out += (-(c0 + 1.0) * np.log(sigma2).sum()
                    - K * gammaln(c0)
                    + g0 * np.log(rate) - gammaln(g0)
                    + gammaln(K * c0 + g0)
                    - (K * c0 + g0) * np.log(rate + (1.0 / sigma2).sum()))
        else:
            C0 = self.variance_scale
            out += float((c0 * np.log(C0) - gammaln(c0)
                          - (c0 + 1.0) * np.log(sigma2)
                          - C0 / sigma2).sum())
        return float(out)


@dataclass(frozen=True)
class ConditionalStats:
    """Per-draw parameters of the complete-data conditional posteriors,
    recorded so an importance density can be assembled from the chain: one
    mixture component per stored sweep, sitting exactly on that sweep's
    conditional."""

    dirichlet: np.ndarray   # (D, K, K) row concentrations
    mu_mean: np.ndarray     # (D, K)
    mu_var: np.ndarray      # (D, K)
    s2_shape: np.ndarray    # (D, K)
    s2_scale: np.ndarray    # (D, K)

    def __post_init__(self):
        for name in ("dirichlet", "mu_mean", "mu_var", "s2_shape",
                     "s2_scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class McmcChain:
    """Post-burn-in draws; immutable once produced."""

    A: np.ndarray              # (D, K, K)
    pi: np.ndarray             # (D, K)
    mu: np.ndarray             # (D, K)
    sigma2: np.ndarray         # (D, K)
    log_posterior: np.ndarray  # (D,) log p(data|theta) + log p(theta)
    burn_in: int
    run_length: int
    seed: int
    grid: TrendGrid
    acceptance: dict
    conditionals: ConditionalStats

    def __post_init__(self):
        for name in ("A", "pi", "mu", "sigma2", "log_posterior"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n_draws != self.run_length - self.burn_in:
            raise InvalidParameterError(
                "draw count must equal run_length - burn_in")

    @property
    def n_draws(self) -> int:
        return self.log_posterior.size

    @property
    def n_states(self) -> int:
        return self.mu.shape[1]

    def params(self, i: int) -> HmmParams:
        return HmmParams(A=self.A[i], pi=self.pi[i], mu=self.mu[i],
                         sigma2=self.sigma2[i], grid=self.grid)

    def to_csv(self, path) -> None:
        K = self.n_states
        header = ([f"a_{i}_{j}" for i in range(K) for j in range(K)]
                  + [f"pi_{k}" for k in range(K)]
                  + [f"mu_{k}" for k in range(K)]
                  + [f"sigma2_{k}" for k in range(K)]
                  + ["log_posterior"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for d in range(self.n_draws):
                w.writerow(np.concatenate([
                    self.A[d].ravel(), self.pi[d], self.mu[d],
                    self.sigma2[d], [self.log_posterior[d]]]).tolist())


# Conjugate proposals alone can trap the chain: at a mean parked near the
# grid edge the acceptance ratio collapses to the normalizer term, which
# rewards staying put no matter how absurd the likelihood there is. Mixing a
# small prior-shaped component into each proposal bounds the importance
# ratio, so the first in-bulk proposal escapes such a state immediately.
_DEFENSIVE_WEIGHT = 0.05
_LOG_DEFENSIVE = np.log(_DEFENSIVE_WEIGHT)
_LOG_MAIN = np.log(1.0 - _DEFENSIVE_WEIGHT)


def _log_normal(x: float, mean: float, var: float) -> float:
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def _log_inv_gamma(x: float, shape: float, scale: float) -> float:
    return (shape * np.log(scale) - gammaln(shape)
            - (shape + 1.0) * np.log(x) - scale / x)


def _log_normalizer(grid_values: np.ndarray, mu: float, sigma2: float) -> float:
    """log sum over the grid of the Gaussian density (the emission pmf's
    denominator), prefactor included since sigma2 varies between calls."""
    z = -0.5 * (grid_values - mu) ** 2 / sigma2
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum())
                 - 0.5 * np.log(2.0 * np.pi * sigma2))


def _draw_trunc_inv_gamma(rng, shape: float, scale: float,
                          floor: float) -> float:
    """Inverse-gamma draw conditioned on the result being >= floor, via the
    inverse cdf of the precision."""
    cap = stats.gamma.cdf(1.0 / floor, a=shape, scale=1.0 / scale)
    if not cap > 0.0:
        # conditional mass is (numerically) entirely below the floor
        return floor
    lam = stats.gamma.ppf(rng.random() * cap, a=shape, scale=1.0 / scale)
    if not np.isfinite(lam) or lam <= 0.0:
        return floor
    return max(1.0 / float(lam), floor)


def _log_emission(grid: TrendGrid, mu: np.ndarray,
                  sigma2: np.ndarray) -> np.ndarray:
    return np.stack([log_discretized_gaussian_pmf(grid, float(m), float(s))
                     for m, s in zip(mu, sigma2)])


def log_posterior_unnorm(returns, params: HmmParams,
                         prior: ResolvedMcmcPrior) -> float:
    """log p(data | theta) + log p(theta); the bridge-sampling target."""
    returns = check_returns(returns)
    obs_idx = params.grid.snap_index(returns)
    ll, deg = _kernels.loglik_log(params.log_pi, params.log_A,
                                  params.log_emission, obs_idx)
    if deg != _kernels.NO_DEGENERACY:
        return -np.inf
    return float(ll) + prior.log_density(params.A, params.mu, params.sigma2)


def mcmc_sample(returns, n_states: int, grid: TrendGrid,
                prior: McmcPrior | ResolvedMcmcPrior | None = None,
                config: McmcConfig = McmcConfig()) -> McmcChain:
    """Draw from p(theta | data, K); deterministic given the seed.

    Returns the post-burn-in chain. Raises SamplerError if any stored draw
    has a non-finite log posterior.
    """
    returns = check_returns(returns)
    K = int(n_states)
    if K < 1:
        raise InvalidParameterError(f"n_states must be >= 1, got {n_states}")
    if returns.size < 10 * K:
        raise InsufficientDataError(
            f"need at least 10*K={10 * K} observations, got {returns.size}")
    if prior is None:
        prior = McmcPrior()
    if isinstance(prior, McmcPrior):
        prior = prior.resolve(returns, K, grid)
    if prior.n_states != K:
        raise InvalidParameterError("prior resolved for a different K")

    rng = np.random.default_rng(config.seed)
    obs_idx = grid.snap_index(returns)
    y = grid.values[obs_idx]
    T = y.size
    floor = grid.variance_floor
    c0 = prior.variance_shape
    b0 = prior.mean_center
    gvals = grid.values

    # start the chain at a prior draw
    A = np.vstack([rng.dirichlet(prior.e[i]) for i in range(K)])
    C0 = prior.variance_scale if not prior.hierarchical else \
        float(rng.gamma(prior.hyper_shape, 1.0 / prior.hyper_rate))
    sigma2 = np.array([_draw_trunc_inv_gamma(rng, c0, C0, floor)
                       for _ in range(K)])
    if prior.conjugate_scaling is not None:
        mu = b0 + rng.standard_normal(K) * np.sqrt(
            sigma2 / prior.conjugate_scaling)
    else:
        mu = b0 + rng.standard_normal(K) * np.sqrt(prior.mean_var)

    n_keep = config.run_length - config.burn_in
    out_A = np.empty((n_keep, K, K))
    out_pi = np.empty((n_keep, K))
    out_mu = np.empty((n_keep, K))
    out_s2 = np.empty((n_keep, K))
    out_lp = np.empty(n_keep)
    out_dir = np.empty((n_keep, K, K))
    out_mm = np.empty((n_keep, K))
    out_mv = np.empty((n_keep, K))
    out_sh = np.empty((n_keep, K))
    out_sc = np.empty((n_keep, K))
    tried = np.zeros(3)
    accepted = np.zeros(3)

    for sweep in range(config.run_length):
        pi = stationary_distribution(A)
        pi = np.clip(pi, 1e-300, None)
        pi /= pi.sum()
        log_em = _log_emission(grid, mu, sigma2)
        states, deg = _kernels.ffbs(np.log(pi), np.log(A), log_em, obs_idx,
                                    rng.random(T))
        if deg != _kernels.NO_DEGENERACY:
            raise SamplerError(f"degenerate path probability at t={deg}")

        n = np.bincount(states, minlength=K).astype(np.float64)
        s1 = np.bincount(states, weights=y, minlength=K)
        s2 = np.bincount(states, weights=y * y, minlength=K)
        trans = np.zeros((K, K))
        np.add.at(trans, (states[:-1], states[1:]), 1.0)

        if K > 1:
            A_prop = np.vstack([rng.dirichlet(prior.e[i] + trans[i])
                                for i in range(K)])
            pi_prop = stationary_distribution(A_prop)
            pi_prop = np.clip(pi_prop, 1e-300, None)
            pi_prop /= pi_prop.sum()
            tried[0] += 1
            # conjugate proposal cancels everything but the pi factor
            if np.log(rng.random()) < (np.log(pi_prop[states[0]])
                                       - np.log(pi[states[0]])):
                A = A_prop
                accepted[0] += 1

        for k in range(K):
            if prior.conjugate_scaling is not None:
                kn = prior.conjugate_scaling + n[k]
                post_mean = (prior.conjugate_scaling * b0 + s1[k]) / kn
                post_var = sigma2[k] / kn
                prior_var = sigma2[k] / prior.conjugate_scaling
            else:
                prec = 1.0 / prior.mean_var + n[k] / sigma2[k]
                post_mean = (b0 / prior.mean_var + s1[k] / sigma2[k]) / prec
                post_var = 1.0 / prec
                prior_var = prior.mean_var
            if rng.random() < _DEFENSIVE_WEIGHT:
                mu_prop = float(rng.normal(b0, np.sqrt(prior_var)))
            else:
                mu_prop = float(rng.normal(post_mean, np.sqrt(post_var)))
            tried[1] += 1

            def mu_score(m):
                target = (-(n[k] * m * m - 2.0 * m * s1[k])
                          / (2.0 * sigma2[k])
                          - n[k] * _log_normalizer(gvals, m, sigma2[k])
                          + _log_normal(m, b0, prior_var))
                g = np.logaddexp(
                    _LOG_MAIN + _log_normal(m, post_mean, post_var),
                    _LOG_DEFENSIVE + _log_normal(m, b0, prior_var))
                return target - g

            if np.log(rng.random()) < mu_score(mu_prop) - mu_score(mu[k]):
                mu[k] = mu_prop
                accepted[1] += 1

        for k in range(K):
            sse = max(s2[k] - 2.0 * mu[k] * s1[k] + n[k] * mu[k] ** 2, 0.0)
            shape = c0 + 0.5 * n[k]
            scale = C0 + 0.5 * sse
            if prior.conjugate_scaling is not None:
                shape += 0.5
                scale += 0.5 * prior.conjugate_scaling * (mu[k] - b0) ** 2
            if rng.random() < _DEFENSIVE_WEIGHT:
                s2_prop = 1.0 / float(rng.gamma(c0, 1.0 / C0))
            else:
                s2_prop = 1.0 / float(rng.gamma(shape, 1.0 / scale))
            tried[2] += 1
            if s2_prop < floor:
                continue  # outside the truncated prior's support

            def s2_score(v):
                target = (-(shape + 1.0) * np.log(v) - scale / v
                          - n[k] * _log_normalizer(gvals, mu[k], v))
                g = np.logaddexp(
                    _LOG_MAIN + _log_inv_gamma(v, shape, scale),
                    _LOG_DEFENSIVE + _log_inv_gamma(v, c0, C0))
                return target - g

            if np.log(rng.random()) < s2_score(s2_prop) - s2_score(sigma2[k]):
                sigma2[k] = s2_prop
                accepted[2] += 1

        if prior.hierarchical:
            C0 = float(rng.gamma(prior.hyper_shape + K * c0,
                                 1.0 / (prior.hyper_rate
                                        + (1.0 / sigma2).sum())))

        if config.permute and K > 1:
            perm = rng.permutation(K)
            A = A[np.ix_(perm, perm)]
            mu = mu[perm]
            sigma2 = sigma2[perm]
            n, s1, s2 = n[perm], s1[perm], s2[perm]
            trans = trans[np.ix_(perm, perm)]

        if sweep >= config.burn_in:
            d = sweep - config.burn_in
            pi = stationary_distribution(A)
            pi = np.clip(pi, 1e-300, None)
            pi /= pi.sum()
            log_em = _log_emission(grid, mu, sigma2)
            ll, deg = _kernels.loglik_log(np.log(pi), np.log(A), log_em,
                                          obs_idx)
            lp = -np.inf if deg != _kernels.NO_DEGENERACY else \
                float(ll) + prior.log_density(A, mu, sigma2)
            if not np.isfinite(lp):
                raise SamplerError(
                    f"non-finite log posterior at draw {d} (sweep {sweep})")
            out_A[d] = A
            out_pi[d] = pi
            out_mu[d] = mu
            out_s2[d] = sigma2
            out_lp[d] = lp
            # record this sweep's complete-data conditionals so a chain-based
            # importance density can be built later without rerunning
            out_dir[d] = prior.e + trans
            if prior.conjugate_scaling is not None:
                kn = prior.conjugate_scaling + n
                out_mm[d] = (prior.conjugate_scaling * b0 + s1) / kn
                out_mv[d] = sigma2 / kn
            else:
                prec = 1.0 / prior.mean_var + n / sigma2
                out_mm[d] = (b0 / prior.mean_var + s1 / sigma2) / prec
                out_mv[d] = 1.0 / prec
            sse = np.maximum(s2 - 2.0 * mu * s1 + n * mu * mu, 0.0)
            out_sh[d] = c0 + 0.5 * n
            out_sc[d] = C0 + 0.5 * sse
            if prior.conjugate_scaling is not None:
                out_sh[d] += 0.5
                out_sc[d] += 0.5 * prior.conjugate_scaling * (mu - b0) ** 2

    acceptance = {"transitions": float(accepted[0] / tried[0]) if tried[0]
                  else 1.0,
                  "means": float(accepted[1] / tried[1]),
                  "variances": float(accepted[2] / tried[2])}
    conditionals = ConditionalStats(dirichlet=out_dir, mu_mean=out_mm,
                                    mu_var=out_mv, s2_shape=out_sh,
                                    s2_scale=out_sc)
    return McmcChain(A=out_A, pi=out_pi, mu=out_mu, sigma2=out_s2,
                     log_posterior=out_lp, burn_in=config.burn_in,
                     run_length=config.run_length, seed=config.seed,
                     grid=grid, acceptance=acceptance,
                     conditionals=conditionals)


def posterior_mode(chain: McmcChain) -> HmmParams:
    """The stored draw with the highest log posterior; earliest wins ties."""
    if chain.n_draws < 1:
        raise InvalidParameterError("chain has no draws")
    return chain.params(int(np.argmax(chain.log_posterior)))


def split_zscore(values) -> float:
    """|mean difference| between the two halves of a trace, in combined
    standard errors; the stabilization check for ergodic averages."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 4:
        raise InvalidParameterError("need at least 4 values")
    half = v.size // 2
    a, b = v[:half], v[half:]
    se2 = a.var(ddof=1) / a.size + b.var(ddof=1) / b.size
    if se2 == 0.0:
        return 0.0
    return float(abs(a.mean() - b.mean()) / np.sqrt(se2))
