"""Baum-Welch EM for the latent-trend HMM, plus penalized model selection.

The E-step runs a log-space forward-backward pass over the snapped return
sequence. The M-step starts from the closed-form weighted-mean and
weighted-variance updates, then refines each state's (mu, sigma2) against
the exact expected log-emission including the grid-renormalization term
the closed form ignores; the term matters whenever the grid edge sits
within a few sigma of a state mean, which is the normal situation for grids
sized from data. The refined update never scores below the previous
parameters, so the trace is non-decreasing by construction; a guard with
1e-9 slack still stops the fit (keeping the best iterate) if round-off ever
breaks that. The transition matrix is re-estimated from expected transition
counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import _kernels
from .exceptions import (DegenerateFitError, DegenerateLikelihoodError,
                         InsufficientDataError, InvalidParameterError)
from .grid import TrendGrid
from .params import HmmParams
from .plr import Segmentation, default_theta
from .validation import check_returns

MONOTONE_SLACK = 1e-9

INIT_MODES = ("flat", "params", "segmentation")


@dataclass(frozen=True)
class EmConfig:
    """Knobs for one EM fit.

    ``tol`` is the relative log-likelihood improvement below which the fit
    is declared converged; ``variance_floor`` of None means the grid's
    alpha**2 / 2.
    """

    max_iterations: int = 200
    tol: float = 1e-6
    tied_variance: bool = False
    init: str = "flat"
    variance_floor: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")
        if self.init not in INIT_MODES:
            raise InvalidParameterError(f"init must be one of {INIT_MODES}")


@dataclass(frozen=True)
class EmTrace:
    """Observed log-likelihood per evaluated iterate; non-decreasing within
    the 1e-9 slack by construction."""

    logliks: np.ndarray
    converged: bool

    def __post_init__(self):
        ll = np.asarray(self.logliks, dtype=np.float64)
        ll.setflags(write=False)
        object.__setattr__(self, "logliks", ll)

    @property
    def n_iterations(self) -> int:
        return self.logliks.size

    @property
    def final_loglik(self) -> float:
        return float(self.logliks[-1])


def forward_backward(returns, params: HmmParams):
    """Log-space forward/backward pass.

    Returns (log_alpha, log_beta, gamma, loglik): gamma rows are the
    smoothed state probabilities in linear space, each summing to 1.
    """
    returns = check_returns(returns)
    obs_idx = params.grid.snap_index(returns)
    log_alpha, loglik, deg = _kernels.forward_log(
        params.log_pi, params.log_A, params.log_emission, obs_idx)
    if deg != _kernels.NO_DEGENERACY:
        raise DegenerateLikelihoodError(int(deg))
    log_beta = _kernels.backward_log(params.log_A, params.log_emission, obs_idx)
    log_gamma = log_alpha + log_beta
    log_gamma -= log_gamma.max(axis=1, keepdims=True)
    gamma = np.exp(log_gamma)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return log_alpha, log_beta, gamma, float(loglik)


def flat_start(returns: np.ndarray, n_states: int, grid: TrendGrid,
               floor: float | None = None) -> HmmParams:
    """Deterministic uninformative initialization: uniform transitions and
    start, emissions at the global moments with the state means nudged apart
    by k-indexed offsets of up to 0.1 global standard deviations."""
    K = n_states
    if floor is None:
        floor = grid.variance_floor
    g_mean = float(returns.mean())
    g_std = float(returns.std())
    offsets = np.linspace(-1.0, 1.0, K) if K > 1 else np.zeros(1)
    mu = g_mean + 0.1 * g_std * offsets
    sigma2 = np.full(K, max(g_std ** 2, floor))
    A = np.full((K, K), 1.0 / K)
    pi = np.full(K, 1.0 / K)
    return HmmParams(A=A, pi=pi, mu=mu, sigma2=sigma2, grid=grid)


def _emission_score(mu: float, sigma2: float, weight: float, m1: float,
                    m2: float, grid_values: np.ndarray) -> float:
    """Expected log-emission of one state under the E-step weights.

    Per-weight form; the 0.5*log(2*pi*sigma2) of the Gaussian cancels
    against the same factor inside the grid normalizer, leaving the
    weighted quadratic and the log-sum over the grid.
    """
    quad = max(m2 - 2.0 * mu * m1 + mu * mu, 0.0)
    lse = logsumexp(-0.5 * (grid_values - mu) ** 2 / sigma2)
    return weight * (-quad / (2.0 * sigma2) - lse)


def _edge_clearance(mu: float, sigma2: float, grid_values: np.ndarray) -> float:
    """Distance from the mean to the nearer grid edge, in state sigmas."""
    sd = np.sqrt(sigma2)
    return min(grid_values[-1] - mu, mu - grid_values[0]) / sd


def _refine_state(weight: float, m1: float, m2: float, start: tuple,
                  prev: tuple, floor: float,
                  grid_values: np.ndarray) -> tuple:
    """Exact single-state M-step: polish the closed-form update against the
    normalizer-aware objective and return the best of {previous iterate,
    closed form, polished}, so the objective never decreases."""
    if _edge_clearance(start[0], start[1], grid_values) >= 6.0:
        # normalizer flat to ~2*Phi(-6) per observation; the closed form is
        # the exact maximizer far inside an envelope the relative tol
        # check dominates, so skip the polish
        return start
    alpha = grid_values[1] - grid_values[0] if grid_values.size > 1 else 1.0

    def neg(x):
        mu = x[0] * alpha
        sigma2 = floor + np.exp(min(x[1], 700.0))
        return -_emission_score(mu, sigma2, 1.0, m1, m2, grid_values)

    x0 = np.array([start[0] / alpha,
                   np.log(max(start[1] - floor, 1e-12 * floor))])
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"maxiter": 150, "xatol": 1e-6, "fatol": 1e-10})
    polished = (res.x[0] * alpha, floor + np.exp(min(res.x[1], 700.0)))
    candidates = (prev, start, polished)
    scores = [_emission_score(c[0], c[1], weight, m1, m2, grid_values)
              for c in candidates]
    return candidates[int(np.argmax(scores))]


def _finish_m_step(mu: np.ndarray, sigma2: np.ndarray, gamma: np.ndarray,
                   counts: np.ndarray, prev: HmmParams) -> HmmParams:
    A = prev.A.copy()
    row_sums = counts.sum(axis=1)
    rows_alive = row_sums > 1e-12
    A[rows_alive] = counts[rows_alive] / row_sums[rows_alive, None]
    A /= A.sum(axis=1, keepdims=True)  # remove round-off drift

    pi = np.clip(gamma[0], 0.0, None)
    pi /= pi.sum()
    return HmmParams(A=A, pi=pi, mu=mu, sigma2=sigma2, grid=prev.grid)


def _m_step(y: np.ndarray, gamma: np.ndarray, counts: np.ndarray,
            prev: HmmParams, floor: float, tied: bool) -> HmmParams:
    # y must be the snapped observations: the E-step scores grid cells, so
    # moments taken from raw off-grid returns would maximize a different
    # objective and can push the likelihood downhill
    K = prev.n_states
    denom = gamma.sum(axis=0)
    alive = denom > 1e-12
    grid_values = prev.grid.values

    m1 = np.where(alive, (gamma * y[:, None]).sum(axis=0)
                  / np.where(alive, denom, 1.0), prev.mu)
    m2 = np.where(alive, (gamma * y[:, None] ** 2).sum(axis=0)
                  / np.where(alive, denom, 1.0),
                  prev.sigma2 + prev.mu ** 2)

    mu = m1.copy()
    sigma2 = np.maximum(m2 - m1 ** 2, floor)
    if tied:
        pooled = float((gamma * (y[:, None] - mu[None, :]) ** 2).sum()
                       / y.size)
        tied_s2 = max(pooled, floor)
        if min(_edge_clearance(m, tied_s2, grid_values) for m in mu) >= 6.0:
            sigma2[:] = tied_s2
            return _finish_m_step(mu, sigma2, gamma, counts, prev)

        def total_score(mus, s2):
            return sum(_emission_score(mus[k], s2, denom[k], m1[k], m2[k],
                                       grid_values) for k in range(K))

        def neg(x):
            s2 = floor + np.exp(min(x[-1], 700.0))
            return -total_score(x[:-1], s2)

        x0 = np.append(mu, np.log(max(tied_s2 - floor, 1e-12 * floor)))
        res = minimize(neg, x0, method="Nelder-Mead",
                       options={"maxiter": 400 * (K + 1), "fatol": 1e-12})
        candidates = [(prev.mu, float(prev.sigma2.mean())),
                      (mu, tied_s2),
                      (res.x[:-1], floor + np.exp(min(res.x[-1], 700.0)))]
        scores = [total_score(c_mu, c_s2) for c_mu, c_s2 in candidates]
        best_mu, best_s2 = candidates[int(np.argmax(scores))]
        mu = np.asarray(best_mu, dtype=np.float64).copy()
        sigma2 = np.full(K, best_s2)
    else:
        for k in range(K):
            if not alive[k]:
                mu[k], sigma2[k] = prev.mu[k], prev.sigma2[k]
                continue
            mu[k], sigma2[k] = _refine_state(
                denom[k], m1[k], m2[k], (mu[k], sigma2[k]),
                (prev.mu[k], prev.sigma2[k]), floor, grid_values)

    return _finish_m_step(mu, sigma2, gamma, counts, prev)


def baum_welch(returns, n_states: int, grid: TrendGrid,
               config: EmConfig = EmConfig(),
               init_params: HmmParams | None = None,
               init_segmentation: Segmentation | None = None
               ) -> tuple[HmmParams, EmTrace]:
    """Maximum-likelihood fit of a K-state model by EM.

    Parameters
    ----------
    returns : array-like
        Observed one-period returns; snapped to the grid for emission
        evaluation.
    n_states : int
        Number of latent states K.
    grid : TrendGrid
        Return grid shared by all states.
    config : EmConfig
    init_params : HmmParams, optional
        Starting point when ``config.init == "params"``.
    init_segmentation : Segmentation, optional
        Trend segmentation seeding the start when
        ``config.init == "segmentation"``.

    Returns
    -------
    (HmmParams, EmTrace)
    """
    returns = check_returns(returns)
    K = int(n_states)
    if K < 1:
        raise InvalidParameterError(f"n_states must be >= 1, got {n_states}")
    if returns.size < 10 * K:
        raise InsufficientDataError(
            f"need at least 10*K={10 * K} observations, got {returns.size}")
    obs_idx = grid.snap_index(returns)
    y_snap = grid.values[obs_idx]
    support = np.unique(obs_idx).size
    if support < K:
        raise DegenerateFitError(
            f"{K} states exceed the {support} distinct grid values in the data")
    floor = grid.variance_floor if config.variance_floor is None \
        else float(config.variance_floor)

    if config.init == "flat":
        params = flat_start(returns, K, grid, floor)
    elif config.init == "params":
        if init_params is None:
            raise InvalidParameterError('init="params" requires init_params')
        if init_params.n_states != K:
            raise InvalidParameterError("init_params has the wrong state count")
        params = init_params
    else:
        if init_segmentation is None:
            raise InvalidParameterError(
                'init="segmentation" requires init_segmentation')
        params = default_theta(init_segmentation, grid, n_states=K)

    def estep(p: HmmParams):
        gamma, counts, ll, deg = _kernels.expected_stats(
            p.log_pi, p.log_A, p.log_emission, obs_idx)
        if deg != _kernels.NO_DEGENERACY:
            raise DegenerateLikelihoodError(int(deg))
        return gamma, counts, float(ll)

    logliks: list[float] = []
    prev_params = params
    prev_ll = -np.inf
    converged = False
    for it in range(config.max_iterations):
        gamma, counts, ll = estep(params)
        if logliks and ll < prev_ll - MONOTONE_SLACK:
            # surrogate/emission mismatch floor: keep the best iterate
            params = prev_params
            converged = True
            break
        logliks.append(ll)
        if logliks[:-1] and ll - prev_ll <= config.tol * abs(prev_ll):
            converged = True
            break
        prev_params, prev_ll = params, ll
        params = _m_step(y_snap, gamma, counts, params, floor,
                         config.tied_variance)
    else:
        _, _, ll = estep(params)
        if ll < prev_ll - MONOTONE_SLACK:
            params = prev_params
        else:
            logliks.append(ll)
    return params, EmTrace(logliks=np.array(logliks), converged=converged)


def n_free_parameters(n_states: int, tied_variance: bool = False) -> int:
    """Free parameters of a K-state model: K(K-1) transition, K-1 initial,
    2K emission (K+1 when variances are tied)."""
    K = int(n_states)
    emission = (K + 1) if tied_variance else 2 * K
    return K * (K - 1) + (K - 1) + emission


@dataclass(frozen=True)
class KScore:
    k: int
    loglik: float
    aic: float
    bic: float
    iterations: int
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class ScoreTable:
    """Per-K fit scores from a state-count sweep."""

    scores: tuple[KScore, ...]
    criterion: str
    best_k: int
    params_by_k: dict = field(repr=False, default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "loglik", "AIC", "BIC", "iterations", "converged"])
            for s in self.scores:
                w.writerow([s.k, s.loglik, s.aic, s.bic, s.iterations,
                            s.converged])

    @property
    def best_params(self) -> HmmParams:
        return self.params_by_k[self.best_k]


def select_k_penalized(returns, grid: TrendGrid, k_range=range(1, 51),
                       criterion: str = "bic",
                       config: EmConfig = EmConfig()) -> ScoreTable:
    """Sweep state counts and pick the one minimizing AIC or BIC.

    Ill-posed K values (too little data or support) are recorded with their
    error message and excluded from the selection.
    """
    criterion = criterion.lower()
    if criterion not in ("aic", "bic"):
        raise InvalidParameterError(f"criterion must be aic or bic, got {criterion!r}")
    returns = check_returns(returns)
    T = returns.size
    scores = []
    params_by_k = {}
    for k in k_range:
        try:
            params, trace = baum_welch(returns, k, grid, config)
        except (DegenerateFitError, InsufficientDataError,
                DegenerateLikelihoodError) as exc:
            scores.append(KScore(k=int(k), loglik=np.nan, aic=np.nan,
                                 bic=np.nan, iterations=0, converged=False,
                                 error=str(exc)))
            continue
        ll = trace.final_loglik
        p = n_free_parameters(k, config.tied_variance)
        scores.append(KScore(k=int(k), loglik=ll, aic=2.0 * p - 2.0 * ll,
                             bic=p * np.log(T) - 2.0 * ll,
                             iterations=trace.n_iterations,
                             converged=trace.converged))
        params_by_k[int(k)] = params
    usable = [s for s in scores if s.error is None]
    if not usable:
        raise DegenerateFitError("no state count in the sweep produced a fit")
    best = min(usable, key=lambda s: getattr(s, criterion))
    return ScoreTable(scores=tuple(scores), criterion=criterion,
                      best_k=best.k, params_by_k=params_by_k)
