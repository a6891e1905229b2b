"""sklearn-shaped facade over the learners and the forward filter.

``TrendHmm`` bundles grid resolution, one of the three learners (plr, bw,
mcmc) and signal generation behind fit/predict; ``TrendIohmm`` does the
same for the input-switched model.  Constructor arguments are stored
verbatim (sklearn contract), validation happens at fit time, and fitted
state carries a trailing underscore so ``sklearn.base.clone`` and
``check_is_fitted`` behave as expected.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baumwelch import EmConfig, baum_welch
from .exceptions import InsufficientDataError, InvalidParameterError
from .filtering import (TransferFunction, log_likelihood, run_hmm_signal,
                        _signal_core)
from .grid import TrendGrid
from .iohmm import iohmm_learn, iohmm_signal
from .mcmc import McmcConfig, mcmc_sample, posterior_mode
from .plr import default_theta, plr_segment
from .sideinfo import PredictorSeries, check_aligned_predictor
from .splines import SplinePredictor
from .validation import check_returns

LEARNERS = ("plr", "bw", "mcmc")

#: widest grid the alpha-inference heuristic will produce (half-width in ticks)
_MAX_INFERRED_HALF = 512


def resolve_grid(returns, alpha=None, omega=None) -> TrendGrid:
    """Grid from explicit spacing or from the data.

    With ``alpha`` absent the smallest nonzero return magnitude is taken as
    the tick spacing — exact when the data live on a tick grid — capped so
    the inferred grid never exceeds ~2 * 512 + 1 points.  ``omega`` absent
    means the smallest grid covering max(|returns|).
    """
    returns = check_returns(returns)
    if alpha is None:
        nonzero = np.abs(returns[returns != 0.0])
        if nonzero.size == 0:
            raise InsufficientDataError(
                "cannot infer grid spacing from all-zero returns")
        alpha = max(float(nonzero.min()),
                    float(nonzero.max()) / _MAX_INFERRED_HALF)
    if omega is None:
        return TrendGrid.from_returns(returns, alpha=float(alpha))
    return TrendGrid(alpha=float(alpha), omega=float(omega))


class TrendHmm(BaseEstimator):
    """K-state latent-trend model with a position-signal predict step.

    Parameters
    ----------
    n_states : int
        Number of latent trend states.
    method : {"plr", "bw", "mcmc"}
        plr seeds a sticky default from trend segmentation; bw fits by EM;
        mcmc takes the max-posterior Gibbs draw.
    alpha, omega : float, optional
        Return-grid spacing and half-width; inferred from the data when
        omitted.
    transfer, transfer_scale :
        Position transfer function applied to return forecasts.
    max_iterations, tol, tied_variance, init :
        EM knobs (method="bw").
    burn_in, run_length, seed :
        Sampler knobs (method="mcmc").
    alpha_level, min_segment, sticky_beta :
        Segmentation knobs (method="plr").
    """

    def __init__(self, n_states=2, method="bw", alpha=None, omega=None,
                 transfer="sign", transfer_scale=1.0,
                 max_iterations=200, tol=1e-6, tied_variance=False,
                 init="flat", burn_in=2000, run_length=10000, seed=0,
                 alpha_level=0.01, min_segment=10, sticky_beta=0.5):
        self.n_states = n_states
        self.method = method
        self.alpha = alpha
        self.omega = omega
        self.transfer = transfer
        self.transfer_scale = transfer_scale
        self.max_iterations = max_iterations
        self.tol = tol
        self.tied_variance = tied_variance
        self.init = init
        self.burn_in = burn_in
        self.run_length = run_length
        self.seed = seed
        self.alpha_level = alpha_level
        self.min_segment = min_segment
        self.sticky_beta = sticky_beta

    def _transfer(self) -> TransferFunction:
        return TransferFunction(kind=self.transfer, scale=self.transfer_scale)

    def fit(self, X, y=None):
        """Learn model parameters from a return sequence."""
        returns = check_returns(X, name="returns")
        if self.method not in LEARNERS:
            raise InvalidParameterError(
                f"method must be one of {LEARNERS}, got {self.method!r}")
        self._transfer()  # fail fast on a bad transfer spec
        grid = resolve_grid(returns, self.alpha, self.omega)

        if self.method == "bw":
            cfg = EmConfig(max_iterations=self.max_iterations, tol=self.tol,
                           tied_variance=self.tied_variance, init=self.init)
            params, trace = baum_welch(returns, self.n_states, grid, cfg)
            self.trace_ = trace
        elif self.method == "plr":
            # segmentation runs on price levels; any start level works since
            # per-bar trend rates are scale-invariant
            prices = np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
            seg = plr_segment(prices, alpha_level=self.alpha_level,
                              min_segment=self.min_segment)
            params = default_theta(seg, grid, n_states=self.n_states,
                                   beta=self.sticky_beta)
            self.segmentation_ = seg
        else:
            cfg = McmcConfig(burn_in=self.burn_in,
                             run_length=self.run_length, seed=self.seed)
            chain = mcmc_sample(returns, self.n_states, grid, config=cfg)
            params = posterior_mode(chain)
            self.chain_ = chain

        self.grid_ = grid
        self.params_ = params
        return self

    def signal(self, X):
        """Full signal series (positions and return forecasts)."""
        check_is_fitted(self, "params_")
        return run_hmm_signal(check_returns(X, name="returns"), self.params_,
                              self._transfer())

    def predict(self, X):
        """Position signal in [-1, 1] for each observed return."""
        return self.signal(X).values

    def predict_returns(self, X):
        """One-step-ahead conditional return forecasts."""
        return self.signal(X).predictions

    def score(self, X, y=None) -> float:
        """Average log-likelihood per observation under the fitted model."""
        check_is_fitted(self, "params_")
        returns = check_returns(X, name="returns")
        return float(log_likelihood(returns, self.params_)) / returns.size


class TrendIohmm(BaseEstimator):
    """Input-switched trend model: one parameter set per predictor bucket.

    ``spline`` is a fitted zero-mean predictor response whose sign
    structure defines the buckets.  fit/predict take the aligned input
    series through the ``inputs`` keyword since the filter consumes both
    returns and inputs.
    """

    def __init__(self, spline: SplinePredictor = None, n_states=2,
                 alpha=None, omega=None, transfer="sign",
                 transfer_scale=1.0, max_iterations=200, tol=1e-6,
                 tied_variance=False, init="flat"):
        self.spline = spline
        self.n_states = n_states
        self.alpha = alpha
        self.omega = omega
        self.transfer = transfer
        self.transfer_scale = transfer_scale
        self.max_iterations = max_iterations
        self.tol = tol
        self.tied_variance = tied_variance
        self.init = init

    def _transfer(self) -> TransferFunction:
        return TransferFunction(kind=self.transfer, scale=self.transfer_scale)

    def _inputs(self, inputs, returns) -> PredictorSeries:
        if inputs is None:
            raise InvalidParameterError(
                "the input series is required: pass inputs=...")
        if not isinstance(inputs, PredictorSeries):
            inputs = PredictorSeries(values=np.asarray(inputs, dtype=float),
                                     kind=self.spline.kind)
        check_aligned_predictor(returns, inputs)
        return inputs

    def fit(self, X, y=None, *, inputs=None):
        """Learn per-bucket parameters from returns and aligned inputs."""
        if not isinstance(self.spline, SplinePredictor):
            raise InvalidParameterError(
                "spline must be a fitted SplinePredictor")
        returns = check_returns(X, name="returns")
        self._transfer()
        series = self._inputs(inputs, returns)
        grid = resolve_grid(returns, self.alpha, self.omega)
        cfg = EmConfig(max_iterations=self.max_iterations, tol=self.tol,
                       tied_variance=self.tied_variance, init=self.init)
        self.params_ = iohmm_learn(returns, series, self.spline,
                                   self.n_states, grid, cfg)
        self.grid_ = grid
        return self

    def signal(self, X, *, inputs=None):
        check_is_fitted(self, "params_")
        returns = check_returns(X, name="returns")
        series = self._inputs(inputs, returns)
        return iohmm_signal(returns, series, self.params_, self._transfer())

    def predict(self, X, *, inputs=None):
        return self.signal(X, inputs=inputs).values

    def predict_returns(self, X, *, inputs=None):
        return self.signal(X, inputs=inputs).predictions

    def score(self, X, y=None, *, inputs=None) -> float:
        """Average log-likelihood per observation under the fitted model."""
        check_is_fitted(self, "params_")
        returns = check_returns(X, name="returns")
        series = self._inputs(inputs, returns)
        idx = self.params_.partition.assign(series.values)
        _, _, _, loglik = _signal_core(returns,
                                       self.params_.theta[idx[0]].log_pi,
                                       list(self.params_.theta), idx,
                                       self._transfer())
        return float(loglik) / returns.size
