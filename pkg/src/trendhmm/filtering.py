"""Online state filtering, one-step return prediction, and trading signals.

The filter alternates a prediction step (propagate yesterday's filtered
state distribution through the transition matrix) with a Bayes update
(multiply by the discretized emission pmf at the observed return). The
trading signal at each step is a transfer function of the predicted return
formed *before* that step's observation enters the filter, so signals never
see the return they are paired with.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import DegenerateLikelihoodError, InvalidParameterError
from .params import HmmParams
from .validation import check_returns

STATE_SUM_TOL = 1e-10

TRANSFER_KINDS = ("sign", "linear", "identity")


@dataclass(frozen=True)
class TransferFunction:
    """Maps predicted returns to positions in [-1, 1].

    kind:
        ``sign``     position is the sign of the prediction (default);
        ``linear``   prediction divided by ``scale`` (grid spacing when
                     unset), clipped to [-1, 1];
        ``identity`` raw prediction, clipped to [-1, 1].
    """

    kind: str = "sign"
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in TRANSFER_KINDS:
            raise InvalidParameterError(
                f"transfer kind must be one of {TRANSFER_KINDS}, got {self.kind!r}")
        if self.scale is not None and not self.scale > 0:
            raise InvalidParameterError(f"transfer scale must be positive, got {self.scale!r}")

    def apply(self, predictions: np.ndarray, alpha: float) -> np.ndarray:
        predictions = np.asarray(predictions, dtype=np.float64)
        if self.kind == "sign":
            out = np.sign(predictions)
        elif self.kind == "linear":
            out = predictions / (self.scale if self.scale is not None else alpha)
        else:
            out = predictions.copy()
        return np.clip(out, -1.0, 1.0)


@dataclass(frozen=True)
class FilterState:
    """Filter posture after observing returns up to index ``t`` (0-based).

    ``omega_pred`` is the one-step state prediction that was available
    *before* observation ``t``; ``omega_filt`` is the filtered distribution
    after it. Both are probability vectors.
    """

    t: int
    omega_pred: np.ndarray
    omega_filt: np.ndarray

    def __post_init__(self):
        for name in ("omega_pred", "omega_filt"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(v < -STATE_SUM_TOL) or abs(v.sum() - 1.0) > STATE_SUM_TOL:
                raise InvalidParameterError(
                    f"{name} is not a probability vector (sum={v.sum()!r})")
            v = np.ascontiguousarray(v)
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class SignalSeries:
    """Per-step positions in [-1, 1] plus the raw return predictions behind
    them; aligned 1:1 with the return series they were computed from."""

    values: np.ndarray
    predictions: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        predictions = np.ascontiguousarray(self.predictions, dtype=np.float64)
        if values.shape != predictions.shape:
            raise InvalidParameterError("values and predictions must align")
        if values.size and np.max(np.abs(values)) > 1.0 + 1e-12:
            raise InvalidParameterError("signal values must lie in [-1, 1]")
        values.setflags(write=False)
        predictions.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "predictions", predictions)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


def _bayes_update(omega_pred: np.ndarray, params: HmmParams, dy: float, t: int) -> np.ndarray:
    idx = int(params.grid.snap_index(dy))
    with np.errstate(divide="ignore"):
        logw = np.log(omega_pred) + params.log_emission[:, idx]
    m = logw.max()
    if m == -np.inf:
        raise DegenerateLikelihoodError(t)
    w = np.exp(logw - m)
    return w / w.sum()


def init_filter(params: HmmParams, dy1: float) -> FilterState:
    """Filter state after the first observation; the prediction slot holds
    the initial distribution (the prediction available before any data)."""
    omega_filt = _bayes_update(params.pi, params, float(dy1), t=0)
    return FilterState(t=0, omega_pred=params.pi.copy(), omega_filt=omega_filt)


def filter_step(state: FilterState, params: HmmParams, dy: float) -> FilterState:
    """Advance the filter by one observation."""
    omega_pred = params.A.T @ state.omega_filt
    omega_filt = _bayes_update(omega_pred, params, float(dy), t=state.t + 1)
    return FilterState(t=state.t + 1, omega_pred=omega_pred, omega_filt=omega_filt)


def predict_return(state: FilterState, params: HmmParams) -> float:
    """One-step-ahead expected return under the predicted state mix.

    Uses the grid-renormalized state means, not the raw mu."""
    return float(state.omega_pred @ params.mu_star)


def _stacked(params_list) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    log_A = np.stack([p.log_A for p in params_list])
    log_emission = np.stack([p.log_emission for p in params_list])
    mu_star = np.stack([p.mu_star for p in params_list])
    return log_A, log_emission, mu_star


def _signal_core(returns: np.ndarray, init_log_pi: np.ndarray, params_list,
                 bucket_idx: np.ndarray, transfer: TransferFunction):
    """Shared predict/update loop behind both the plain-HMM and the
    input-switched signal paths."""
    grid = params_list[0].grid
    for p in params_list[1:]:
        if p.grid != grid:
            raise InvalidParameterError("all parameter sets must share one grid")
        if p.n_states != params_list[0].n_states:
            raise InvalidParameterError("all parameter sets must share one state count")
    obs_idx = grid.snap_index(returns)
    log_A, log_emission, mu_star = _stacked(params_list)
    omega_pred, omega_filt, predictions, loglik, deg = _kernels.signal_filter(
        np.ascontiguousarray(init_log_pi), log_A, log_emission, mu_star,
        obs_idx, np.ascontiguousarray(bucket_idx, dtype=np.int64))
    if deg != _kernels.NO_DEGENERACY:
        raise DegenerateLikelihoodError(int(deg))
    values = transfer.apply(predictions, grid.alpha)
    return SignalSeries(values=values, predictions=predictions), omega_pred, omega_filt, loglik


def run_hmm_signal(returns, params: HmmParams,
                   transfer: TransferFunction = TransferFunction()) -> SignalSeries:
    """Signal series over a return sequence.

    signal[t] is the transfer of the return prediction formed before
    observing returns[t]; signal[0] uses the initial-distribution prediction.
    """
    returns = check_returns(returns)
    signal, *_ = _signal_core(returns, params.log_pi, [params],
                              np.zeros(returns.size, dtype=np.int64), transfer)
    return signal


def log_likelihood(returns, params: HmmParams) -> float:
    """Log-probability of the return sequence via the forward recursion's
    normalization constants."""
    returns = check_returns(returns)
    obs_idx = params.grid.snap_index(returns)
    ll, deg = _kernels.loglik_log(params.log_pi, params.log_A,
                                  params.log_emission, obs_idx)
    if deg != _kernels.NO_DEGENERACY:
        raise DegenerateLikelihoodError(int(deg))
    return float(ll)
