"""Exogenous predictor construction: EWMA volatility, the fast/slow
volatility ratio, the minute-of-session seasonal index, and causal return
standardization.

All rolling quantities here are one-step-ahead forecasts: the value stored
at index t uses observations up to and including t and is meant to be
consumed at t+1. ``normalize_returns`` applies that shift internally, so
its output at t never sees the return it standardizes.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .exceptions import (InsufficientDataError, InvalidParameterError,
                         OutOfSessionError)
from .validation import check_returns, check_same_length

SESSION_OPEN = dt.time(1, 0)     # Chicago
SESSION_CLOSE = dt.time(15, 15)
MINUTES_PER_DAY = 856            # inclusive minute grid from open to close

PREDICTOR_KINDS = ("volratio", "seasonal")


@dataclass(frozen=True)
class EwmaConfig:
    """Exponential weighting: decay ``lam`` over a window of ``psi`` lags."""

    lam: float = 0.79
    psi: int = 50

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise InvalidParameterError(
                f"lam must be in (0, 1), got {self.lam!r}")
        if self.psi < 1:
            raise InvalidParameterError(f"psi must be >= 1, got {self.psi!r}")

    @property
    def weights(self) -> np.ndarray:
        """(1-lam) * lam^tau for tau = 0..psi, most recent lag first."""
        return (1.0 - self.lam) * self.lam ** np.arange(self.psi + 1)


@dataclass(frozen=True)
class PredictorSeries:
    """Exogenous input values aligned one-to-one with a return series.

    ``defined`` masks warm-up or degenerate entries (e.g. a 0/0 volatility
    ratio); undefined entries are excluded from spline fitting.
    """

    values: np.ndarray
    kind: str
    defined: np.ndarray | None = None
    timestamps: tuple | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.kind not in PREDICTOR_KINDS:
            raise InvalidParameterError(
                f"kind must be one of {PREDICTOR_KINDS}, got {self.kind!r}")
        defined = (np.ones(values.size, dtype=bool) if self.defined is None
                   else np.ascontiguousarray(self.defined, dtype=bool))
        if defined.shape != values.shape:
            raise InvalidParameterError("defined mask must align with values")
        if self.kind == "seasonal":
            v = values[defined]
            if v.size and (v.min() < 1 or v.max() > MINUTES_PER_DAY
                           or np.any(v != np.round(v))):
                raise InvalidParameterError(
                    f"seasonal values must be integers in "
                    f"[1, {MINUTES_PER_DAY}]")
        if self.timestamps is not None and len(self.timestamps) != values.size:
            raise InvalidParameterError("timestamps must align with values")
        values.setflags(write=False)
        defined.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "defined", defined)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


def ewma_vol(returns, cfg: EwmaConfig = EwmaConfig()
             ) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead EWMA volatility forecasts.

    Returns (vol, warm_up): vol[t] = sqrt((1-lam) * sum_tau lam^tau *
    dy[t-tau]^2) over tau = 0..psi, truncated to the available history;
    warm_up[t] is True while fewer than psi+1 observations exist.
    """
    returns = check_returns(returns)
    sq = returns * returns
    vol2 = np.convolve(sq, cfg.weights)[:returns.size]
    warm_up = np.arange(returns.size) < cfg.psi
    return np.sqrt(np.maximum(vol2, 0.0)), warm_up


def vol_ratio(returns, lam: float = 0.79, psi_fast: int = 50,
              psi_slow: int = 100) -> PredictorSeries:
    """Fast-window over slow-window EWMA volatility.

    Each window's weights are normalized to unit mass before the ratio is
    taken (average weighted square rather than summed), so the ratio sits
    at exactly 1 for constant-magnitude input and moves above 1 when
    recent volatility is elevated. Without that normalization the slow
    sum contains the fast sum term-for-term and the ratio could never
    exceed 1. Entries are undefined during the slow warm-up and wherever
    the slow forecast is zero (the 0/0 quiet-market case).
    """
    returns = check_returns(returns)
    if psi_fast >= psi_slow:
        raise InvalidParameterError("psi_fast must be below psi_slow")
    if returns.size < psi_slow:
        raise InsufficientDataError(
            f"volatility ratio needs >= {psi_slow} observations, "
            f"got {returns.size}")
    fast, _ = ewma_vol(returns, EwmaConfig(lam=lam, psi=psi_fast))
    slow, warm = ewma_vol(returns, EwmaConfig(lam=lam, psi=psi_slow))
    unit_mass = np.sqrt((1.0 - lam ** (psi_slow + 1))
                        / (1.0 - lam ** (psi_fast + 1)))
    defined = ~warm & (slow > 0.0)
    values = np.zeros(returns.size)
    values[defined] = unit_mass * fast[defined] / slow[defined]
    return PredictorSeries(values=values, kind="volratio", defined=defined)


def _session_minute(timestamp) -> int:
    t = timestamp.time() if isinstance(timestamp, dt.datetime) else timestamp
    minute = t.hour * 60 + t.minute
    open_min = SESSION_OPEN.hour * 60 + SESSION_OPEN.minute
    idx = minute - open_min + 1
    if not 1 <= idx <= MINUTES_PER_DAY:
        raise OutOfSessionError(
            f"{t.isoformat()} is outside the {SESSION_OPEN:%H:%M}-"
            f"{SESSION_CLOSE:%H:%M} session")
    return idx


def seasonal_index(timestamp) -> int:
    """Minute-of-session bucket: session open -> 1, close -> 856."""
    return _session_minute(timestamp)


def seasonal_series(timestamps) -> PredictorSeries:
    """Vectorized seasonal_index over aligned bar timestamps."""
    values = np.array([_session_minute(ts) for ts in timestamps],
                      dtype=np.float64)
    return PredictorSeries(values=values, kind="seasonal",
                           timestamps=tuple(timestamps))


def normalize_returns(returns, mean_cfg: EwmaConfig = EwmaConfig(lam=0.99),
                      vol_cfg: EwmaConfig = EwmaConfig(lam=0.94, psi=100)
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Causally standardized returns: (dy[t] - mean forecast)/vol forecast,
    both forecasts built from observations strictly before t.

    Returns (z, defined); undefined entries (no history yet, or a zero
    volatility forecast) hold 0 and must be excluded downstream. The mean
    EWMA is weight-normalized; the volatility EWMA runs on the one-step
    mean residuals, so a constant series is undefined rather than zero.
    The default volatility decay is slower than the ratio predictor's
    0.79: a fast decay leaves so few effective observations in the
    variance estimate that the standardized output inflates well past
    unit variance.
    """
    returns = check_returns(returns)
    T = returns.size
    w = mean_cfg.weights
    mean_num = np.convolve(returns, w)[:T]
    # running weight mass: full w.sum() once past warm-up, partial before
    mean_den = np.convolve(np.ones(T), w)[:T]
    mean_fc = mean_num / mean_den
    # volatility of the one-step prediction errors, not of raw returns:
    # a constant series then has zero variance and stays undefined
    resid = np.zeros(T)
    resid[1:] = returns[1:] - mean_fc[:-1]
    vol_fc, vol_warm = ewma_vol(resid, vol_cfg)

    z = np.zeros(T)
    defined = np.zeros(T, dtype=bool)
    # a residual volatility below 1e-9 of the raw-return volatility is
    # cancellation roundoff, not real variance; treat it as degenerate
    raw_vol, _ = ewma_vol(returns, vol_cfg)
    floor = 1e-9 * raw_vol
    # forecasts at t-1 standardize the return at t
    usable = ~vol_warm[:-1] & (vol_fc[:-1] > floor[:-1]) & (vol_fc[:-1] > 0.0)
    idx = np.flatnonzero(usable) + 1
    z[idx] = resid[idx] / vol_fc[idx - 1]
    defined[idx] = True
    return z, defined


def check_aligned_predictor(returns: np.ndarray, X: PredictorSeries) -> None:
    check_same_length(("returns", returns), ("predictor", X.values))
