"""Look-ahead-safe strategy simulation, costs, and performance reporting.

The simulator applies a one-period signal lag: the position held over the
return at time t is the signal emitted at t-1.  Positions are flattened at
every session close and re-established at the next open, so nothing is held
overnight; since the return sequence contains no overnight returns, the
flatten/re-open cycle affects turnover (and therefore costs) but not the
returns captured.  Performance is reported on daily aggregates: intraday
strategy returns are summed per day and the annualized Sharpe ratio uses
sqrt(258) scaling on that daily vector.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bars import BarSeries, InstrumentMeta, ingest_ticks, to_returns  # noqa: F401  (module family re-export)
from .exceptions import InsufficientDataError, InvalidParameterError
from .filtering import SignalSeries
from .synthetic import generate_synthetic  # noqa: F401  (module family re-export)

#: trading days per year used for Sharpe annualization
PERIODS_PER_YEAR = 258


@dataclass(frozen=True)
class CostModel:
    """Per-trade transaction costs.

    ``proportional`` is charged per unit of turnover (fraction of notional
    per unit signal change); ``fixed`` is charged once per trade regardless
    of size.  Both default to zero.
    """

    proportional: float = 0.0
    fixed: float = 0.0

    def __post_init__(self):
        for name in ("proportional", "fixed"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise InvalidParameterError(
                    f"{name} cost must be finite and >= 0, got {v}")

    @classmethod
    def from_instrument(cls, tick_size: float, price: float) -> "CostModel":
        """Half-tick proportional cost: 0.5 * tick_size / price per unit
        turnover.  A calibration, not a market model."""
        if tick_size <= 0 or price <= 0:
            raise InvalidParameterError("tick_size and price must be > 0")
        return cls(proportional=0.5 * tick_size / price)

    def per_trade(self, turnover: np.ndarray) -> np.ndarray:
        """Cost of a trade of the given absolute size (vectorized)."""
        turnover = np.asarray(turnover, dtype=float)
        return self.proportional * turnover + self.fixed * (turnover > 0.0)

    @property
    def is_free(self) -> bool:
        return self.proportional == 0.0 and self.fixed == 0.0


@dataclass(frozen=True)
class SharpeRatio:
    """Annualized Sharpe with a degeneracy flag (zero-variance days)."""

    value: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class Correlation:
    """Pearson correlation with a flag for constant (undefined) input."""

    value: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


def _signal_values(signal) -> np.ndarray:
    if isinstance(signal, SignalSeries):
        return signal.values
    out = np.asarray(signal, dtype=float)
    if out.ndim != 1:
        raise InvalidParameterError("signal must be one-dimensional")
    return out


def _check_alignment(sig, returns, day_index):
    if sig.size != returns.size or sig.size != day_index.size:
        raise InvalidParameterError(
            f"signal ({sig.size}), returns ({returns.size}) and day_index "
            f"({day_index.size}) must be aligned")
    if sig.size == 0:
        raise InvalidParameterError("empty series")
    if not np.isfinite(sig).all():
        raise InvalidParameterError("signal contains non-finite values")
    if not np.isfinite(returns).all():
        raise InvalidParameterError("returns contain non-finite values")
    if np.any(np.diff(day_index) < 0):
        raise InvalidParameterError("day_index must be non-decreasing")


def _position_ledger(sig, day_index, initial_position):
    """Lagged positions plus per-step opening and closing turnover.

    pos[t] = sig[t-1] with pos[0] = initial_position.  On the first return
    of each day the position is re-established from flat (the previous
    day's book was closed), so the opening turnover there is |pos[t]|; on
    the last return of each day the book is flattened, adding |pos[t]|.
    """
    T = sig.size
    pos = np.empty(T)
    pos[0] = initial_position
    pos[1:] = sig[:-1]

    first = np.empty(T, dtype=bool)
    first[0] = True
    first[1:] = day_index[1:] != day_index[:-1]
    last = np.empty(T, dtype=bool)
    last[-1] = True
    last[:-1] = first[1:]

    prev = np.concatenate([[0.0], pos[:-1]])
    prev[first] = 0.0
    open_turn = np.abs(pos - prev)
    close_turn = np.where(last, np.abs(pos), 0.0)
    return pos, open_turn, close_turn


def simulate(signal, returns, day_index, cost: CostModel = CostModel(),
             initial_position: float = 0.0) -> np.ndarray:
    """Per-minute strategy returns under the one-period signal lag.

    strat[t] = pos[t] * returns[t] - cost, where pos[t] = signal[t-1] and
    pos[0] = ``initial_position`` (the position already held when the
    series starts; the long-only benchmark passes 1.0 so that every return
    is captured).  Costs are charged on opening/adjusting turnover at t and
    on the closing flatten booked on each day's last return.
    """
    sig = _signal_values(signal)
    returns = np.asarray(returns, dtype=float)
    day_index = np.asarray(day_index)
    _check_alignment(sig, returns, day_index)
    if not np.isfinite(initial_position):
        raise InvalidParameterError("initial_position must be finite")

    pos, open_turn, close_turn = _position_ledger(sig, day_index,
                                                  initial_position)
    return pos * returns - cost.per_trade(open_turn) - cost.per_trade(
        close_turn)


def trade_count(signal, day_index, initial_position: float = 0.0) -> int:
    """Number of trades (nonzero position changes, closes included)."""
    sig = _signal_values(signal)
    day_index = np.asarray(day_index)
    if sig.size != day_index.size or sig.size == 0:
        raise InvalidParameterError("signal and day_index must be aligned")
    _, open_turn, close_turn = _position_ledger(sig, day_index,
                                                initial_position)
    return int((open_turn > 0).sum() + (close_turn > 0).sum())


def daily_sums(values, day_index) -> np.ndarray:
    """Sum intraday values per day, in ascending day order."""
    values = np.asarray(values, dtype=float)
    day_index = np.asarray(day_index)
    if values.size != day_index.size:
        raise InvalidParameterError("values and day_index must be aligned")
    _, inverse = np.unique(day_index, return_inverse=True)
    return np.bincount(inverse, weights=values)


def sharpe(daily_returns, periods_per_year: int = PERIODS_PER_YEAR,
           risk_free: float = 0.0) -> SharpeRatio:
    """Annualized Sharpe ratio of a daily return vector.

    sqrt(periods_per_year) * (mean - risk_free) / std with the sample
    standard deviation (ddof=1).  Zero variance yields a degenerate flag
    rather than a number.
    """
    daily = np.asarray(daily_returns, dtype=float)
    if daily.size < 2:
        raise InsufficientDataError(
            f"need at least 2 daily returns, got {daily.size}")
    if not np.isfinite(daily).all():
        raise InvalidParameterError("daily returns contain non-finite values")
    sd = daily.std(ddof=1)
    # a constant vector can leave roundoff-scale std behind; treat
    # variation below measurement precision as zero
    if sd <= 1e-12 * np.abs(daily).max():
        return SharpeRatio(value=math.nan, degenerate=True)
    value = math.sqrt(periods_per_year) * (daily.mean() - risk_free) / sd
    return SharpeRatio(value=float(value))


def correlation(a, b) -> Correlation:
    """Pearson correlation of two daily return vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise InvalidParameterError("inputs must have equal length")
    if a.size < 2:
        raise InsufficientDataError("need at least 2 observations")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InvalidParameterError("inputs contain non-finite values")
    da, db = a - a.mean(), b - b.mean()
    sda, sdb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    # constant input leaves at most roundoff-scale deviations: undefined
    if sda <= 1e-12 * np.abs(a).max() or sdb <= 1e-12 * np.abs(b).max():
        return Correlation(value=math.nan, degenerate=True)
    return Correlation(value=float(np.clip((da @ db) / (sda * sdb),
                                           -1.0, 1.0)))


@dataclass(frozen=True)
class BacktestReport:
    """Daily performance of one strategy plus comparison curves."""

    strategy: str
    dates: tuple
    daily_returns: np.ndarray        # post-cost
    daily_returns_pre: np.ndarray    # zero-cost
    sharpe_pre: SharpeRatio
    sharpe_post: SharpeRatio
    cumret: np.ndarray
    correlations: dict
    trade_count: int
    comparison_daily: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.dates)
        for name in ("daily_returns", "daily_returns_pre", "cumret"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size != n:
                raise InvalidParameterError(
                    f"{name} must have one entry per day ({n}), "
                    f"got {arr.size}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for curve in self.comparison_daily.values():
            if np.asarray(curve).size != n:
                raise InvalidParameterError(
                    "comparison curves must have one entry per day")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def to_dict(self) -> dict:
        def stat(s):
            return {"value": None if s.degenerate else s.value,
                    "degenerate": s.degenerate}

        return {
            "strategy": self.strategy,
            "config": self.config,
            "dates": [str(d) for d in self.dates],
            "daily_returns": self.daily_returns.tolist(),
            "daily_returns_pre": self.daily_returns_pre.tolist(),
            "sharpe_pre": stat(self.sharpe_pre),
            "sharpe_post": stat(self.sharpe_post),
            "cumret": self.cumret.tolist(),
            "correlations": {k: stat(v) for k, v in
                             self.correlations.items()},
            "trade_count": self.trade_count,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def plot_csv(self, path) -> None:
        """Long-format cumulative return curves: date, strategy, cumret."""
        curves = {self.strategy: self.cumret}
        for name, daily in self.comparison_daily.items():
            curves[name] = np.cumsum(daily)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "strategy", "cumret"])
            for name, curve in curves.items():
                for date, value in zip(self.dates, curve):
                    writer.writerow([str(date), name, repr(float(value))])


def build_report(strategy: str, signal, returns, day_index, *,
                 dates=None, cost: CostModel = CostModel(),
                 comparisons=None, config=None,
                 initial_position: float = 0.0) -> BacktestReport:
    """Simulate a strategy and assemble its report.

    ``comparisons`` maps names to signal arrays simulated under the same
    cost model; a ``long_only`` benchmark (constant +1, entered before the
    first return) is always included.  Correlations are computed between
    post-cost daily returns.
    """
    returns = np.asarray(returns, dtype=float)
    day_index = np.asarray(day_index)
    strat = simulate(signal, returns, day_index, cost, initial_position)
    pre = simulate(signal, returns, day_index, CostModel(), initial_position)
    daily_post = daily_sums(strat, day_index)
    daily_pre = daily_sums(pre, day_index)

    if dates is None:
        dates = tuple(str(d) for d in np.unique(day_index))
    else:
        dates = tuple(dates)
    if len(dates) != daily_post.size:
        raise InvalidParameterError(
            f"got {len(dates)} dates for {daily_post.size} trading days")

    comparison_daily = {}
    entries = dict(comparisons or {})
    entries.setdefault("long_only", np.ones(returns.size))
    for name, other in entries.items():
        init = 1.0 if name == "long_only" else 0.0
        other_strat = simulate(other, returns, day_index, cost, init)
        comparison_daily[name] = daily_sums(other_strat, day_index)

    correlations = {name: correlation(daily_post, other)
                    for name, other in comparison_daily.items()}

    return BacktestReport(
        strategy=strategy,
        dates=dates,
        daily_returns=daily_post,
        daily_returns_pre=daily_pre,
        sharpe_pre=sharpe(daily_pre),
        sharpe_post=sharpe(daily_post),
        cumret=np.cumsum(daily_post),
        correlations=correlations,
        trade_count=trade_count(signal, day_index, initial_position),
        comparison_daily=comparison_daily,
        config=dict(config or {}),
    )
