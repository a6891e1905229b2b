"""Synthetic market generation from the latent-trend model.

The generator draws the Markov state chain and on-grid returns, then builds
a price path and bar series around them. Prices are snapped to the
instrument tick, with the tick sized so the snap error stays well inside
half a grid cell: snapping ``to_returns`` of the bars recovers the planted
return sequence exactly, which is what makes end-to-end recovery tests
possible.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .bars import BarSeries, InstrumentMeta
from .bars import to_returns as _bars_to_returns
from .exceptions import InvalidParameterError
from .params import HmmParams
from .sideinfo import MINUTES_PER_DAY, SESSION_OPEN

RETURNS_PER_DAY = MINUTES_PER_DAY - 1
# tick = alpha * price / 20 keeps snap error < alpha/2 over ~10x price drift
_TICK_FRACTION = 20.0


@dataclass(frozen=True)
class SyntheticMarket:
    """Bars plus the ground truth behind them."""

    bars: BarSeries
    states: np.ndarray   # latent state per return step (n_days * 855)
    returns: np.ndarray  # planted on-grid returns, same alignment

    def __post_init__(self):
        for name in ("states", "returns"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _weekdays(start: dt.date, n_days: int) -> list[dt.date]:
    out = []
    day = start
    while len(out) < n_days:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return out


def _draw_chain(params_list, bucket_index, T, rng):
    """Latent path and returns; the active parameter set at step t drives
    both the transition into t and the emission at t."""
    K = params_list[0].n_states
    grid = params_list[0].grid
    A_cum = [np.cumsum(p.A, axis=1) for p in params_list]
    em_cum = [np.cumsum(np.exp(p.log_emission), axis=1) for p in params_list]

    states = np.empty(T, dtype=np.int64)
    cells = np.empty(T, dtype=np.int64)
    u_state = rng.random(T)
    u_obs = rng.random(T)
    n_cells = grid.size
    pi_cum = np.cumsum(params_list[bucket_index[0]].pi)
    s = min(int(np.searchsorted(pi_cum, u_state[0])), K - 1)
    states[0] = s
    cells[0] = min(int(np.searchsorted(em_cum[bucket_index[0]][s],
                                       u_obs[0])), n_cells - 1)
    for t in range(1, T):
        b = bucket_index[t]
        s = min(int(np.searchsorted(A_cum[b][s], u_state[t])), K - 1)
        states[t] = s
        cells[t] = min(int(np.searchsorted(em_cum[b][s], u_obs[t])),
                       n_cells - 1)
    return states, grid.values[cells]


def generate_synthetic(params, n_days: int, seed: int, *,
                       bucket_index=None,
                       start_price: float = 1250.0,
                       start_date: dt.date = dt.date(2011, 1, 3),
                       tick_size: float | None = None) -> SyntheticMarket:
    """Simulate the generative model onto a bar series.

    ``params`` is a single HmmParams, or a sequence of them for the
    input-dependent variant, in which case ``bucket_index`` must give the
    active parameter set per return step. Prices hold flat overnight, so
    every planted return is intraday. Seeded runs are bitwise reproducible.
    """
    if isinstance(params, HmmParams):
        params_list = [params]
    else:
        params_list = list(params)
        if not params_list:
            raise InvalidParameterError("params must not be empty")
    grid = params_list[0].grid
    K = params_list[0].n_states
    for p in params_list:
        if not isinstance(p, HmmParams):
            raise InvalidParameterError("params must be HmmParams")
        if p.grid != grid or p.n_states != K:
            raise InvalidParameterError(
                "all parameter sets must share the grid and state count")
    if n_days < 1:
        raise InvalidParameterError(f"n_days must be >= 1, got {n_days}")
    T = n_days * RETURNS_PER_DAY
    if bucket_index is None:
        if len(params_list) > 1:
            raise InvalidParameterError(
                "bucket_index is required with multiple parameter sets")
        bucket_index = np.zeros(T, dtype=np.int64)
    else:
        bucket_index = np.ascontiguousarray(bucket_index, dtype=np.int64)
        if bucket_index.shape != (T,):
            raise InvalidParameterError(
                f"bucket_index must have {T} entries, one per return")
        if bucket_index.min() < 0 or bucket_index.max() >= len(params_list):
            raise InvalidParameterError("bucket_index out of range")

    rng = np.random.default_rng(seed)
    states, returns = _draw_chain(params_list, bucket_index, T, rng)

    if tick_size is None:
        tick_size = grid.alpha * start_price / _TICK_FRACTION
    log_p0 = np.log(start_price)
    log_levels = log_p0 + np.concatenate(
        [[0.0], np.cumsum(returns)]).reshape(-1)
    # day d holds minutes [d*855, (d+1)*855] of the continuous path: the
    # close of one day repeats as the next open, so no overnight return
    idx = (np.arange(n_days * MINUTES_PER_DAY)
           - np.repeat(np.arange(n_days), MINUTES_PER_DAY))
    prices = np.exp(log_levels[idx])
    prices = np.maximum(np.rint(prices / tick_size), 1.0) * tick_size

    days = _weekdays(start_date, n_days)
    stamps = []
    for day in days:
        base = dt.datetime.combine(day, SESSION_OPEN)
        stamps.extend(base + dt.timedelta(minutes=i)
                      for i in range(MINUTES_PER_DAY))
    bars = BarSeries(
        timestamps=tuple(stamps),
        prices=prices,
        day_index=np.repeat(np.arange(n_days), MINUTES_PER_DAY),
        days=tuple(days),
        meta=InstrumentMeta(tick_size=tick_size),
    )
    recovered = grid.snap(_bars_to_returns(bars))
    if not np.array_equal(recovered, returns):
        raise InvalidParameterError(
            "price drift too large for the tick: snapped bar returns no "
            "longer reproduce the planted sequence; pass a smaller tick_size")
    return SyntheticMarket(bars=bars, states=states, returns=returns)
