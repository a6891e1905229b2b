"""Tick ingestion and the synchronous one-minute bar grid.

A complete trading day is exactly 856 bars (01:00 through 15:15 wall-clock
Chicago, inclusive). Ticks are aggregated last-trade-per-minute, empty
minutes forward-filled, and contract rolls stitched by back-adjusting all
earlier prices with the roll gap so returns stay continuous.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from zoneinfo import ZoneInfo

import numpy as np

from .exceptions import IngestError, InvalidParameterError, OutOfSessionError
from .sideinfo import (MINUTES_PER_DAY, SESSION_CLOSE, SESSION_OPEN,
                       _session_minute)
from .validation import check_positive

CHICAGO = ZoneInfo("America/Chicago")
_TICK_TOL = 1e-6


@dataclass(frozen=True)
class InstrumentMeta:
    """Contract facts needed to validate bars: price tick, session times,
    and how many days before expiry the roll happens."""

    tick_size: float = 0.25
    session_open: dt.time = SESSION_OPEN
    session_close: dt.time = SESSION_CLOSE
    roll_offset_days: int = 12

    def __post_init__(self):
        check_positive(self.tick_size, "tick_size")
        if self.roll_offset_days < 0:
            raise InvalidParameterError("roll_offset_days must be >= 0")


@dataclass(frozen=True)
class BarSeries:
    """One-minute close prices on the session grid, day-complete.

    ``timestamps`` are naive Chicago wall-clock datetimes; ``day_index``
    maps each bar onto ``days``.
    """

    timestamps: tuple
    prices: np.ndarray
    day_index: np.ndarray
    days: tuple
    meta: InstrumentMeta

    def __post_init__(self):
        prices = np.ascontiguousarray(self.prices, dtype=np.float64)
        day_index = np.ascontiguousarray(self.day_index, dtype=np.int64)
        T = prices.size
        if len(self.timestamps) != T or day_index.size != T:
            raise InvalidParameterError(
                "timestamps, prices and day_index must align")
        D = len(self.days)
        if T != D * MINUTES_PER_DAY:
            raise InvalidParameterError(
                f"{T} bars is not {MINUTES_PER_DAY} per day over {D} days")
        counts = np.bincount(day_index, minlength=D)
        if counts.size != D or (counts != MINUTES_PER_DAY).any():
            raise InvalidParameterError(
                f"every day must have exactly {MINUTES_PER_DAY} bars")
        if (prices <= 0.0).any():
            raise InvalidParameterError("prices must be positive")
        ticks = prices / self.meta.tick_size
        if np.max(np.abs(ticks - np.rint(ticks))) > _TICK_TOL:
            raise InvalidParameterError(
                f"prices must be multiples of the {self.meta.tick_size} tick")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                raise InvalidParameterError(
                    f"timestamps must be strictly increasing at {b}")
        prices.setflags(write=False)
        day_index.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "day_index", day_index)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "days", tuple(self.days))

    @property
    def n_days(self) -> int:
        return len(self.days)

    def __len__(self) -> int:
        return self.prices.size

    @property
    def return_day_index(self) -> np.ndarray:
        """Day ordinal for each entry of to_returns (855 per day)."""
        return np.repeat(np.arange(self.n_days), MINUTES_PER_DAY - 1)


def to_returns(bars: BarSeries) -> np.ndarray:
    """Intraday log returns, 855 per day; no return spans a day boundary."""
    p = bars.prices.reshape(bars.n_days, MINUTES_PER_DAY)
    if (p <= 0.0).any():
        raise InvalidParameterError("prices must be positive")
    return np.diff(np.log(p), axis=1).ravel()


def _parse_timestamp(raw: str, line: int) -> dt.datetime:
    try:
        ts = dt.datetime.fromisoformat(raw.strip())
    except ValueError as exc:
        raise IngestError(f"bad timestamp {raw!r}: {exc}", line=line) from None
    if ts.tzinfo is not None:
        ts = ts.astimezone(CHICAGO).replace(tzinfo=None)
    return ts


def _parse_price(raw: str, line: int) -> float:
    try:
        price = float(raw)
    except (TypeError, ValueError):
        raise IngestError(f"bad price {raw!r}", line=line) from None
    if not np.isfinite(price) or price <= 0.0:
        raise IngestError(f"price must be positive, got {raw!r}", line=line)
    return price


def ingest_ticks(source, meta: InstrumentMeta = InstrumentMeta()) -> BarSeries:
    """Aggregate a tick CSV (``timestamp,price[,volume][,contract]``) onto
    the session minute grid.

    Last trade per minute wins; minutes without trades are forward-filled
    (a day's leading minutes are seeded from its first trade); days with no
    trades are dropped; out-of-session ticks are discarded. A change in the
    ``contract`` column marks a roll: all earlier prices are back-adjusted
    by the price gap so the stitched series has no roll jump.
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, newline="") if own else source
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError("empty file", line=1)
        fields = [f.strip() for f in reader.fieldnames]
        if "timestamp" not in fields or "price" not in fields:
            raise IngestError(
                f"header must name timestamp and price, got {fields}", line=1)

        stamps: list[dt.datetime] = []
        prices: list[float] = []
        rolls: list[tuple[int, float]] = []  # (first index of new contract, gap)
        prev_ts = None
        prev_contract = None
        for row in reader:
            line = reader.line_num
            if row.get(None) is not None or None in row.values():
                raise IngestError("wrong number of columns", line=line)
            ts = _parse_timestamp(row["timestamp"], line)
            price = _parse_price(row["price"], line)
            if prev_ts is not None and ts < prev_ts:
                raise IngestError(
                    f"timestamps go backwards at {ts.isoformat()}", line=line)
            prev_ts = ts
            contract = (row.get("contract") or "").strip() or None
            if (contract is not None and prev_contract is not None
                    and contract != prev_contract and prices):
                rolls.append((len(prices), price - prices[-1]))
            if contract is not None:
                prev_contract = contract
            try:
                _session_minute(ts)
            except OutOfSessionError:
                continue
            stamps.append(ts)
            prices.append(price)
    finally:
        if own:
            fh.close()

    if not prices:
        raise IngestError("no in-session ticks", line=1)
    raw = np.asarray(prices)
    # back-adjust: everything before a roll carries that roll's gap
    adjust = np.zeros(raw.size + 1)
    for pos, gap in rolls:
        adjust[:min(pos, raw.size)] += gap
    adjusted = raw + adjust[:raw.size]

    by_day: dict[dt.date, np.ndarray] = {}
    last_of_day: dict[dt.date, float] = {}
    for ts, price in zip(stamps, adjusted):
        day = ts.date()
        if day not in by_day:
            grid = np.full(MINUTES_PER_DAY, np.nan)
            by_day[day] = grid
        by_day[day][_session_minute(ts) - 1] = price
        last_of_day[day] = price

    days = sorted(by_day)
    all_prices = []
    all_stamps = []
    for day in days:
        grid = by_day[day]
        first = grid[~np.isnan(grid)][0]
        filled = np.empty(MINUTES_PER_DAY)
        level = first  # leading empty minutes seeded from the first trade
        for i in range(MINUTES_PER_DAY):
            if not np.isnan(grid[i]):
                level = grid[i]
            filled[i] = level
        all_prices.append(filled)
        base = dt.datetime.combine(day, SESSION_OPEN)
        all_stamps.extend(base + dt.timedelta(minutes=i)
                          for i in range(MINUTES_PER_DAY))

    return BarSeries(
        timestamps=tuple(all_stamps),
        prices=np.concatenate(all_prices),
        day_index=np.repeat(np.arange(len(days)), MINUTES_PER_DAY),
        days=tuple(days),
        meta=meta,
    )


def write_bars_csv(bars: BarSeries, path) -> None:
    """One tick per bar, exactly on-grid, so ingest_ticks reproduces the
    series bit-for-bit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "price"])
        for ts, price in zip(bars.timestamps, bars.prices):
            writer.writerow([ts.isoformat(), repr(float(price))])
