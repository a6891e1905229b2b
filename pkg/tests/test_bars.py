import datetime as dt
import io

import numpy as np
import pytest

from trendhmm import IngestError, InvalidParameterError
from trendhmm.bars import (BarSeries, InstrumentMeta, ingest_ticks,
                           to_returns, write_bars_csv)
from trendhmm.sideinfo import MINUTES_PER_DAY

TICK = 0.25


def tick_csv(rows):
    return io.StringIO("timestamp,price\n" + "\n".join(rows) + "\n")


def minute_stamp(day, minute, second=0):
    base = dt.datetime.combine(day, dt.time(1, 0))
    return (base + dt.timedelta(minutes=minute, seconds=second)).isoformat()


def full_day_rows(day, base_price=1250.0):
    # one on-grid trade per session minute
    return [f"{minute_stamp(day, m)},{base_price + TICK * (m % 8)}"
            for m in range(MINUTES_PER_DAY)]


DAY1 = dt.date(2011, 1, 3)
DAY2 = dt.date(2011, 1, 4)


class TestIngestTicks:
    def test_one_trade_per_minute_on_grid(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        assert bars.n_days == 1
        assert len(bars) == MINUTES_PER_DAY
        expect = 1250.0 + TICK * (np.arange(MINUTES_PER_DAY) % 8)
        np.testing.assert_array_equal(bars.prices, expect)
        assert bars.timestamps[0] == dt.datetime.combine(DAY1, dt.time(1, 0))
        assert bars.timestamps[-1] == dt.datetime.combine(DAY1,
                                                          dt.time(15, 15))

    def test_gap_minutes_forward_filled(self):
        rows = full_day_rows(DAY1)
        kept = [r for i, r in enumerate(rows) if not 100 <= i <= 104]
        bars = ingest_ticks(tick_csv(kept))
        filled = bars.prices[100:105]
        np.testing.assert_array_equal(filled, bars.prices[99])

    def test_leading_minutes_seeded_from_first_trade(self):
        rows = full_day_rows(DAY1)[10:]
        bars = ingest_ticks(tick_csv(rows))
        np.testing.assert_array_equal(bars.prices[:10], bars.prices[10])

    def test_last_trade_in_minute_wins(self):
        rows = full_day_rows(DAY1)
        rows.insert(6, f"{minute_stamp(DAY1, 5, second=30)},1300.0")
        rows.insert(7, f"{minute_stamp(DAY1, 5, second=45)},1299.5")
        bars = ingest_ticks(tick_csv(rows))
        assert bars.prices[5] == 1299.5

    def test_out_of_session_ticks_discarded(self):
        rows = ([f"2011-01-03T00:30:00,9999.0"]
                + full_day_rows(DAY1)
                + [f"2011-01-03T15:16:00,9999.0"])
        bars = ingest_ticks(tick_csv(rows))
        assert 9999.0 not in bars.prices

    def test_empty_days_dropped(self):
        rows = full_day_rows(DAY1) + full_day_rows(DAY2)
        bars = ingest_ticks(tick_csv(rows))
        assert bars.days == (DAY1, DAY2)

    def test_timezone_resolved_to_chicago(self):
        # 07:00Z on 2011-01-03 is 01:00 in Chicago (CST, UTC-6)
        rows = [f"2011-01-03T{7 + (m + 60) // 60 - 1:02d}:{(m + 60) % 60:02d}:00+00:00,"
                f"{1250.0 + TICK * (m % 4)}" for m in range(MINUTES_PER_DAY)]
        bars = ingest_ticks(tick_csv(rows))
        assert bars.timestamps[0] == dt.datetime.combine(DAY1, dt.time(1, 0))
        assert bars.n_days == 1

    def test_malformed_price_reports_line(self):
        rows = full_day_rows(DAY1)
        rows[41] = rows[41].rsplit(",", 1)[0] + ",not-a-price"
        with pytest.raises(IngestError, match="line 43"):
            ingest_ticks(tick_csv(rows))

    def test_malformed_timestamp_reports_line(self):
        rows = full_day_rows(DAY1)
        rows[0] = "yesterday,1250.0"
        with pytest.raises(IngestError, match="line 2"):
            ingest_ticks(tick_csv(rows))

    def test_non_monotone_timestamps_rejected(self):
        rows = full_day_rows(DAY1)
        rows[100], rows[101] = rows[101], rows[100]
        with pytest.raises(IngestError, match="backwards"):
            ingest_ticks(tick_csv(rows))

    def test_missing_column_rejected(self):
        with pytest.raises(IngestError, match="header"):
            ingest_ticks(io.StringIO("time,price\n2011-01-03T01:00:00,1.0\n"))

    def test_short_row_reports_line(self):
        rows = full_day_rows(DAY1)
        rows[5] = rows[5].rsplit(",", 1)[0]
        with pytest.raises(IngestError, match="line 7"):
            ingest_ticks(tick_csv(rows))

    def test_volume_column_tolerated(self):
        text = "timestamp,price,volume\n" + "\n".join(
            f"{minute_stamp(DAY1, m)},1250.0,3" for m in range(MINUTES_PER_DAY))
        bars = ingest_ticks(io.StringIO(text))
        np.testing.assert_array_equal(bars.prices, 1250.0)


class TestContractRoll:
    def test_known_gap_back_adjusted_to_continuity(self):
        # same underlying drift; second contract prints 8.0 higher, with a
        # synchronous double print at the roll minute so the gap is clean
        gap = 8.0
        drift = TICK * (np.arange(MINUTES_PER_DAY) % 6)
        half = MINUTES_PER_DAY // 2
        rows = ["timestamp,price,contract"]
        for m in range(MINUTES_PER_DAY):
            if m < half:
                rows.append(f"{minute_stamp(DAY1, m)},{1250.0 + drift[m]},H1")
            else:
                if m == half:
                    rows.append(
                        f"{minute_stamp(DAY1, m)},{1250.0 + drift[m]},H1")
                rows.append(
                    f"{minute_stamp(DAY1, m, second=30)},"
                    f"{1250.0 + drift[m] + gap},M1")
        bars = ingest_ticks(io.StringIO("\n".join(rows) + "\n"))
        np.testing.assert_allclose(bars.prices, 1250.0 + gap + drift,
                                   atol=1e-9)
        steps = np.abs(np.diff(bars.prices))
        assert steps.max() <= 5 * TICK  # no jump of size ~gap anywhere

    def test_roll_without_contract_column_is_no_op(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        assert bars.prices[0] == 1250.0


class TestBarSeriesInvariants:
    def test_sparse_day_still_fills_the_grid(self):
        # forward-fill means any traded day comes out complete
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)[:400]))
        assert len(bars) == MINUTES_PER_DAY

    def test_partial_day_rejected(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        with pytest.raises(InvalidParameterError):
            BarSeries(timestamps=bars.timestamps[:400],
                      prices=bars.prices[:400],
                      day_index=bars.day_index[:400],
                      days=bars.days, meta=bars.meta)

    def test_off_tick_price_rejected(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        prices = bars.prices.copy()
        prices[3] += TICK / 3.0
        with pytest.raises(InvalidParameterError, match="tick"):
            BarSeries(timestamps=bars.timestamps, prices=prices,
                      day_index=bars.day_index, days=bars.days,
                      meta=bars.meta)

    def test_non_positive_price_rejected(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        prices = bars.prices.copy()
        prices[0] = 0.0
        with pytest.raises(InvalidParameterError, match="positive"):
            BarSeries(timestamps=bars.timestamps, prices=prices,
                      day_index=bars.day_index, days=bars.days,
                      meta=bars.meta)

    def test_metadata_defaults(self):
        meta = InstrumentMeta()
        assert meta.tick_size == 0.25
        assert meta.roll_offset_days == 12
        assert meta.session_open == dt.time(1, 0)
        assert meta.session_close == dt.time(15, 15)

    def test_prices_read_only(self):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        with pytest.raises(ValueError):
            bars.prices[0] = 1.0


class TestToReturns:
    def test_constant_prices_zero_returns(self):
        bars = ingest_ticks(tick_csv(
            [f"{minute_stamp(DAY1, m)},1250.0" for m in range(MINUTES_PER_DAY)]))
        r = to_returns(bars)
        assert r.size == MINUTES_PER_DAY - 1
        np.testing.assert_array_equal(r, 0.0)

    def test_price_doubling_gives_ln_two(self):
        prices = np.full(MINUTES_PER_DAY, 1250.0)
        prices[500:] = 2500.0
        rows = [f"{minute_stamp(DAY1, m)},{prices[m]}"
                for m in range(MINUTES_PER_DAY)]
        r = to_returns(ingest_ticks(tick_csv(rows)))
        assert r[499] == pytest.approx(np.log(2.0), abs=1e-15)

    def test_no_overnight_return(self):
        rows = (full_day_rows(DAY1, base_price=1250.0)
                + full_day_rows(DAY2, base_price=1400.0))
        bars = ingest_ticks(tick_csv(rows))
        r = to_returns(bars)
        assert r.size == 2 * (MINUTES_PER_DAY - 1)
        # overnight gap 1250->1400 must not appear anywhere in the returns
        assert np.max(np.abs(r)) < np.log(1400.0 / 1250.0) / 2
        np.testing.assert_array_equal(
            bars.return_day_index,
            np.repeat([0, 1], MINUTES_PER_DAY - 1))


class TestCsvRoundtrip:
    def test_write_then_ingest_is_identity(self, tmp_path):
        bars = ingest_ticks(tick_csv(full_day_rows(DAY1)))
        path = tmp_path / "bars.csv"
        write_bars_csv(bars, path)
        back = ingest_ticks(str(path))
        np.testing.assert_array_equal(back.prices, bars.prices)
        assert back.timestamps == bars.timestamps
        assert back.days == bars.days
