import datetime as dt

import numpy as np
import pytest

from trendhmm import InsufficientDataError, InvalidParameterError, OutOfSessionError
from trendhmm.sideinfo import (MINUTES_PER_DAY, SESSION_CLOSE, SESSION_OPEN,
                               EwmaConfig, PredictorSeries, ewma_vol,
                               normalize_returns, seasonal_index,
                               seasonal_series, vol_ratio)

LAM = 0.79


class TestEwmaConfig:
    def test_defaults(self):
        cfg = EwmaConfig()
        assert cfg.lam == 0.79
        assert cfg.psi == 50

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.2, 1.5])
    def test_lam_out_of_range(self, lam):
        with pytest.raises(InvalidParameterError):
            EwmaConfig(lam=lam)

    def test_psi_at_least_one(self):
        with pytest.raises(InvalidParameterError):
            EwmaConfig(psi=0)

    def test_weights_geometric(self):
        w = EwmaConfig(lam=0.5, psi=3).weights
        np.testing.assert_allclose(w, [0.5, 0.25, 0.125, 0.0625], atol=1e-15)


class TestEwmaVol:
    def test_all_zero_returns(self):
        vol, warm = ewma_vol(np.zeros(300))
        np.testing.assert_array_equal(vol, 0.0)
        assert warm[:50].all() and not warm[50:].any()

    def test_constant_returns_closed_form(self):
        # geometric sum: |c| * sqrt(1 - lam^(psi+1)) once past warm-up
        c, psi = -0.37, 50
        vol, warm = ewma_vol(np.full(200, c), EwmaConfig(lam=LAM, psi=psi))
        expect = abs(c) * np.sqrt(1.0 - LAM ** (psi + 1))
        np.testing.assert_allclose(vol[~warm], expect, atol=1e-12)

    def test_single_recent_impulse_closed_form(self):
        c = 2.5
        r = np.zeros(120)
        r[-1] = c
        vol, _ = ewma_vol(r, EwmaConfig(lam=LAM, psi=50))
        assert vol[-1] == pytest.approx(c * np.sqrt(1.0 - LAM), abs=1e-12)
        assert vol[-2] == 0.0

    def test_sign_flip_invariant(self):
        rng = np.random.default_rng(3)
        r = rng.normal(0, 0.1, 400)
        v_pos, _ = ewma_vol(r)
        v_neg, _ = ewma_vol(-r)
        np.testing.assert_allclose(v_pos, v_neg, atol=1e-15)

    def test_scales_linearly(self):
        rng = np.random.default_rng(4)
        r = rng.normal(0, 0.1, 400)
        v1, _ = ewma_vol(r)
        v3, _ = ewma_vol(3.0 * r)
        np.testing.assert_allclose(v3, 3.0 * v1, atol=1e-12)

    def test_short_history_is_warm_up_not_error(self):
        vol, warm = ewma_vol(np.ones(5), EwmaConfig(psi=50))
        assert warm.all()
        assert np.isfinite(vol).all()


class TestVolRatio:
    def test_constant_returns_closed_form(self):
        X = vol_ratio(np.full(400, 0.02), lam=LAM)
        got = X.values[X.defined]
        # unit-mass weighting puts the constant-input ratio at exactly 1;
        # the truncation-only geometric form differs by ~3e-6 at 0.79
        np.testing.assert_allclose(got, 1.0, atol=1e-12)
        trunc_form = np.sqrt((1.0 - LAM ** 51) / (1.0 - LAM ** 101))
        np.testing.assert_allclose(got, trunc_form, atol=5e-6)

    def test_scale_invariant(self):
        rng = np.random.default_rng(7)
        r = rng.normal(0, 0.05, 500)
        a = vol_ratio(r)
        b = vol_ratio(10.0 * r)
        np.testing.assert_array_equal(a.defined, b.defined)
        np.testing.assert_allclose(a.values[a.defined], b.values[b.defined],
                                   atol=1e-12)

    def test_all_zero_undefined_everywhere(self):
        X = vol_ratio(np.zeros(300))
        assert not X.defined.any()
        np.testing.assert_array_equal(X.values, 0.0)

    def test_recent_scale_up_pushes_ratio_above_one(self):
        rng = np.random.default_rng(8)
        r = rng.normal(0, 0.05, 400)
        r[-50:] *= 2.0
        X = vol_ratio(r)
        assert X.defined[-1]
        assert X.values[-1] > 1.0

    def test_fast_window_must_be_shorter(self):
        with pytest.raises(InvalidParameterError):
            vol_ratio(np.zeros(300), psi_fast=100, psi_slow=100)

    def test_needs_slow_window_history(self):
        with pytest.raises(InsufficientDataError):
            vol_ratio(np.zeros(99))

    def test_kind_is_volratio(self):
        assert vol_ratio(np.ones(200)).kind == "volratio"


class TestSeasonalIndex:
    def test_session_open_is_one(self):
        assert seasonal_index(dt.time(1, 0)) == 1

    def test_session_close_is_last_bucket(self):
        assert seasonal_index(dt.time(15, 15)) == MINUTES_PER_DAY

    def test_minute_after_open(self):
        assert seasonal_index(dt.time(1, 1)) == 2

    def test_accepts_datetime(self):
        ts = dt.datetime(2011, 1, 3, 9, 30)
        assert seasonal_index(ts) == (9 - 1) * 60 + 30 + 1

    @pytest.mark.parametrize("t", [dt.time(0, 59), dt.time(15, 16),
                                   dt.time(23, 0)])
    def test_outside_session_raises(self, t):
        with pytest.raises(OutOfSessionError):
            seasonal_index(t)

    def test_bijection_over_session_minutes(self):
        minutes = [dt.time((60 + m) // 60, (60 + m) % 60)
                   for m in range(MINUTES_PER_DAY)]
        idx = [seasonal_index(t) for t in minutes]
        assert sorted(idx) == list(range(1, MINUTES_PER_DAY + 1))
        assert len(set(idx)) == MINUTES_PER_DAY

    def test_seasonal_series_roundtrip(self):
        stamps = [dt.datetime(2011, 1, 3, 1, m) for m in range(5)]
        X = seasonal_series(stamps)
        assert X.kind == "seasonal"
        np.testing.assert_array_equal(X.values, [1, 2, 3, 4, 5])


class TestPredictorSeries:
    def test_seasonal_values_validated(self):
        with pytest.raises(InvalidParameterError):
            PredictorSeries(values=np.array([0.0, 3.0]), kind="seasonal")
        with pytest.raises(InvalidParameterError):
            PredictorSeries(values=np.array([1.5]), kind="seasonal")
        with pytest.raises(InvalidParameterError):
            PredictorSeries(values=np.array([857.0]), kind="seasonal")

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidParameterError):
            PredictorSeries(values=np.zeros(3), kind="sentiment")

    def test_defined_mask_defaults_true(self):
        X = PredictorSeries(values=np.ones(4), kind="volratio")
        assert X.defined.all()
        assert len(X) == 4

    def test_values_read_only(self):
        X = PredictorSeries(values=np.ones(4), kind="volratio")
        with pytest.raises(ValueError):
            X.values[0] = 2.0


class TestNormalizeReturns:
    def test_iid_gaussian_calibrates_to_unit_variance(self):
        # statistical oracle: N(0, 4) input should standardize to var ~ 1
        rng = np.random.default_rng(12)
        z, defined = normalize_returns(rng.normal(0.0, 2.0, 20_000))
        assert defined.sum() > 19_000
        assert 0.8 <= z[defined].var() <= 1.2

    def test_constant_input_undefined(self):
        z, defined = normalize_returns(np.full(500, 0.01))
        assert not defined.any()
        np.testing.assert_array_equal(z, 0.0)

    def test_mean_shift_decays_toward_zero(self):
        rng = np.random.default_rng(13)
        r = rng.normal(0.0, 1.0, 6000)
        r[3000:] += 5.0
        z, defined = normalize_returns(r)
        early = z[3000:3500][defined[3000:3500]].mean()
        late = z[5500:][defined[5500:]].mean()
        assert early > 3.0 * abs(late)
        assert abs(late) < 1.0

    def test_causal_future_mutation_cannot_leak(self):
        rng = np.random.default_rng(14)
        r = rng.normal(0.0, 1.0, 1000)
        z_a, d_a = normalize_returns(r)
        r2 = r.copy()
        r2[600:] = 99.0
        z_b, d_b = normalize_returns(r2)
        np.testing.assert_array_equal(z_a[:600], z_b[:600])
        np.testing.assert_array_equal(d_a[:600], d_b[:600])

    def test_warm_up_undefined(self):
        rng = np.random.default_rng(15)
        z, defined = normalize_returns(rng.normal(0, 1, 300))
        assert not defined[:101].any()
        assert defined[101:].all()


class TestSessionConstants:
    def test_session_length_matches_grid(self):
        open_min = SESSION_OPEN.hour * 60 + SESSION_OPEN.minute
        close_min = SESSION_CLOSE.hour * 60 + SESSION_CLOSE.minute
        assert close_min - open_min + 1 == MINUTES_PER_DAY
