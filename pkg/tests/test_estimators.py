import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from trendhmm import (InvalidParameterError, TrendGrid, baum_welch,
                      iohmm_learn, iohmm_signal, log_likelihood,
                      run_hmm_signal, sticky_uniform_params)
from trendhmm.estimators import TrendHmm, TrendIohmm, resolve_grid
from trendhmm.filtering import TransferFunction
from trendhmm.sideinfo import PredictorSeries
from trendhmm.splines import fit_zero_mean_spline
from trendhmm.synthetic import generate_synthetic

GRID = TrendGrid(alpha=2e-4, omega=2e-3)


def sticky(mu, beta=0.95, sigma2=4e-8):
    return sticky_uniform_params(len(mu), beta, mu=mu,
                                 sigma2=[sigma2] * len(mu), grid=GRID)


@pytest.fixture(scope="module")
def returns():
    return generate_synthetic(sticky([-4e-4, 4e-4]), n_days=2,
                              seed=31).returns


def line_spline():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, 1.0, 300)
    return fit_zero_mean_spline(x, x - 0.5, n_knots=6, domain=(0.0, 1.0))


class TestResolveGrid:
    def test_recovers_planted_spacing(self, returns):
        grid = resolve_grid(returns)
        assert grid.alpha == pytest.approx(GRID.alpha)
        assert grid.omega >= np.abs(returns).max()

    def test_explicit_spacing_respected(self, returns):
        grid = resolve_grid(returns, alpha=1e-4, omega=1e-3)
        assert (grid.alpha, grid.omega) == (1e-4, 1e-3)

    def test_inferred_grid_is_bounded(self):
        r = np.array([1e-9, -2.0e-1, 1e-9, 2.0e-1] * 10)
        grid = resolve_grid(r)
        assert grid.size <= 2 * 512 + 3


class TestTrendHmm:
    def test_fit_returns_self_and_sets_state(self, returns):
        est = TrendHmm(n_states=2, alpha=GRID.alpha, omega=GRID.omega)
        assert est.fit(returns) is est
        assert est.params_.n_states == 2
        assert est.trace_.n_iterations >= 1

    def test_predict_matches_functional_pipeline(self, returns):
        est = TrendHmm(n_states=2, alpha=GRID.alpha,
                       omega=GRID.omega).fit(returns)
        params, _ = baum_welch(returns, 2, GRID)
        want = run_hmm_signal(returns, params, TransferFunction(kind="sign"))
        np.testing.assert_array_equal(est.predict(returns), want.values)
        np.testing.assert_array_equal(est.predict_returns(returns),
                                      want.predictions)

    def test_score_is_mean_loglik(self, returns):
        est = TrendHmm(n_states=2, alpha=GRID.alpha,
                       omega=GRID.omega).fit(returns)
        want = log_likelihood(returns, est.params_) / returns.size
        assert est.score(returns) == pytest.approx(want, rel=1e-12)

    def test_plr_method(self):
        market = generate_synthetic(sticky([-5e-4, 5e-4], beta=0.995),
                                    n_days=2, seed=32)
        est = TrendHmm(n_states=2, method="plr", alpha=GRID.alpha,
                       omega=GRID.omega).fit(market.returns)
        assert len(est.segmentation_.segments) >= 2
        assert est.params_.mu[0] < est.params_.mu[-1]

    def test_mcmc_method_is_seed_deterministic(self, returns):
        kwargs = dict(n_states=2, method="mcmc", alpha=GRID.alpha,
                      omega=GRID.omega, burn_in=50, run_length=250, seed=7)
        a = TrendHmm(**kwargs).fit(returns)
        b = TrendHmm(**kwargs).fit(returns)
        np.testing.assert_array_equal(a.params_.mu, b.params_.mu)
        np.testing.assert_array_equal(a.params_.A, b.params_.A)
        assert a.chain_.n_draws == 200

    def test_bad_method_fails_at_fit(self, returns):
        est = TrendHmm(method="gradient")
        with pytest.raises(InvalidParameterError, match="method"):
            est.fit(returns)

    def test_unfitted_predict_raises(self, returns):
        with pytest.raises(NotFittedError):
            TrendHmm().predict(returns)

    def test_sklearn_param_protocol(self):
        est = TrendHmm(n_states=3, transfer="linear", seed=11)
        params = est.get_params()
        assert params["n_states"] == 3
        assert params["transfer"] == "linear"
        est.set_params(n_states=4)
        assert est.n_states == 4
        twin = clone(est)
        assert twin.get_params() == est.get_params()


@pytest.fixture(scope="module")
def data():
    spline = line_spline()
    rng = np.random.default_rng(33)
    T = 4 * 855
    x = rng.uniform(0.0, 1.0, T)
    from trendhmm import spline_roots
    bucket = spline_roots(spline).assign(x)
    market = generate_synthetic(
        [sticky([-6e-4, -3e-4], beta=0.97),
         sticky([3e-4, 6e-4], beta=0.97)],
        n_days=4, seed=34, bucket_index=bucket)
    return spline, x, market.returns


class TestTrendIohmm:
    def test_fit_predict_match_functional_pipeline(self, data):
        spline, x, returns = data
        est = TrendIohmm(spline=spline, n_states=2, alpha=GRID.alpha,
                         omega=GRID.omega)
        est.fit(returns, inputs=x)
        X = PredictorSeries(values=x, kind="volratio")
        want_params = iohmm_learn(returns, X, spline, 2, GRID)
        want = iohmm_signal(returns, X, want_params,
                            TransferFunction(kind="sign"))
        np.testing.assert_array_equal(est.predict(returns, inputs=x),
                                      want.values)
        assert np.isfinite(est.score(returns, inputs=x))

    def test_inputs_required(self, data):
        spline, x, returns = data
        est = TrendIohmm(spline=spline, alpha=GRID.alpha, omega=GRID.omega)
        with pytest.raises(InvalidParameterError, match="inputs"):
            est.fit(returns)

    def test_spline_required(self, data):
        _, x, returns = data
        with pytest.raises(InvalidParameterError, match="spline"):
            TrendIohmm().fit(returns, inputs=x)

    def test_clone_keeps_spline(self, data):
        # clone deep-copies plain-object params, so compare content
        spline, _, _ = data
        est = TrendIohmm(spline=spline, n_states=3)
        twin = clone(est)
        np.testing.assert_array_equal(twin.spline.coefficients,
                                      spline.coefficients)
        assert twin.spline.kind == spline.kind
        assert twin.n_states == 3
