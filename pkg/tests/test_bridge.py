import numpy as np
import pytest

from trendhmm import (BridgeFailureError, HmmParams, InvalidParameterError,
                      TrendGrid, sticky_uniform_params)
from trendhmm.bridge import (BridgeEstimate, bridge_marginal_likelihood,
                             select_k_bridge, _iterate_bridge)
from trendhmm.mcmc import McmcConfig, McmcPrior, mcmc_sample

from conftest import sample_hmm
from oracles import nig_log_evidence

GRID = TrendGrid(alpha=0.05, omega=2.0)


@pytest.fixture(scope="module")
def three_state_returns():
    truth = sticky_uniform_params(3, 0.95, mu=[-0.5, 0.0, 0.5],
                                  sigma2=[0.04, 0.04, 0.04], grid=GRID)
    return sample_hmm(np.random.default_rng(21), truth, 1600)


@pytest.fixture(scope="module")
def two_state_returns():
    truth = sticky_uniform_params(2, 0.95, mu=[-0.4, 0.4],
                                  sigma2=[0.04, 0.04], grid=GRID)
    return sample_hmm(np.random.default_rng(6), truth, 1200)


class TestBridgeEstimate:
    def test_rejects_non_finite(self):
        with pytest.raises(BridgeFailureError):
            BridgeEstimate(log_marginal_likelihood=np.nan, standard_error=0.1,
                           n_importance=10, n_posterior=10)

    def test_rejects_negative_se(self):
        with pytest.raises(BridgeFailureError):
            BridgeEstimate(log_marginal_likelihood=-5.0, standard_error=-1.0,
                           n_importance=10, n_posterior=10)


class TestBridgeRecursion:
    def test_exact_ratio_is_a_fixed_point(self):
        # p* = e^5 q everywhere: every weight is 5, the answer is 5
        lam = _iterate_bridge(np.full(100, 5.0), np.full(80, 5.0))
        assert lam == pytest.approx(5.0, abs=1e-8)

    def test_disjoint_support_fails(self):
        with pytest.raises(BridgeFailureError):
            _iterate_bridge(np.full(50, -np.inf), np.zeros(50))


class TestBridgeMarginalLikelihood:
    def test_single_state_matches_conjugate_evidence(self):
        rng = np.random.default_rng(7)
        truth = sticky_uniform_params(1, 0.95, mu=[0.1], sigma2=[0.09],
                                      grid=GRID)
        r = sample_hmm(rng, truth, 1500)
        prior = McmcPrior(conjugate_scaling=2.0, variance_shape=3.0,
                          variance_scale=0.05)
        chain = mcmc_sample(r, 1, GRID, prior,
                            McmcConfig(burn_in=500, run_length=2500, seed=3))
        est = bridge_marginal_likelihood(chain, r, prior)
        z = GRID.snap(r)
        # the continuous evidence, corrected for the grid bin width
        oracle = nig_log_evidence(z, b0=float(z.mean()), kappa0=2.0, c0=3.0,
                                  C0=0.05) + z.size * np.log(GRID.alpha)
        assert est.log_marginal_likelihood == pytest.approx(oracle, abs=0.1)
        assert est.n_importance == est.n_posterior == 2000
        assert 0.0 < est.standard_error < 0.05

    def test_three_state_data_orders_k(self, three_state_returns):
        r = three_state_returns
        cfg = McmcConfig(burn_in=400, run_length=1900, seed=11)
        log_ml = {}
        for k in (2, 3, 4):
            chain = mcmc_sample(r, k, GRID, None, cfg)
            log_ml[k] = bridge_marginal_likelihood(
                chain, r, McmcPrior()).log_marginal_likelihood
        assert log_ml[3] > log_ml[2]
        assert log_ml[3] > log_ml[4]

    def test_reproducible_and_seedable(self, two_state_returns):
        r = two_state_returns
        chain = mcmc_sample(r, 2, GRID, None,
                            McmcConfig(burn_in=300, run_length=1400, seed=5))
        a = bridge_marginal_likelihood(chain, r, McmcPrior())
        b = bridge_marginal_likelihood(chain, r, McmcPrior())
        assert a.log_marginal_likelihood == b.log_marginal_likelihood
        c = bridge_marginal_likelihood(chain, r, McmcPrior(), seed=99)
        assert c.log_marginal_likelihood != a.log_marginal_likelihood
        assert abs(c.log_marginal_likelihood - a.log_marginal_likelihood) < 0.5

    def test_requires_enough_draws(self, two_state_returns):
        r = two_state_returns
        chain = mcmc_sample(r, 2, GRID, None,
                            McmcConfig(burn_in=100, run_length=1000, seed=1))
        with pytest.raises(InvalidParameterError):
            bridge_marginal_likelihood(chain, r, McmcPrior())

    def test_importance_count_validation(self, two_state_returns):
        r = two_state_returns
        chain = mcmc_sample(r, 2, GRID, None,
                            McmcConfig(burn_in=200, run_length=1300, seed=5))
        with pytest.raises(InvalidParameterError):
            bridge_marginal_likelihood(chain, r, McmcPrior(), n_importance=0)
        est = bridge_marginal_likelihood(chain, r, McmcPrior(),
                                         n_importance=600)
        assert est.n_importance == 600


class TestSelectKBridge:
    def test_single_candidate(self):
        rng = np.random.default_rng(2)
        r = rng.normal(0.0, 0.2, 600)
        table = select_k_bridge(r, GRID, k_range=[1],
                                config=McmcConfig(burn_in=100,
                                                  run_length=1200, seed=0))
        assert table.best_k == 1
        assert len(table.scores) == 1
        assert table.scores[0].error is None
        assert isinstance(table.best_params, HmmParams)

    def test_two_state_data_selects_two(self, two_state_returns):
        table = select_k_bridge(two_state_returns, GRID, k_range=range(1, 4),
                                config=McmcConfig(burn_in=300,
                                                  run_length=1400, seed=7))
        assert table.best_k == 2
        assert table.log_bayes_factor(2, 1) > 0
        assert table.best_params.n_states == 2

    def test_warns_above_reliable_k(self):
        rng = np.random.default_rng(3)
        r = rng.normal(0.0, 0.2, 120)
        with pytest.warns(RuntimeWarning, match="degrades above"):
            try:
                select_k_bridge(r, GRID, k_range=[7],
                                config=McmcConfig(burn_in=50, run_length=1100,
                                                  seed=0))
            except BridgeFailureError:
                pass  # the warning, not the K=7 fit, is under test

    def test_per_k_failure_recorded_and_skipped(self):
        rng = np.random.default_rng(4)
        r = rng.normal(0.0, 0.2, 25)  # enough for K<=2, not for K=3
        table = select_k_bridge(r, GRID, k_range=range(1, 4),
                                config=McmcConfig(burn_in=50,
                                                  run_length=1100, seed=0))
        by_k = {s.k: s for s in table.scores}
        assert by_k[3].error is not None
        assert np.isnan(by_k[3].log_marginal_likelihood)
        assert table.best_k in (1, 2)
        assert 3 not in table.params_by_k

    def test_all_failures_raise(self):
        r = np.random.default_rng(5).normal(0.0, 0.2, 25)
        with pytest.raises(BridgeFailureError, match="all state counts"):
            select_k_bridge(r, GRID, k_range=[3, 4],
                            config=McmcConfig(burn_in=50, run_length=1100,
                                              seed=0))

    def test_empty_k_range(self):
        with pytest.raises(InvalidParameterError):
            select_k_bridge(np.zeros(100) + 0.05, GRID, k_range=[])
