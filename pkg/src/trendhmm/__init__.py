"""trendhmm: regime-switching intraday momentum on a discrete return grid."""

from .backtest import (BacktestReport, Correlation, CostModel, SharpeRatio,
                       build_report, correlation, daily_sums, sharpe,
                       simulate, trade_count)
from .bars import BarSeries, InstrumentMeta, ingest_ticks, to_returns, \
    write_bars_csv
from .baumwelch import (EmConfig, EmTrace, KScore, ScoreTable, baum_welch,
                        flat_start, forward_backward, n_free_parameters,
                        select_k_penalized)
from .bridge import (BridgeEstimate, BridgeScore, BridgeTable,
                     bridge_marginal_likelihood, select_k_bridge)
from .estimators import TrendHmm, TrendIohmm, resolve_grid
from .exceptions import (BridgeFailureError, DegenerateFitError,
                         DegenerateLikelihoodError, DegenerateSplineError,
                         IngestError, InsufficientDataError,
                         InsufficientSegmentsError, InvalidParameterError,
                         OutOfSessionError, SamplerError, SplineFitError)
from .filtering import (FilterState, SignalSeries, TransferFunction,
                        filter_step, init_filter, log_likelihood,
                        predict_return, run_hmm_signal)
from .grid import TrendGrid, discretized_gaussian_pmf, discretized_mean
from .iohmm import (BucketPartition, IohmmParams, bucket_data, iohmm_learn,
                    iohmm_signal, spline_roots)
from .mcmc import (McmcChain, McmcConfig, McmcPrior, log_posterior_unnorm,
                   mcmc_sample, posterior_mode, split_zscore)
from .params import HmmParams, stationary_distribution, sticky_uniform_params
from .plr import Segment, Segmentation, default_theta, durbin_watson, plr_segment
from .sideinfo import (EwmaConfig, PredictorSeries, ewma_vol,
                       normalize_returns, seasonal_index, seasonal_series,
                       vol_ratio)
from .splines import SplinePredictor, fit_zero_mean_spline, \
    rolling_spline_forecast
from .synthetic import SyntheticMarket, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "BacktestReport", "Correlation", "CostModel", "SharpeRatio",
    "build_report", "correlation", "daily_sums", "sharpe", "simulate",
    "trade_count",
    "BarSeries", "InstrumentMeta", "ingest_ticks", "to_returns",
    "write_bars_csv",
    "TrendHmm", "TrendIohmm", "resolve_grid",
    "EmConfig", "EmTrace", "KScore", "ScoreTable", "baum_welch", "flat_start",
    "forward_backward", "n_free_parameters", "select_k_penalized",
    "BridgeEstimate", "BridgeScore", "BridgeTable",
    "bridge_marginal_likelihood", "select_k_bridge",
    "BridgeFailureError", "DegenerateFitError", "DegenerateLikelihoodError",
    "DegenerateSplineError", "IngestError", "InsufficientDataError",
    "InsufficientSegmentsError", "InvalidParameterError", "OutOfSessionError",
    "SamplerError", "SplineFitError",
    "FilterState", "SignalSeries", "TransferFunction",
    "filter_step", "init_filter", "log_likelihood", "predict_return",
    "run_hmm_signal",
    "TrendGrid", "discretized_gaussian_pmf", "discretized_mean",
    "BucketPartition", "IohmmParams", "bucket_data", "iohmm_learn",
    "iohmm_signal", "spline_roots",
    "McmcChain", "McmcConfig", "McmcPrior", "log_posterior_unnorm",
    "mcmc_sample", "posterior_mode", "split_zscore",
    "HmmParams", "stationary_distribution", "sticky_uniform_params",
    "Segment", "Segmentation", "default_theta", "durbin_watson",
    "plr_segment",
    "EwmaConfig", "PredictorSeries", "ewma_vol", "normalize_returns",
    "seasonal_index", "seasonal_series", "vol_ratio",
    "SplinePredictor", "fit_zero_mean_spline", "rolling_spline_forecast",
    "SyntheticMarket", "generate_synthetic",
]
