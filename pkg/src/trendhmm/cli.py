"""Command-line front end: synth / ingest / learn / select-k / fit-spline /
backtest.

Every command is deterministic given its resolved configuration, and every
report embeds that configuration.  Settings resolve in three layers: click
defaults, then the ``--config`` key-value file (flat YAML), then explicit
command-line flags.  Module errors surface as a one-line diagnostic and a
nonzero exit status.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass

import click
import numpy as np
import yaml

from .backtest import CostModel, build_report
from .bars import (BarSeries, InstrumentMeta, ingest_ticks, to_returns,
                   write_bars_csv)
from .baumwelch import EmConfig, baum_welch, select_k_penalized
from .bridge import select_k_bridge
from .estimators import resolve_grid
from .exceptions import InvalidParameterError
from .filtering import TransferFunction, run_hmm_signal
from .grid import TrendGrid
from .iohmm import IohmmParams, iohmm_learn, iohmm_signal
from .mcmc import McmcConfig, mcmc_sample, posterior_mode, split_zscore
from .params import HmmParams, sticky_uniform_params
from .plr import default_theta, plr_segment
from .sideinfo import (EwmaConfig, PredictorSeries, normalize_returns,
                       seasonal_series, vol_ratio)
from .splines import (DEFAULT_KNOTS, SplinePredictor, fit_zero_mean_spline)
from .synthetic import generate_synthetic

LEARNER_CHOICES = ("plr", "bw", "mcmc", "iohmm")
PREDICTOR_CHOICES = ("volratio", "seasonal")
TF_CHOICES = ("sign", "linear", "identity")


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command invocation; embedded in reports."""

    command: str
    seed: int = 0
    data: str | None = None
    model: str | None = None
    spline: str | None = None
    out: str | None = None
    learner: str = "bw"
    k: int = 2
    k_range: str = "1..6"
    predictor: str = "volratio"
    tf: str = "sign"
    cost_bps: float | None = None
    # matches the synthetic generator's default tick (alpha * price / 20 at
    # the default grid and start price) so the out-of-box pipeline is
    # self-consistent; pass the real tick (e.g. 0.25) for exchange data
    tick_size: float = 0.0125
    alpha: float | None = None
    omega: float | None = None
    days: int = 10
    beta: float = 0.95
    mu_scale: float = 4e-4
    sigma: float = 2e-4
    start_price: float = 1250.0
    max_iterations: int = 200
    tol: float = 1e-6
    burn_in: int = 2000
    run_length: int = 10000
    lam: float = 0.79
    psi_fast: int = 50
    psi_slow: int = 100
    knots: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items()
                if v is not None}


def _load_config(path) -> dict:
    with open(path) as fh:
        mapping = yaml.safe_load(fh) or {}
    if not isinstance(mapping, dict):
        raise click.UsageError(f"config file {path} must be a key-value map")
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"command"}
    unknown = set(mapping) - known
    if unknown:
        raise click.UsageError(
            f"unknown config keys: {', '.join(sorted(unknown))}")
    return mapping


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(f"{type(exc).__name__}: {exc}")


def _parse_k_range(text: str) -> list[int]:
    text = text.strip()
    try:
        for sep in ("..", "-"):
            if sep in text:
                lo, hi = text.split(sep, 1)
                out = list(range(int(lo), int(hi) + 1))
                break
        else:
            out = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(
            f"--k-range must look like 1..6, 1-6 or 1,2,3; got {text!r}")
    if not out or min(out) < 1:
        raise click.UsageError(f"--k-range must cover counts >= 1, got {text!r}")
    return out


def _load_bars(cfg: RunConfig) -> BarSeries:
    if cfg.data is None:
        raise click.UsageError("--data is required (bars or ticks CSV)")
    meta = InstrumentMeta(tick_size=cfg.tick_size)
    return ingest_ticks(cfg.data, meta)


def _resolve_grid(cfg: RunConfig, returns) -> TrendGrid:
    return resolve_grid(returns, cfg.alpha, cfg.omega)


def _predictor_series(cfg: RunConfig, bars: BarSeries) -> PredictorSeries:
    """Side-information series aligned with the return sequence."""
    returns = to_returns(bars)
    if cfg.predictor == "volratio":
        return vol_ratio(returns, lam=cfg.lam, psi_fast=cfg.psi_fast,
                         psi_slow=cfg.psi_slow)
    stamps = np.asarray(bars.timestamps, dtype=object).reshape(
        bars.n_days, -1)[:, 1:].ravel()
    return seasonal_series(stamps)


def _usable_inputs(X: PredictorSeries):
    """First index from which the predictor can drive the model, with
    interior gaps forward-filled (causally)."""
    defined = np.flatnonzero(X.defined)
    if defined.size == 0:
        raise InvalidParameterError(
            f"the {X.kind} predictor is never defined on this data")
    start = int(defined[0])
    values = X.values.copy()
    for t in range(start + 1, values.size):
        if not X.defined[t]:
            values[t] = values[t - 1]
    return start, values


def _transfer(cfg: RunConfig) -> TransferFunction:
    return TransferFunction(kind=cfg.tf)


def _cost_model(cfg: RunConfig, bars: BarSeries) -> CostModel:
    if cfg.cost_bps is not None:
        return CostModel(proportional=cfg.cost_bps * 1e-4)
    return CostModel.from_instrument(cfg.tick_size,
                                     float(np.median(bars.prices)))


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


_GLOBAL_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="flat YAML key-value file; flags win"),
    click.option("--seed", type=int, default=None, help="master RNG seed"),
    click.option("--out", type=click.Path(), default=None,
                 help="output path"),
]


def _with_options(*options):
    def wrap(fn):
        for opt in reversed(_GLOBAL_OPTIONS + list(options)):
            fn = opt(fn)
        return fn
    return wrap


def _resolve(command: str, config_path, **flags) -> RunConfig:
    layered = dict(_load_config(config_path)) if config_path else {}
    layered.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig(command=command, **layered)
    except TypeError as exc:
        raise click.UsageError(str(exc))


@click.group()
def main():
    """Latent-trend HMM toolkit: learn models, fit predictors, backtest."""


@main.command()
@_with_options(
    click.option("--k", type=int, default=None, help="number of states"),
    click.option("--days", type=int, default=None),
    click.option("--beta", type=float, default=None,
                 help="self-transition probability"),
    click.option("--mu-scale", type=float, default=None,
                 help="largest state mean; states span ±mu-scale"),
    click.option("--sigma", type=float, default=None,
                 help="per-state return volatility"),
    click.option("--alpha", type=float, default=None),
    click.option("--omega", type=float, default=None),
    click.option("--start-price", type=float, default=None),
    click.option("--tick-size", type=float, default=None),
)
def synth(config_path, **flags):
    """Write a synthetic minute-bar CSV drawn from a sticky K-state model."""
    cfg = _resolve("synth", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    try:
        alpha = cfg.alpha if cfg.alpha is not None else 2e-4
        omega = cfg.omega if cfg.omega is not None else 10 * alpha
        grid = TrendGrid(alpha=alpha, omega=omega)
        mu = (np.linspace(-cfg.mu_scale, cfg.mu_scale, cfg.k)
              if cfg.k > 1 else np.zeros(1))
        params = sticky_uniform_params(cfg.k, cfg.beta, mu=mu,
                                       sigma2=np.full(cfg.k, cfg.sigma ** 2),
                                       grid=grid)
        market = generate_synthetic(params, n_days=cfg.days, seed=cfg.seed,
                                    start_price=cfg.start_price,
                                    tick_size=cfg.tick_size)
        write_bars_csv(market.bars, cfg.out)
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {cfg.days} synthetic days "
               f"({market.returns.size} returns, tick {cfg.tick_size}) "
               f"to {cfg.out}")


@main.command()
@_with_options(
    click.option("--data", type=click.Path(exists=True), default=None,
                 help="tick CSV (timestamp,price[,volume[,contract]])"),
    click.option("--tick-size", type=float, default=None),
)
def ingest(config_path, **flags):
    """Aggregate a tick CSV onto the canonical minute grid."""
    cfg = _resolve("ingest", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    try:
        bars = _load_bars(cfg)
        write_bars_csv(bars, cfg.out)
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {bars.n_days} days x 856 bars to {cfg.out}")


@main.command()
@_with_options(
    click.option("--data", type=click.Path(exists=True), default=None),
    click.option("--learner", type=click.Choice(LEARNER_CHOICES),
                 default=None),
    click.option("--k", type=int, default=None),
    click.option("--spline", "spline", type=click.Path(exists=True),
                 default=None, help="frozen spline JSON (iohmm learner)"),
    click.option("--predictor", type=click.Choice(PREDICTOR_CHOICES),
                 default=None),
    click.option("--tick-size", type=float, default=None),
    click.option("--alpha", type=float, default=None),
    click.option("--omega", type=float, default=None),
    click.option("--burn-in", type=int, default=None),
    click.option("--run-length", type=int, default=None),
)
def learn(config_path, **flags):
    """Fit model parameters and persist them with a learning trace."""
    cfg = _resolve("learn", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    try:
        bars = _load_bars(cfg)
        returns = to_returns(bars)
        grid = _resolve_grid(cfg, returns)
        trace_blob: dict = {"config": cfg.to_dict()}

        if cfg.learner == "bw":
            em = EmConfig(max_iterations=cfg.max_iterations, tol=cfg.tol)
            params, trace = baum_welch(returns, cfg.k, grid, em)
            trace_blob["loglik_curve"] = trace.logliks.tolist()
            trace_blob["converged"] = trace.converged
        elif cfg.learner == "plr":
            seg = plr_segment(bars.prices)
            params = default_theta(seg, grid, n_states=cfg.k)
            trace_blob["n_segments"] = len(seg.segments)
        elif cfg.learner == "mcmc":
            mc = McmcConfig(burn_in=cfg.burn_in, run_length=cfg.run_length,
                            seed=cfg.seed)
            chain = mcmc_sample(returns, cfg.k, grid, config=mc)
            params = posterior_mode(chain)
            trace_blob["chain_summary"] = {
                "n_draws": chain.n_draws,
                "log_posterior_mean": float(chain.log_posterior.mean()),
                "split_zscore": split_zscore(chain.log_posterior),
            }
        else:  # iohmm
            if cfg.spline is None:
                raise click.UsageError(
                    "--spline is required for the iohmm learner")
            with open(cfg.spline) as fh:
                spline = SplinePredictor.from_json(fh.read())
            X = _predictor_series(cfg, bars)
            start, values = _usable_inputs(X)
            series = PredictorSeries(values=values[start:], kind=X.kind)
            em = EmConfig(max_iterations=cfg.max_iterations, tol=cfg.tol)
            params = iohmm_learn(returns[start:], series, spline, cfg.k,
                                 grid, em)
            trace_blob["warmup_dropped"] = start
            trace_blob["n_buckets"] = params.partition.n_buckets

        params.to_json(cfg.out)
        _write_json(str(cfg.out) + ".trace.json", trace_blob)
    except click.ClickException:
        raise
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    click.echo(f"wrote {cfg.learner} model (K={cfg.k}) to {cfg.out}")


@main.command("select-k")
@_with_options(
    click.option("--data", type=click.Path(exists=True), default=None),
    click.option("--learner", type=click.Choice(("bw", "mcmc")),
                 default=None),
    click.option("--k-range", type=str, default=None,
                 help="1..6, 1-6 or comma list"),
    click.option("--tick-size", type=float, default=None),
    click.option("--alpha", type=float, default=None),
    click.option("--omega", type=float, default=None),
    click.option("--burn-in", type=int, default=None),
    click.option("--run-length", type=int, default=None),
)
def select_k(config_path, **flags):
    """Sweep state counts and write a per-K score table (CSV)."""
    cfg = _resolve("select-k", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    ks = _parse_k_range(cfg.k_range)
    try:
        bars = _load_bars(cfg)
        returns = to_returns(bars)
        grid = _resolve_grid(cfg, returns)
        if cfg.learner == "bw":
            em = EmConfig(max_iterations=cfg.max_iterations, tol=cfg.tol)
            table = select_k_penalized(returns, grid, k_range=ks, config=em)
            table.to_csv(cfg.out)
            best = table.best_k
        else:
            mc = McmcConfig(burn_in=cfg.burn_in, run_length=cfg.run_length,
                            seed=cfg.seed)
            table = select_k_bridge(returns, grid, k_range=ks, config=mc)
            with open(cfg.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["K", "log_marginal_likelihood", "standard_error",
                            "error"])
                for s in table.scores:
                    w.writerow([s.k, s.log_marginal_likelihood,
                                s.standard_error, s.error or ""])
            best = table.best_k
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    click.echo(f"selected K={best}; table written to {cfg.out}")


@main.command("fit-spline")
@_with_options(
    click.option("--data", type=click.Path(exists=True), default=None),
    click.option("--predictor", type=click.Choice(PREDICTOR_CHOICES),
                 default=None),
    click.option("--knots", type=int, default=None),
    click.option("--tick-size", type=float, default=None),
)
def fit_spline(config_path, **flags):
    """Fit the zero-mean predictor response G and freeze it as JSON."""
    cfg = _resolve("fit-spline", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    try:
        bars = _load_bars(cfg)
        returns = to_returns(bars)
        X = _predictor_series(cfg, bars)
        z, z_defined = normalize_returns(returns)
        mask = X.defined & z_defined
        n_knots = cfg.knots or DEFAULT_KNOTS[cfg.predictor]
        spline = fit_zero_mean_spline(X.values[mask], z[mask],
                                      n_knots=n_knots, kind=cfg.predictor)
        with open(cfg.out, "w") as fh:
            fh.write(spline.to_json() + "\n")
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    click.echo(f"fit {cfg.predictor} spline on {int(mask.sum())} samples; "
               f"wrote {cfg.out}")


def _load_model(path):
    with open(path) as fh:
        blob = json.load(fh)
    if "partition" in blob:
        return IohmmParams.from_dict(blob)
    return HmmParams.from_dict(blob)


@main.command()
@_with_options(
    click.option("--data", type=click.Path(exists=True), default=None),
    click.option("--model", type=click.Path(exists=True), default=None,
                 help="model JSON from `learn`"),
    click.option("--predictor", type=click.Choice(PREDICTOR_CHOICES),
                 default=None),
    click.option("--tf", type=click.Choice(TF_CHOICES), default=None),
    click.option("--cost-bps", type=float, default=None,
                 help="proportional cost in basis points per unit turnover"),
    click.option("--tick-size", type=float, default=None),
)
def backtest(config_path, **flags):
    """Run the look-ahead-safe simulation and write report JSON + curve CSV.

    The report always includes the long-only benchmark.
    """
    cfg = _resolve("backtest", config_path, **flags)
    if cfg.out is None:
        raise click.UsageError("--out is required")
    if cfg.model is None:
        raise click.UsageError("--model is required")
    try:
        bars = _load_bars(cfg)
        returns = to_returns(bars)
        model = _load_model(cfg.model)
        transfer = _transfer(cfg)

        if isinstance(model, IohmmParams):
            X = _predictor_series(cfg, bars)
            start, values = _usable_inputs(X)
            series = PredictorSeries(values=values[start:], kind=X.kind)
            tail = iohmm_signal(returns[start:], series, model, transfer)
            signal = np.zeros(returns.size)
            signal[start:] = tail.values
            name = "iohmm"
        else:
            signal = run_hmm_signal(returns, model, transfer).values
            name = "hmm"

        report = build_report(
            name, signal, returns, bars.return_day_index,
            dates=bars.days, cost=_cost_model(cfg, bars),
            config=cfg.to_dict())
        report.to_json(cfg.out)
        curve_path = str(cfg.out)
        curve_path = (curve_path[:-5] if curve_path.endswith(".json")
                      else curve_path) + ".curves.csv"
        report.plot_csv(curve_path)
    except (ValueError, RuntimeError, OSError) as exc:
        raise _fail(exc)
    post = report.sharpe_post
    shown = "degenerate" if post.degenerate else f"{post.value:.2f}"
    click.echo(f"{name}: {report.n_days} days, {report.trade_count} trades, "
               f"post-cost Sharpe {shown}; wrote {cfg.out} and {curve_path}")


if __name__ == "__main__":
    main()
