"""Input-switched HMM: a family of parameter sets keyed by which bucket of
a fitted predictor spline the current input falls in.

Buckets are the sign-constant intervals between the spline's roots. One
filter recursion runs over the whole series; only the active parameter set
is swapped per step, so state belief carries across bucket switches.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .baumwelch import EmConfig, baum_welch
from .exceptions import (DegenerateSplineError, InsufficientDataError,
                         InvalidParameterError)
from .filtering import SignalSeries, TransferFunction, _signal_core
from .grid import TrendGrid
from .params import HmmParams
from .sideinfo import PredictorSeries, check_aligned_predictor
from .splines import SplinePredictor
from .validation import check_returns

ROOT_XTOL = 1e-10
DEGENERATE_SPLINE_TOL = 1e-12
MIN_OBS_PER_STATE = 10
_SCAN_POINTS = 4096


@dataclass(frozen=True)
class BucketPartition:
    """Sign-constant intervals of a predictor spline: ``len(roots) + 1``
    ordered buckets covering ``domain``; ``signs[r]`` is the spline's sign
    on bucket r."""

    roots: np.ndarray
    domain: tuple
    signs: np.ndarray

    def __post_init__(self):
        roots = np.ascontiguousarray(self.roots, dtype=np.float64)
        signs = np.ascontiguousarray(self.signs, dtype=np.int64)
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not lo < hi:
            raise InvalidParameterError("domain must have positive width")
        if roots.size and ((np.diff(roots) <= 0).any()
                           or roots[0] <= lo or roots[-1] >= hi):
            raise InvalidParameterError(
                "roots must be strictly increasing interior points")
        if signs.size != roots.size + 1:
            raise InvalidParameterError("need one sign per bucket")
        if not np.isin(signs, (-1, 1)).all():
            raise InvalidParameterError("signs must be -1 or +1")
        roots.setflags(write=False)
        signs.setflags(write=False)
        object.__setattr__(self, "roots", roots)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "domain", (lo, hi))

    @property
    def n_buckets(self) -> int:
        return self.roots.size + 1

    def assign(self, x) -> np.ndarray:
        """Bucket index per value; out-of-domain values clamp to the edge
        buckets."""
        x = np.asarray(x, dtype=np.float64)
        clamped = np.clip(x, self.domain[0], self.domain[1])
        return np.searchsorted(self.roots, clamped, side="right")

    def to_dict(self) -> dict:
        return {"roots": self.roots.tolist(), "domain": list(self.domain),
                "signs": self.signs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BucketPartition":
        return cls(roots=np.asarray(d["roots"]), domain=tuple(d["domain"]),
                   signs=np.asarray(d["signs"]))


def spline_roots(spline: SplinePredictor) -> BucketPartition:
    """Partition the spline's domain at its zero crossings.

    Crossings are bracketed on a dense scan and polished by bisection; an
    essentially-zero spline cannot be partitioned and raises instead.
    """
    lo, hi = spline.domain
    xs = np.linspace(lo, hi, _SCAN_POINTS)
    vals = spline(xs)
    peak = float(np.max(np.abs(vals)))
    if peak < DEGENERATE_SPLINE_TOL:
        raise DegenerateSplineError(
            f"spline is identically ~0 (max |G| = {peak:.3g})")

    def g(x: float) -> float:
        return float(spline(x))

    roots = []
    for i in range(xs.size - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(xs[i])
        elif a * b < 0.0:
            roots.append(bisect(g, xs[i], xs[i + 1], xtol=ROOT_XTOL))
    if vals[-1] == 0.0:
        roots.append(xs[-1])
    width = hi - lo
    interior = [r for r in roots if lo + 1e-9 * width < r < hi - 1e-9 * width]
    dedup: list[float] = []
    for r in interior:
        if not dedup or r - dedup[-1] > 1e-9 * width:
            dedup.append(r)
    roots = np.asarray(dedup)

    edges = np.concatenate([[lo], roots, [hi]])
    signs = np.empty(roots.size + 1, dtype=np.int64)
    for r in range(signs.size):
        inside = xs[(xs > edges[r]) & (xs < edges[r + 1])]
        probe = spline(inside) if inside.size else spline(
            np.array([0.5 * (edges[r] + edges[r + 1])]))
        strong = probe[np.abs(probe) > DEGENERATE_SPLINE_TOL]
        if strong.size and (strong.min() < 0.0 < strong.max()):
            raise DegenerateSplineError(
                f"sign change inside bucket {r}: root scan too coarse")
        anchor = probe[np.argmax(np.abs(probe))]
        signs[r] = 1 if anchor >= 0.0 else -1
    return BucketPartition(roots=roots, domain=(lo, hi), signs=signs)


@dataclass(frozen=True)
class IohmmParams:
    """A partition plus one HmmParams per bucket, all sharing K and grid."""

    partition: BucketPartition
    theta: tuple

    def __post_init__(self):
        theta = tuple(self.theta)
        if len(theta) != self.partition.n_buckets:
            raise InvalidParameterError(
                f"need one parameter set per bucket: {len(theta)} != "
                f"{self.partition.n_buckets}")
        for p in theta:
            if not isinstance(p, HmmParams):
                raise InvalidParameterError("theta must hold HmmParams")
            if p.n_states != theta[0].n_states or p.grid != theta[0].grid:
                raise InvalidParameterError(
                    "all buckets must share the state count and grid")
        object.__setattr__(self, "theta", theta)

    @property
    def n_states(self) -> int:
        return self.theta[0].n_states

    @property
    def grid(self) -> TrendGrid:
        return self.theta[0].grid

    def to_dict(self) -> dict:
        return {"partition": self.partition.to_dict(),
                "theta": [p.to_dict() for p in self.theta]}

    @classmethod
    def from_dict(cls, d: dict) -> "IohmmParams":
        return cls(partition=BucketPartition.from_dict(d["partition"]),
                   theta=tuple(HmmParams.from_dict(p) for p in d["theta"]))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "IohmmParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def bucket_data(returns, X: PredictorSeries,
                partition: BucketPartition) -> list:
    """Per-bucket return subsequences in original time order; sizes sum to
    the total length (gaps between same-bucket runs are simply
    concatenated)."""
    returns = check_returns(returns)
    check_aligned_predictor(returns, X)
    idx = partition.assign(X.values)
    return [returns[idx == r] for r in range(partition.n_buckets)]


def iohmm_learn(returns, X: PredictorSeries, spline: SplinePredictor,
                n_states: int, grid: TrendGrid,
                config: EmConfig = EmConfig()) -> IohmmParams:
    """Per-bucket Baum-Welch over the spline-root partition.

    Buckets with fewer than 10 x K observations inherit the pooled
    (all-data) estimate, with a warning; if every bucket is that sparse
    the partition carries no information and learning refuses to proceed.
    """
    returns = check_returns(returns)
    check_aligned_predictor(returns, X)
    partition = spline_roots(spline)
    subsets = bucket_data(returns, X, partition)
    threshold = MIN_OBS_PER_STATE * n_states
    if all(s.size < threshold for s in subsets):
        raise InsufficientDataError(
            f"every bucket has fewer than {threshold} observations")
    pooled = None
    theta = []
    for r, subset in enumerate(subsets):
        if subset.size < threshold:
            if pooled is None:
                pooled, _ = baum_welch(returns, n_states, grid, config)
            warnings.warn(
                f"bucket {r} has {subset.size} < {threshold} observations; "
                "using the pooled estimate", RuntimeWarning, stacklevel=2)
            theta.append(pooled)
        else:
            fitted, _ = baum_welch(subset, n_states, grid, config)
            theta.append(fitted)
    return IohmmParams(partition=partition, theta=tuple(theta))


def iohmm_signal(returns, X: PredictorSeries, params: IohmmParams,
                 transfer: TransferFunction = TransferFunction()
                 ) -> SignalSeries:
    """Input-switched signal: the parameter set active at step t is the
    bucket of x_t, looked up before the prediction for t is formed; one
    belief recursion runs across switches."""
    returns = check_returns(returns)
    check_aligned_predictor(returns, X)
    idx = params.partition.assign(X.values)
    init_log_pi = params.theta[idx[0]].log_pi if idx.size else \
        params.theta[0].log_pi
    signal, *_ = _signal_core(returns, init_log_pi, list(params.theta),
                              idx, transfer)
    return signal
