"""Zero-mean cubic B-spline fitting and the rolling daily forecast loop.

The zero-integral condition is imposed exactly: the coefficient vector is
restricted to the null space of the basis-integral functional before the
least-squares solve, so every fitted spline integrates to zero over its
domain up to solver roundoff, not up to a penalty weight. Evaluation
clamps inputs to the fitted domain; extrapolation is never attempted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import lstsq, null_space

from .exceptions import (InsufficientDataError, InvalidParameterError,
                         SplineFitError)
from .sideinfo import (EwmaConfig, PREDICTOR_KINDS, PredictorSeries,
                       normalize_returns)
from .validation import as_float_array, check_returns, check_same_length

SPLINE_DEGREE = 3
DOMAIN_COVERAGE = 0.9
DEFAULT_WINDOW_DAYS = 66
DEFAULT_KNOTS = {"volratio": 6, "seasonal": 10}


@dataclass(frozen=True)
class SplinePredictor:
    """A fitted zero-mean cubic spline over one predictor's domain.

    ``knots`` is the full clamped knot vector; ``window`` records the day
    span the fit used, when it came from the rolling loop.
    """

    knots: np.ndarray
    coefficients: np.ndarray
    domain: tuple
    kind: str
    window: tuple | None = None

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        coef = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        if self.kind not in PREDICTOR_KINDS:
            raise InvalidParameterError(
                f"kind must be one of {PREDICTOR_KINDS}, got {self.kind!r}")
        if coef.size != knots.size - SPLINE_DEGREE - 1:
            raise InvalidParameterError(
                "coefficient count must match the knot vector")
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not lo < hi:
            raise InvalidParameterError("domain must have positive width")
        knots.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "domain", (lo, hi))

    def _bspline(self) -> BSpline:
        return BSpline(self.knots, self.coefficients, SPLINE_DEGREE,
                       extrapolate=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        clamped = np.clip(x, self.domain[0], self.domain[1])
        return np.asarray(self._bspline()(clamped), dtype=np.float64)

    def integral(self) -> float:
        return float(self._bspline().integrate(*self.domain))

    def max_abs(self, n_samples: int = 2048) -> float:
        xs = np.linspace(*self.domain, n_samples)
        return float(np.max(np.abs(self(xs))))

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "domain": list(self.domain),
            "knots": self.knots.tolist(),
            "coefficients": self.coefficients.tolist(),
            "window": list(self.window) if self.window is not None else None,
        })

    @classmethod
    def from_json(cls, text: str) -> "SplinePredictor":
        d = json.loads(text)
        window = tuple(d["window"]) if d.get("window") is not None else None
        return cls(knots=np.asarray(d["knots"]),
                   coefficients=np.asarray(d["coefficients"]),
                   domain=tuple(d["domain"]), kind=d["kind"], window=window)


def _knot_vector(lo: float, hi: float, n_knots: int) -> np.ndarray:
    # n_knots uniformly spaced sites including the endpoints, clamped cubic
    sites = np.linspace(lo, hi, n_knots)
    return np.concatenate([np.full(SPLINE_DEGREE, lo), sites,
                           np.full(SPLINE_DEGREE, hi)])


def _basis_integrals(knots: np.ndarray) -> np.ndarray:
    """Integral of each basis function over the whole clamped domain:
    (t_{j+k+1} - t_j) / (k + 1)."""
    k = SPLINE_DEGREE
    return (knots[k + 1:] - knots[:-(k + 1)]) / (k + 1.0)


def fit_zero_mean_spline(x, y, n_knots: int, kind: str = "volratio",
                         domain: tuple | None = None,
                         window: tuple | None = None) -> SplinePredictor:
    """Least-squares cubic spline through (x, y) with exact zero integral.

    Uniform knots span ``domain`` (default: the data range). Every knot
    span must contain data and the data must cover at least 90% of the
    domain, otherwise the design is rank-deficient in a way the constraint
    cannot repair.
    """
    x = as_float_array(x, "x")
    y = as_float_array(y, "y")
    check_same_length(("x", x), ("y", y))
    if n_knots < 2:
        raise InvalidParameterError(f"need >= 2 knots, got {n_knots}")
    if x.size < 10 * n_knots:
        raise InsufficientDataError(
            f"need >= {10 * n_knots} samples for {n_knots} knots, "
            f"got {x.size}")
    lo, hi = (float(x.min()), float(x.max())) if domain is None \
        else (float(domain[0]), float(domain[1]))
    if not lo < hi:
        raise SplineFitError("predictor domain has zero width")
    if (x.max() - x.min()) < DOMAIN_COVERAGE * (hi - lo):
        raise SplineFitError(
            f"data spans {(x.max() - x.min()) / (hi - lo):.0%} of the "
            f"domain; need >= {DOMAIN_COVERAGE:.0%}")

    knots = _knot_vector(lo, hi, n_knots)
    sites = knots[SPLINE_DEGREE:-SPLINE_DEGREE]
    occupancy, _ = np.histogram(x, bins=sites)
    if (occupancy == 0).any():
        span = int(np.flatnonzero(occupancy == 0)[0])
        raise SplineFitError(
            f"knot span {span} [{sites[span]:.6g}, {sites[span + 1]:.6g}] "
            "has no samples")

    design = BSpline.design_matrix(np.clip(x, lo, hi), knots,
                                   SPLINE_DEGREE).toarray()
    constraint = _basis_integrals(knots).reshape(1, -1)
    Z = null_space(constraint)
    # the constrained basis cannot represent a constant, so fit the
    # sample-mean-centered target: leaving the mean in makes the solver
    # approximate it with sampling-density noise instead
    reduced, *_ = lstsq(design @ Z, y - y.mean())
    coef = Z @ reduced
    return SplinePredictor(knots=knots, coefficients=coef, domain=(lo, hi),
                           kind=kind, window=window)


def rolling_spline_forecast(returns, X: PredictorSeries, day_index,
                            window_days: int = DEFAULT_WINDOW_DAYS,
                            n_knots: int | None = None,
                            mean_cfg: EwmaConfig = EwmaConfig(lam=0.99),
                            vol_cfg: EwmaConfig = EwmaConfig(lam=0.94,
                                                             psi=100)
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Day-by-day out-of-sample spline forecasts of standardized returns.

    For each day n with a full trailing window, a zero-mean spline is fitted
    to (X, standardized return) pairs from days [n - window_days, n - 1]
    and evaluated at day n's own X values; no same-day return ever enters
    a fit. Returns (forecast, defined): warm-up days, undefined predictor
    entries, and days whose window cannot support a fit are undefined and
    hold zero.
    """
    returns = check_returns(returns)
    day_index = np.ascontiguousarray(day_index, dtype=np.int64)
    check_same_length(("returns", returns), ("predictor", X.values),
                      ("day_index", day_index))
    if n_knots is None:
        n_knots = DEFAULT_KNOTS[X.kind]
    if day_index.size and (np.diff(day_index) < 0).any():
        raise InvalidParameterError("day_index must be non-decreasing")
    days = np.unique(day_index)
    if days.size < window_days + 1:
        raise InsufficientDataError(
            f"need >= {window_days + 1} days, got {days.size}")

    z, z_defined = normalize_returns(returns, mean_cfg, vol_cfg)
    usable = z_defined & X.defined
    forecast = np.zeros(returns.size)
    defined = np.zeros(returns.size, dtype=bool)
    for n in range(window_days, days.size):
        in_window = ((day_index >= days[n - window_days])
                     & (day_index < days[n]) & usable)
        today = day_index == days[n]
        if in_window.sum() < 10 * n_knots:
            continue
        try:
            spline = fit_zero_mean_spline(
                X.values[in_window], z[in_window], n_knots, kind=X.kind,
                window=(int(days[n - window_days]), int(days[n - 1])))
        except (SplineFitError, InsufficientDataError):
            continue  # this day stays a warm-up-like gap
        forecast[today] = spline(X.values[today])
        defined[today] = X.defined[today]
        forecast[today & ~defined] = 0.0
    return forecast, defined
