"""Piecewise-linear trend segmentation and the default parameter bootstrap.

A price series is split top-down: each segment is fit by least squares, the
split point minimizing the two-sided residual sum is proposed, and the split
is kept only when the slope difference is significant at ``alpha_level``.
Segment slopes (converted to return units) are then clustered to seed a
default sticky HMM when no learned parameters are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t
from sklearn.cluster import KMeans

from .exceptions import InsufficientSegmentsError, InvalidParameterError
from .grid import TrendGrid
from .params import HmmParams, sticky_uniform_params
from .validation import as_float_array


def durbin_watson(residuals) -> float:
    """Durbin-Watson statistic, sum of squared residual first differences
    over the residual sum of squares. A constant residual vector gives 0."""
    e = as_float_array(residuals, "residuals")
    denom = float(e @ e)
    if denom == 0.0:
        return 0.0
    d = np.diff(e)
    return float(d @ d) / denom


@dataclass(frozen=True)
class Segment:
    """One linear piece: [start, stop) with its OLS fit diagnostics."""

    start: int
    stop: int
    intercept: float    # at local x = 0, i.e. at index `start`
    slope: float        # price units per bar
    sigma2: float       # MLE residual variance, SSE / n
    t_stat: float       # slope significance, slope / SE(slope)
    dw: float
    mean_level: float   # mean price over the segment

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Segmentation:
    segments: tuple[Segment, ...]
    change_points: np.ndarray
    n_obs: int

    def __post_init__(self):
        cps = np.asarray(self.change_points, dtype=np.int64)
        if cps.size and np.any(np.diff(cps) <= 0):
            raise InvalidParameterError("change points must be strictly increasing")
        cps.setflags(write=False)
        object.__setattr__(self, "change_points", cps)


class _PrefixStats:
    """O(1) least-squares line fits over arbitrary index ranges.

    The abscissa is re-zeroed per range, so only sums of y, i*y and y**2
    need global prefixes; pure-index sums have closed forms.
    """

    def __init__(self, y: np.ndarray):
        self.py = np.concatenate([[0.0], np.cumsum(y)])
        self.piy = np.concatenate([[0.0], np.cumsum(np.arange(y.size) * y)])
        self.pyy = np.concatenate([[0.0], np.cumsum(y * y)])

    def moments(self, lo, hi):
        """Centered second moments over [lo, hi); lo/hi may be arrays."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        n = hi - lo
        sx = 0.5 * n * (n - 1.0)
        sxx = (n - 1.0) * n * (2.0 * n - 1.0) / 6.0
        sy = self.py[hi.astype(np.int64)] - self.py[lo.astype(np.int64)]
        siy = self.piy[hi.astype(np.int64)] - self.piy[lo.astype(np.int64)]
        sxy = siy - lo * sy
        syy = self.pyy[hi.astype(np.int64)] - self.pyy[lo.astype(np.int64)]
        dxx = sxx - sx * sx / n
        dxy = sxy - sx * sy / n
        dyy = syy - sy * sy / n
        return n, sx, sy, dxx, dxy, dyy

    def fit(self, lo, hi):
        """(slope, intercept_at_lo, sse, dxx, n) for one range."""
        n, sx, sy, dxx, dxy, dyy = self.moments(lo, hi)
        slope = dxy / dxx
        intercept = (sy - slope * sx) / n
        sse = max(dyy - slope * dxy, 0.0)
        return slope, intercept, sse, dxx, n


def _best_split(stats: _PrefixStats, lo: int, hi: int, min_segment: int):
    """Most contrasting admissible split of [lo, hi).

    Candidates are scored by the Welch-style t statistic for the slope
    difference of the two sub-fits (df = n1 + n2 - 4); the acceptance test
    and the selection rule therefore agree. Exact sub-fits give t = +-inf
    when the slopes differ and 0 when they match. Returns (split, p_value),
    or (None, 1.0) when the segment is too short to halve.
    """
    first = lo + min_segment
    last = hi - min_segment
    if first > last:
        return None, 1.0
    cand = np.arange(first, last + 1)
    nl, _, _, ldxx, ldxy, ldyy = stats.moments(np.full(cand.size, lo), cand)
    nr, _, _, rdxx, rdxy, rdyy = stats.moments(cand, np.full(cand.size, hi))
    bl = ldxy / ldxx
    br = rdxy / rdxx
    sse_l = np.maximum(ldyy - bl * ldxy, 0.0)
    sse_r = np.maximum(rdyy - br * rdxy, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        se2 = sse_l / ((nl - 2.0) * ldxx) + sse_r / ((nr - 2.0) * rdxx)
        tval = (bl - br) / np.sqrt(se2)
    tval = np.where(np.isnan(tval), 0.0, tval)  # 0/0: equal exact slopes
    i = int(np.argmax(np.abs(tval)))
    df = (hi - lo) - 4
    if np.isinf(tval[i]):
        return int(cand[i]), 0.0
    # Bonferroni over the candidate scan: the nominal p of the maximizing
    # split understates the false-split rate by roughly the candidate count.
    p = 2.0 * float(student_t.sf(abs(tval[i]), df)) * cand.size
    return int(cand[i]), min(p, 1.0)


def plr_segment(prices, alpha_level: float = 0.01, min_segment: int = 10) -> Segmentation:
    """Recursive binary segmentation of a price path.

    Parameters
    ----------
    prices : array-like
        Price levels (not returns).
    alpha_level : float
        Significance bar the slope-difference test must clear for a split
        to be accepted.
    min_segment : int
        Minimum observations per segment.

    Returns
    -------
    Segmentation with per-segment slope, MLE residual variance, slope
    t-statistic and Durbin-Watson statistic.
    """
    y = as_float_array(prices, "prices")
    if min_segment < 3:
        raise InvalidParameterError(f"min_segment must be >= 3, got {min_segment}")
    if not 0.0 < alpha_level < 1.0:
        raise InvalidParameterError(f"alpha_level must be in (0, 1), got {alpha_level}")
    if y.size < min_segment:
        raise InvalidParameterError(
            f"need at least min_segment={min_segment} prices, got {y.size}")

    stats = _PrefixStats(y)
    boundaries = []
    work = [(0, y.size)]
    while work:
        lo, hi = work.pop()
        s, p = _best_split(stats, lo, hi, min_segment)
        if s is not None and p < alpha_level:
            work.append((lo, s))
            work.append((s, hi))
        else:
            boundaries.append((lo, hi))
    boundaries.sort()

    segments = []
    for lo, hi in boundaries:
        slope, intercept, sse, dxx, n = stats.fit(lo, hi)
        resid = y[lo:hi] - (intercept + slope * np.arange(hi - lo))
        if n > 2 and sse > 0.0:
            t_stat = slope / np.sqrt(sse / ((n - 2) * dxx))
        else:
            t_stat = np.inf if slope != 0.0 else 0.0
        segments.append(Segment(start=lo, stop=hi, intercept=float(intercept),
                                slope=float(slope), sigma2=float(sse / n),
                                t_stat=float(t_stat), dw=durbin_watson(resid),
                                mean_level=float(y[lo:hi].mean())))
    change_points = np.array([s.start for s in segments[1:]], dtype=np.int64)
    return Segmentation(segments=tuple(segments), change_points=change_points,
                        n_obs=y.size)


def default_theta(segmentation: Segmentation, grid: TrendGrid, n_states: int = 2,
                  beta: float = 0.5, random_state: int = 0) -> HmmParams:
    """Default sticky HMM seeded from segment trends.

    Segment slopes are converted to log-return units by dividing by the
    segment's mean price; k-means over those per-bar trend rates gives the
    state means, and length-weighted pooled residual variances (converted
    the same way, floored at the grid's variance floor) give the state
    variances. The transition matrix is the sticky-uniform default.
    """
    K = int(n_states)
    segs = segmentation.segments
    if len(segs) < K:
        raise InsufficientSegmentsError(
            f"{len(segs)} segments cannot seed {K} states")
    trend = np.array([s.slope / s.mean_level for s in segs])
    if np.unique(trend).size < K:
        raise InsufficientSegmentsError(
            f"only {np.unique(trend).size} distinct trend rates for {K} states")
    km = KMeans(n_clusters=K, n_init=10, random_state=random_state)
    labels = km.fit_predict(trend.reshape(-1, 1))

    mu = np.empty(K)
    sigma2 = np.empty(K)
    lengths = np.array([s.length for s in segs], dtype=np.float64)
    var_ret = np.array([s.sigma2 / s.mean_level ** 2 for s in segs])
    for k in range(K):
        members = labels == k
        w = lengths[members]
        mu[k] = np.average(trend[members], weights=w)
        sigma2[k] = max(np.average(var_ret[members], weights=w), grid.variance_floor)
    order = np.argsort(mu)
    return sticky_uniform_params(K, beta, mu=mu[order], sigma2=sigma2[order],
                                 grid=grid)
