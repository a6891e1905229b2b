"""Symmetric tick grid for return levels and the discretized Gaussian emission.

Observed one-period returns live on a discrete grid {-omega, ..., -alpha, 0,
alpha, ..., omega} with spacing alpha. State-conditional emissions are normal
densities renormalized over that grid, so each state's emission is a proper
pmf on the grid rather than a continuous density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError
from .validation import check_positive, check_returns

# Tolerance for "omega is an integer multiple of alpha".
_MULTIPLE_TOL = 1e-9


@dataclass(frozen=True)
class TrendGrid:
    """Arithmetic grid of admissible return levels.

    Parameters
    ----------
    alpha : float
        Grid spacing (one tick, in return units). Must be positive.
    omega : float
        Half-width of the grid. Must be at least ``alpha`` and an integer
        multiple of it.
    """

    alpha: float
    omega: float
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alpha = check_positive(self.alpha, "alpha")
        omega = check_positive(self.omega, "omega")
        if omega < alpha - _MULTIPLE_TOL * alpha:
            raise InvalidParameterError(f"omega={omega} must be >= alpha={alpha}")
        steps = omega / alpha
        n_half = int(round(steps))
        if abs(steps - n_half) > _MULTIPLE_TOL * max(1.0, steps):
            raise InvalidParameterError(
                f"omega={omega} is not an integer multiple of alpha={alpha}")
        values = np.arange(-n_half, n_half + 1, dtype=np.float64) * alpha
        values.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", n_half * alpha)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def variance_floor(self) -> float:
        """Smallest admissible emission variance, alpha**2 / 2."""
        return 0.5 * self.alpha * self.alpha

    @classmethod
    def from_returns(cls, returns, alpha: float) -> "TrendGrid":
        """Grid wide enough for the data: omega is the smallest multiple of
        alpha covering max(|returns|), never below alpha itself."""
        returns = check_returns(returns)
        alpha = check_positive(alpha, "alpha")
        peak = float(np.max(np.abs(returns)))
        n_half = max(1, int(np.ceil(peak / alpha - _MULTIPLE_TOL)))
        return cls(alpha=alpha, omega=n_half * alpha)

    def snap_index(self, x) -> np.ndarray:
        """Index of the nearest grid point, clipped to the grid ends."""
        x = np.asarray(x, dtype=np.float64)
        n_half = (self.size - 1) // 2
        idx = np.rint(x / self.alpha).astype(np.int64) + n_half
        return np.clip(idx, 0, self.size - 1)

    def snap(self, x) -> np.ndarray:
        """Nearest grid value(s) to ``x``."""
        return self.values[self.snap_index(x)]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "omega": self.omega}

    @classmethod
    def from_dict(cls, d: dict) -> "TrendGrid":
        return cls(alpha=float(d["alpha"]), omega=float(d["omega"]))


def log_discretized_gaussian_pmf(grid: TrendGrid, mu: float, sigma2: float) -> np.ndarray:
    """Log-pmf of a normal density renormalized over the grid.

    Computed entirely in log space: exponents are shifted by their maximum
    before the normalizing log-sum-exp, so the result is finite for any
    (mu, sigma2) with sigma2 > 0.
    """
    sigma2 = float(sigma2)
    if not np.isfinite(sigma2) or sigma2 <= 0.0:
        raise InvalidParameterError(f"sigma2 must be positive, got {sigma2!r}")
    z = grid.values - float(mu)
    expo = -0.5 * z * z / sigma2
    m = expo.max()
    log_norm = m + np.log(np.exp(expo - m).sum())
    return expo - log_norm


def discretized_gaussian_pmf(grid: TrendGrid, mu: float, sigma2: float) -> np.ndarray:
    """Pmf of a normal density renormalized over the grid; sums to 1."""
    return np.exp(log_discretized_gaussian_pmf(grid, mu, sigma2))


def discretized_mean(grid: TrendGrid, mu: float, sigma2: float) -> float:
    """Mean of the grid-renormalized emission (differs from the raw ``mu``
    near the grid boundary)."""
    return float(discretized_gaussian_pmf(grid, mu, sigma2) @ grid.values)
