"""Validated HMM parameter bundle with cached emission tables.

HmmParams is immutable after construction. Emission log-pmfs over the grid
and the grid-renormalized state means are computed once here; every
downstream recursion (filtering, EM, MCMC, IOHMM) reads these caches instead
of re-deriving them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError
from .grid import TrendGrid, log_discretized_gaussian_pmf
from .validation import (as_float_array, check_probability_vector,
                         check_transition_matrix)

# Relative slack when asserting sigma2 >= alpha^2 / 2, so a variance clamped
# exactly to the floor upstream survives round-tripping through JSON.
_FLOOR_SLACK = 1e-12


def stationary_distribution(A: np.ndarray) -> np.ndarray:
    """Ergodic distribution of a row-stochastic matrix.

    Solved as the least-squares null vector of (A' - I) augmented with the
    normalization row; unique for irreducible aperiodic chains.
    """
    A = np.asarray(A, dtype=np.float64)
    K = A.shape[0]
    if K == 1:
        return np.ones(1)
    M = np.vstack([A.T - np.eye(K), np.ones((1, K))])
    rhs = np.zeros(K + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class HmmParams:
    """Parameters of a K-state latent-trend HMM on a return grid.

    Parameters
    ----------
    A : (K, K) array
        Row-stochastic transition matrix; A[i, j] = P(next = j | current = i).
    pi : (K,) array
        Initial state distribution.
    mu : (K,) array
        State means (free reals; emission evaluation discretizes, not mu).
    sigma2 : (K,) array
        State variances, each at least ``grid.variance_floor``.
    grid : TrendGrid
        Return grid the emissions are renormalized over.
    """

    A: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    grid: TrendGrid
    log_A: np.ndarray = field(init=False, repr=False, compare=False)
    log_pi: np.ndarray = field(init=False, repr=False, compare=False)
    log_emission: np.ndarray = field(init=False, repr=False, compare=False)
    mu_star: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = as_float_array(self.mu, "mu")
        K = mu.size
        A = check_transition_matrix(self.A, n_states=K)
        pi = check_probability_vector(self.pi)
        if pi.size != K:
            raise InvalidParameterError(f"pi has {pi.size} entries, expected {K}")
        sigma2 = as_float_array(self.sigma2, "sigma2")
        if sigma2.size != K:
            raise InvalidParameterError(f"sigma2 has {sigma2.size} entries, expected {K}")
        if not isinstance(self.grid, TrendGrid):
            raise InvalidParameterError("grid must be a TrendGrid")
        floor = self.grid.variance_floor
        if np.any(sigma2 < floor * (1.0 - _FLOOR_SLACK)):
            bad = int(np.argmin(sigma2))
            raise InvalidParameterError(
                f"sigma2[{bad}]={sigma2[bad]!r} below variance floor {floor!r}")

        log_emission = np.empty((K, self.grid.size))
        for k in range(K):
            log_emission[k] = log_discretized_gaussian_pmf(self.grid, mu[k], sigma2[k])
        emission = np.exp(log_emission)
        mu_star = emission @ self.grid.values

        with np.errstate(divide="ignore"):
            log_A = np.log(A)
            log_pi = np.log(pi)
        for name, arr in (("A", A), ("pi", pi), ("mu", mu), ("sigma2", sigma2),
                          ("log_A", log_A), ("log_pi", log_pi),
                          ("log_emission", log_emission), ("mu_star", mu_star)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.mu.size

    def permuted(self, perm) -> "HmmParams":
        """Relabel states by ``perm``: state k of the result is state perm[k]
        of self."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n_states)):
            raise InvalidParameterError(f"perm={perm} is not a permutation of 0..K-1")
        return HmmParams(A=self.A[np.ix_(perm, perm)], pi=self.pi[perm],
                         mu=self.mu[perm], sigma2=self.sigma2[perm], grid=self.grid)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "pi": self.pi.tolist(),
            "mu": self.mu.tolist(),
            "sigma2": self.sigma2.tolist(),
            "grid": self.grid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HmmParams":
        return cls(A=np.asarray(d["A"], dtype=np.float64),
                   pi=np.asarray(d["pi"], dtype=np.float64),
                   mu=np.asarray(d["mu"], dtype=np.float64),
                   sigma2=np.asarray(d["sigma2"], dtype=np.float64),
                   grid=TrendGrid.from_dict(d["grid"]))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "HmmParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def sticky_uniform_params(n_states: int, beta: float, mu, sigma2,
                          grid: TrendGrid) -> HmmParams:
    """HmmParams with the default sticky transition structure: ``beta`` on the
    diagonal, the rest spread evenly, uniform initial distribution."""
    K = int(n_states)
    if K < 1:
        raise InvalidParameterError(f"n_states must be >= 1, got {n_states}")
    beta = float(beta)
    if not (0.0 <= beta <= 1.0):
        raise InvalidParameterError(f"beta must lie in [0, 1], got {beta}")
    if K == 1:
        A = np.ones((1, 1))
    else:
        off = (1.0 - beta) / (K - 1)
        A = np.full((K, K), off)
        np.fill_diagonal(A, beta)
    pi = np.full(K, 1.0 / K)
    return HmmParams(A=A, pi=pi, mu=np.asarray(mu, dtype=np.float64),
                     sigma2=np.asarray(sigma2, dtype=np.float64), grid=grid)
