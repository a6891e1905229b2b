import numpy as np
import pytest

from trendhmm import HmmParams, TrendGrid


def random_hmm_instance(rng, n_states=None, n_obs=None, half_width=None):
    """A random but well-posed HMM instance plus an on-grid return sample.

    Sized for exhaustive-enumeration oracles: K <= 3, T <= 6, grid <= 7
    points unless overridden.
    """
    K = int(n_states if n_states is not None else rng.integers(1, 4))
    T = int(n_obs if n_obs is not None else rng.integers(2, 7))
    n_half = int(half_width if half_width is not None else rng.integers(1, 4))
    alpha = float(rng.uniform(0.05, 0.5))
    grid = TrendGrid(alpha=alpha, omega=n_half * alpha)

    A = rng.dirichlet(np.full(K, 2.0), size=K)
    A = A / A.sum(axis=1, keepdims=True)
    pi = rng.dirichlet(np.full(K, 2.0))
    pi = pi / pi.sum()
    mu = rng.uniform(-grid.omega, grid.omega, size=K)
    sigma2 = rng.uniform(grid.variance_floor, (2.0 * alpha) ** 2, size=K)
    params = HmmParams(A=A, pi=pi, mu=mu, sigma2=sigma2, grid=grid)

    returns = grid.values[rng.integers(0, grid.size, size=T)]
    return params, returns


def sample_hmm(rng, params, n_obs, return_states=False):
    """Draw a state path and on-grid returns from an HMM specification.

    Emission pmfs are rebuilt here by direct normalization over the grid so
    the sampler does not lean on the package's own emission code.
    """
    K, grid = params.n_states, params.grid
    pmf = np.empty((K, grid.size))
    for k in range(K):
        dens = np.exp(-0.5 * (grid.values - params.mu[k]) ** 2
                      / params.sigma2[k])
        pmf[k] = dens / dens.sum()

    cum_A = np.cumsum(params.A, axis=1)
    states = np.empty(n_obs, dtype=np.int64)
    states[0] = rng.choice(K, p=params.pi)
    u = rng.random(n_obs)
    for t in range(1, n_obs):
        states[t] = np.searchsorted(cum_A[states[t - 1]], u[t])
    returns = np.empty(n_obs)
    for k in range(K):
        mask = states == k
        returns[mask] = rng.choice(grid.values, size=int(mask.sum()), p=pmf[k])
    if return_states:
        return returns, states
    return returns


@pytest.fixture
def rng():
    return np.random.default_rng(171)
