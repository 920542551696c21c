"""Shared fixtures: the desk-scale benchmark configuration and cached truth
curves so the statistics tests amortize forward solves."""
from __future__ import annotations

import numpy as np
import pytest

from aggrebench import (
    NelderMeadConfig,
    ObservationSet,
    SolverSettings,
    fast_benchmark,
    fast_benchmark_mesh,
    observable,
    truncate_observations,
)

T_GRID = np.linspace(0.0, 8.0, 751)[1:]     # m(0)=0 carries no relative noise


@pytest.fixture(scope="session")
def truth():
    return fast_benchmark()


@pytest.fixture(scope="session")
def mesh(truth):
    return fast_benchmark_mesh(truth)


@pytest.fixture(scope="session")
def settings():
    return SolverSettings()


@pytest.fixture(scope="session")
def truth_curve(truth, mesh, settings):
    """Noise-free observable at the benchmark truth on the standard grid."""
    return observable(truth, T_GRID, mesh, settings)


@pytest.fixture(scope="session")
def make_observations(truth, truth_curve):
    """Factory for truncated synthetic data sets off the cached truth curve.

    Uses the same observation formula as simulate_observations (which is
    itself tested separately) but avoids re-solving the forward model for
    every seed.
    """
    def factory(seed: int, sigma: float = 0.0025, gamma: float = 0.6,
                truncate: bool = True) -> ObservationSet:
        rng = np.random.default_rng(seed)
        y = truth_curve + truth_curve ** gamma * rng.normal(0.0, sigma,
                                                            truth_curve.size)
        obs = ObservationSet(
            t=T_GRID, y=y,
            provenance={"kind": "synthetic", "seed": seed, "gamma": gamma,
                        "sigma": sigma, "truth": truth.to_dict()})
        return truncate_observations(obs) if truncate else obs
    return factory


@pytest.fixture(scope="session")
def quick_opt():
    """Optimizer budget for test fits: warm starts converge well inside it."""
    return NelderMeadConfig(max_iter=300, cost_tol=1e-9, simplex_tol=1e-7,
                            restarts=1, init_step=0.03)
