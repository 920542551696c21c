"""Residual bootstrap for the nonconstant-variance observation model.

Standardized residuals ``s_k = (y_k - M_k)/M_k^gamma`` are resampled with
replacement, rebuilt into synthetic data sets
``y_k^m = M_k + M_k^gamma s_k^m``, and refit; the spread of the refitted
parameters is the bootstrap uncertainty estimate.  Each replicate draws its
indices from a generator seeded by ``(seed, m)``, so results are
bit-identical no matter how replicates are scheduled.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FitFailureError, ValidationError
from .estimator import FitResult, NelderMeadConfig, fit
from .forward import SolverSettings
from .observation import ObservationSet


def _thread_budget() -> int:
    raw = os.environ.get("AGGRE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class BootstrapResult:
    free_names: tuple
    samples: np.ndarray          # one row per converged replicate
    statuses: tuple              # status string per replicate, in order
    mean: np.ndarray
    covariance: np.ndarray
    se: np.ndarray
    percentiles: np.ndarray      # rows (lower, upper)
    percentile_levels: tuple
    seed: int
    replicates: int

    @property
    def converged_count(self) -> int:
        return self.samples.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "free": list(self.free_names),
            "replicates": self.replicates,
            "converged": self.converged_count,
            "seed": self.seed,
            "mean": self.mean.tolist(),
            "se": self.se.tolist(),
            "covariance": self.covariance.tolist(),
            "percentiles": self.percentiles.tolist(),
            "percentile_levels": list(self.percentile_levels),
            "statuses": list(self.statuses),
        })

    def samples_csv(self, path) -> None:
        header = ",".join(self.free_names)
        np.savetxt(path, self.samples, delimiter=",", header=header,
                   comments="")


def bootstrap_summary(samples, percentile_levels=(2.5, 97.5)):
    """Mean, covariance (1/(M-1) normalization), SE, and percentile bounds
    of a bootstrap sample matrix."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    M = samples.shape[0]
    if M < 2:
        raise ValidationError("bootstrap summary needs at least 2 samples")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / (M - 1)
    se = np.sqrt(np.diag(cov))
    pct = np.percentile(samples, percentile_levels, axis=0)
    return mean, cov, se, pct


def bootstrap_estimate(obs: ObservationSet, fit0: FitResult, replicates: int,
                       gamma: float, seed: int,
                       opt_config: NelderMeadConfig | None = None,
                       mesh=None, settings: SolverSettings | None = None,
                       percentile_levels=(2.5, 97.5)) -> BootstrapResult:
    """Residual-bootstrap distribution of the estimator around ``fit0``.

    Replicate refits reuse the mask, weighting exponent, and optimizer
    configuration of the base fit and start from its optimum.  Replicates
    whose refit does not converge are excluded from the statistics (their
    status is still reported); if every replicate fails the whole call does.
    """
    if replicates < 2:
        raise ValidationError("bootstrap needs at least 2 replicates")
    if fit0.status != "converged":
        raise ValidationError("base fit must have converged before bootstrapping")
    model0 = fit0.model_values
    if gamma > 0.0 and np.any(model0 <= 0.0):
        raise ValidationError("nonpositive base model value with gamma > 0")
    resid = (obs.y - model0) / model0 ** gamma if gamma > 0 else obs.y - model0
    n = obs.n
    names = fit0.mask.free_names

    def one_replicate(m: int):
        rng = np.random.default_rng((seed, m))
        idx = rng.integers(0, n, size=n)
        y_m = model0 + model0 ** gamma * resid[idx] if gamma > 0 \
            else model0 + resid[idx]
        obs_m = ObservationSet(t=obs.t, y=y_m,
                               provenance={"kind": "bootstrap", "replicate": m},
                               truncation=obs.truncation or
                               {"inherited": "resampled in place"})
        try:
            res = fit(obs_m, fit0.theta, fit0.mask, gamma, opt_config,
                      mesh=mesh, settings=settings, log_space=fit0.log_space)
        except Exception as exc:  # noqa: BLE001 - replicate-level isolation
            return None, f"failed: {exc}"
        if res.status != "converged":
            return None, res.status
        return res.theta.values_for(names), res.status

    workers = min(_thread_budget(), replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_replicate, range(replicates)))
    else:
        results = [one_replicate(m) for m in range(replicates)]

    rows = [vec for vec, _ in results if vec is not None]
    statuses = tuple(status for _, status in results)
    if not rows:
        raise FitFailureError("every bootstrap replicate failed",
                              partial=statuses)
    samples = np.vstack(rows)
    if samples.shape[0] < 2:
        raise FitFailureError("fewer than 2 usable bootstrap replicates",
                              partial=statuses)
    mean, cov, se, pct = bootstrap_summary(samples, percentile_levels)
    return BootstrapResult(free_names=names, samples=samples,
                           statuses=statuses, mean=mean, covariance=cov,
                           se=se, percentiles=pct,
                           percentile_levels=tuple(percentile_levels),
                           seed=int(seed), replicates=int(replicates))
