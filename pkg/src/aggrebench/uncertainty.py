"""Sensitivity matrix, weighted information matrix, variance estimate, and
asymptotic standard errors / confidence intervals.

The asymptotic covariance of the GLS estimator is
``Sigma = sigma2_hat * (chi^T W chi)^(-1)`` with
``W = diag(M_k^(-2 gamma))``; when the information matrix is numerically
singular (condition number beyond the configured limit) the standard errors
are refused rather than reported.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .forward import SolverSettings, observable
from .model import FreeMask, ModelParameters
from .observation import ObservationSet
from .special import two_sided_normal_quantile

DEFAULT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FiniteDifferenceConfig:
    rel_step: float = 1e-4


@dataclass
class UncertaintyReport:
    free_names: tuple
    chi: np.ndarray
    gamma: float
    model_values: np.ndarray
    fisher: np.ndarray
    sigma2: float
    cond: float
    invertible: bool
    covariance: np.ndarray | None
    se: np.ndarray | None
    ci_level: float | None = None
    ci: np.ndarray | None = None           # rows (lower, upper)
    one_sided_columns: tuple = ()

    def to_json(self) -> str:
        return json.dumps({
            "free": list(self.free_names),
            "gamma": self.gamma,
            "sigma2": self.sigma2,
            "cond": self.cond,
            "invertible": self.invertible,
            "se": None if self.se is None else self.se.tolist(),
            "ci_level": self.ci_level,
            "ci": None if self.ci is None else self.ci.tolist(),
            "fisher": self.fisher.tolist(),
            "one_sided_columns": list(self.one_sided_columns),
        })


def sensitivity_matrix(theta: ModelParameters, mask: FreeMask, t_grid,
                       fd_config: FiniteDifferenceConfig | None = None,
                       mesh=None, settings: SolverSettings | None = None):
    """Central finite differences of the observable in each free parameter.

    The step for parameter j is ``rel_step * |theta_j|``.  If one side of a
    perturbation fails to solve, the derivative falls back to a one-sided
    difference and the column is reported in ``one_sided``; if both sides
    fail the whole computation does.

    Returns ``(chi, one_sided)`` where chi has one column per free parameter.
    """
    cfg = fd_config or FiniteDifferenceConfig()
    t_grid = np.asarray(t_grid, dtype=float)
    # Differencing needs the observable to vary smoothly with theta, which
    # interpolated outputs do not guarantee (the bracketing step can switch);
    # exact landing removes that jitter.
    settings = replace(settings or SolverSettings(), land_exactly=True)
    names = mask.free_names
    base = None
    cols = []
    one_sided = []
    for name in names:
        v = getattr(theta, name)
        h = cfg.rel_step * abs(v)
        if h == 0.0:
            raise ValidationError(f"cannot perturb zero-valued parameter {name}")
        plus = minus = None
        try:
            plus = observable(theta.replace(**{name: v + h}), t_grid, mesh, settings)
        except Exception:  # noqa: BLE001
            plus = None
        try:
            minus = observable(theta.replace(**{name: v - h}), t_grid, mesh, settings)
        except Exception:  # noqa: BLE001
            minus = None
        if plus is not None and minus is not None:
            cols.append((plus - minus) / (2.0 * h))
            continue
        if plus is None and minus is None:
            raise ValidationError(
                f"forward solve failed on both sides of {name}")
        if base is None:
            base = observable(theta, t_grid, mesh, settings)
        if plus is not None:
            cols.append((plus - base) / h)
        else:
            cols.append((base - minus) / h)
        one_sided.append(name)
    return np.column_stack(cols), tuple(one_sided)


def fisher_matrix(chi: np.ndarray, model_values, gamma: float) -> np.ndarray:
    """Weighted information matrix ``chi^T diag(M^-2gamma) chi``."""
    chi = np.asarray(chi, dtype=float)
    model_values = np.asarray(model_values, dtype=float)
    if chi.ndim != 2 or chi.shape[0] != model_values.size:
        raise ValidationError("sensitivity rows must match the model values")
    if gamma > 0.0 and np.any(model_values <= 0.0):
        raise ValidationError("nonpositive model value with gamma > 0")
    w = model_values ** (-2.0 * gamma) if gamma != 0.0 else np.ones_like(model_values)
    F = chi.T @ (w[:, None] * chi)
    return 0.5 * (F + F.T)


def sigma2_hat(obs: ObservationSet, model_values, gamma: float,
               n_free: int) -> float:
    """Weighted residual variance with a degrees-of-freedom correction:
    ``(1/(n - n_free)) sum_k M_k^(-2 gamma) (M_k - y_k)^2``."""
    model_values = np.asarray(model_values, dtype=float)
    n = obs.n
    if n <= n_free:
        raise ValidationError(
            f"insufficient degrees of freedom: n={n}, free={n_free}")
    r2 = (model_values - obs.y) ** 2
    if gamma != 0.0:
        r2 = r2 * model_values ** (-2.0 * gamma)
    return float(np.sum(r2) / (n - n_free))


def asymptotic_errors(F: np.ndarray, sigma2: float,
                      cond_limit: float = DEFAULT_COND_LIMIT):
    """Covariance, standard errors, and conditioning of the information matrix.

    Returns ``(covariance, se, cond, invertible)``.  When the spectral
    condition number exceeds ``cond_limit`` the matrix is declared
    numerically singular: covariance and SE come back as None (a flagged
    outcome, not an error).
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValidationError("information matrix must be square")
    if not np.allclose(F, F.T, rtol=1e-10, atol=0.0):
        raise ValidationError("information matrix must be symmetric")
    sv = np.linalg.svd(F, compute_uv=False)
    cond = float(np.inf) if sv[-1] == 0.0 else float(sv[0] / sv[-1])
    if not np.isfinite(cond) or cond > cond_limit:
        return None, None, cond, False
    cov = sigma2 * np.linalg.solve(F, np.eye(F.shape[0]))
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return cov, se, cond, True


def confidence_intervals(theta_values, se, level: float) -> np.ndarray:
    """Normal-quantile intervals ``theta_k +- z(level) * se_k`` (two-sided)."""
    theta_values = np.asarray(theta_values, dtype=float)
    se = np.asarray(se, dtype=float)
    if theta_values.shape != se.shape:
        raise ValidationError("theta and SE lengths differ")
    z = two_sided_normal_quantile(level)
    return np.column_stack([theta_values - z * se, theta_values + z * se])


def evaluate_uncertainty(obs: ObservationSet, theta: ModelParameters,
                         mask: FreeMask, gamma: float,
                         fd_config: FiniteDifferenceConfig | None = None,
                         level: float = 0.95,
                         cond_limit: float = DEFAULT_COND_LIMIT,
                         mesh=None,
                         settings: SolverSettings | None = None) -> UncertaintyReport:
    """Full asymptotic uncertainty pipeline at a fitted parameter set."""
    chi, one_sided = sensitivity_matrix(theta, mask, obs.t, fd_config,
                                        mesh, settings)
    model = observable(theta, obs.t, mesh, settings)
    F = fisher_matrix(chi, model, gamma)
    s2 = sigma2_hat(obs, model, gamma, mask.count)
    cov, se, cond, ok = asymptotic_errors(F, s2, cond_limit)
    report = UncertaintyReport(free_names=mask.free_names, chi=chi,
                               gamma=gamma, model_values=model, fisher=F,
                               sigma2=s2, cond=cond, invertible=ok,
                               covariance=cov, se=se,
                               one_sided_columns=one_sided)
    if ok:
        report.ci_level = level
        report.ci = confidence_intervals(theta.values_for(mask.free_names),
                                         se, level)
    return report
