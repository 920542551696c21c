"""Nested-model comparison via the residual-sum-of-squares statistic.

Restricting a model by pinning parameters can only raise the attainable
cost; the normalized cost gap ``U = n (J_restricted - J_full) / J_full``
is asymptotically chi-square with as many degrees of freedom as pinned
coordinates, which turns the gap into a significance test for whether the
extra parameters earn their keep.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .estimator import FitResult, NelderMeadConfig, fit
from .forward import SolverSettings
from .model import FreeMask, ModelParameters
from .observation import ObservationSet
from .special import regularized_gamma_q


@dataclass(frozen=True)
class NestedSpec:
    """A restricted model nested inside a full model by coordinate pinning.

    Every parameter freed by ``restricted`` must also be freed by ``full``;
    the extra coordinates of ``full`` are pinned (held at the initial
    parameter values) under the null hypothesis.
    """

    full: FreeMask
    restricted: FreeMask

    def __post_init__(self):
        extra = set(self.restricted.free_names) - set(self.full.free_names)
        if extra:
            raise ValidationError(
                f"restricted mask frees parameters outside the full mask: "
                f"{sorted(extra)}")
        if self.n_constraints < 1:
            raise ValidationError("the restriction must pin at least one parameter")

    @property
    def pinned_names(self) -> tuple:
        return tuple(n for n in self.full.free_names
                     if n not in self.restricted.free_names)

    @property
    def n_constraints(self) -> int:
        return self.full.count - self.restricted.count


def test_statistic(j_restricted: float, j_full: float, n: int) -> float:
    """Normalized cost gap ``n (J_restricted - J_full) / J_full``.

    A restricted optimum can only be costlier than the full optimum; a
    slightly negative gap (optimizer tolerance) is clamped to zero with a
    warning.
    """
    if j_full <= 0.0:
        raise ValidationError(f"full-model cost must be positive, got {j_full!r}")
    if n < 1:
        raise ValidationError(f"sample size must be >= 1, got {n!r}")
    u = n * (j_restricted - j_full) / j_full
    if u < 0.0:
        warnings.warn(
            f"restricted cost {j_restricted} fell below full cost {j_full}; "
            "clamping the statistic to 0", stacklevel=2)
        return 0.0
    return float(u)


def chi_square_sf(u: float, df: int) -> float:
    """Chi-square survival function P(U > u) with ``df`` degrees of freedom,
    via the regularized upper incomplete gamma Q(df/2, u/2)."""
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df!r}")
    if u < 0.0:
        raise ValidationError(f"statistic must be nonnegative, got {u!r}")
    return regularized_gamma_q(0.5 * df, 0.5 * u)


def chi_square_threshold(alpha: float, df: int) -> float:
    """tau with P(U > tau) = alpha, by bisection on the survival function."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"significance level must lie in (0,1), got {alpha!r}")
    lo, hi = 0.0, 1.0
    while chi_square_sf(hi, df) > alpha:
        hi *= 2.0
        if hi > 1e6:
            raise ValidationError("threshold search diverged")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_square_sf(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass
class ComparisonReport:
    spec_pinned: tuple
    j_restricted: float
    j_full: float
    n: int
    statistic: float
    df: int
    p_value: float
    alpha: float
    threshold: float
    reject: bool
    clamped: bool = False
    fit_restricted: FitResult | None = None
    fit_full: FitResult | None = None
    extras: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "reject" if self.reject else "do-not-reject"

    def to_json(self) -> str:
        return json.dumps({
            "pinned": list(self.spec_pinned),
            "J_restricted": self.j_restricted,
            "J_full": self.j_full,
            "n": self.n,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "clamped": self.clamped,
            **self.extras,
        })


def report_from_costs(j_restricted: float, j_full: float, n: int, df: int,
                      alpha: float = 0.05,
                      pinned: tuple = ()) -> ComparisonReport:
    """Assemble a comparison verdict from precomputed costs."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        u = test_statistic(j_restricted, j_full, n)
        clamped = any("clamping" in str(w.message) for w in caught)
    p = chi_square_sf(u, df)
    tau = chi_square_threshold(alpha, df)
    return ComparisonReport(spec_pinned=tuple(pinned),
                            j_restricted=float(j_restricted),
                            j_full=float(j_full), n=int(n), statistic=u,
                            df=int(df), p_value=p, alpha=float(alpha),
                            threshold=tau, reject=u > tau, clamped=clamped)


def compare_nested(obs: ObservationSet, spec: NestedSpec,
                   theta_init: ModelParameters, gamma: float,
                   alpha: float = 0.05,
                   opt_config: NelderMeadConfig | None = None,
                   mesh=None,
                   settings: SolverSettings | None = None) -> ComparisonReport:
    """Fit the restricted and full models and test the restriction.

    Both fits share the optimizer configuration and weighting exponent (the
    weighting realizes the variance rescaling that extends the test beyond
    constant-variance errors).  The full fit warm-starts from the restricted
    optimum, which encourages ``J_full <= J_restricted`` numerically.
    """
    res_r = fit(obs, theta_init, spec.restricted, gamma, opt_config,
                mesh=mesh, settings=settings)
    res_f = fit(obs, res_r.theta, spec.full, gamma, opt_config,
                mesh=mesh, settings=settings)
    report = report_from_costs(res_r.cost, res_f.cost, obs.n,
                               spec.n_constraints, alpha,
                               pinned=spec.pinned_names)
    report.fit_restricted = res_r
    report.fit_full = res_f
    return report
