"""Generalized-least-squares cost and the derivative-free fitter.

The cost is ``J(theta) = (1/n) * sum_k ((y_k - M_k)/M_k^gamma)^2`` with the
weights taken from the model value at the current theta, and it is minimized
over the masked free parameters in log space with a Nelder-Mead simplex.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitFailureError, ValidationError
from .forward import SolverSettings, observable
from .model import FreeMask, ModelParameters, require_valid
from .observation import ObservationSet, warn_if_untruncated

PENALTY_COST = 1e12


def gls_cost(theta: ModelParameters, obs: ObservationSet, gamma: float,
             mesh=None, settings: SolverSettings | None = None) -> float:
    """Mean weighted square deviation between data and model.

    ``gamma = 0`` reduces to the ordinary least squares cost (mean squared
    error).  The ``1/n`` normalization makes the value directly usable by the
    nested-model test statistic.
    """
    if obs.n == 0:
        raise ValidationError("cannot evaluate a cost on an empty observation set")
    model = observable(theta, obs.t, mesh, settings)
    if gamma > 0.0 and np.any(model <= 0.0):
        raise ValidationError(
            "zero model value with gamma > 0; truncate the observations first")
    r = (obs.y - model) / model ** gamma if gamma > 0 else obs.y - model
    return float(np.mean(r * r))


@dataclass(frozen=True)
class NelderMeadConfig:
    """Tolerances and budgets for the simplex search.

    ``init_step`` is the relative spread of the starting simplex (log-space
    fits turn it into a multiplicative perturbation).  A restart rebuilds the
    simplex around the incumbent best point, which guards against premature
    collapse.
    """

    max_iter: int = 2000
    cost_tol: float = 1e-10       # relative spread of simplex costs
    simplex_tol: float = 1e-8     # simplex diameter in search space
    restarts: int = 2
    init_step: float = 0.05


@dataclass
class MinimizeTrace:
    iterations: int = 0
    evaluations: int = 0
    restarts_used: int = 0
    penalized: int = 0
    best_history: list = field(default_factory=list)
    converged: bool = False
    final_spread: float = math.inf
    final_diameter: float = math.inf


def minimize(f, x0, config: NelderMeadConfig | None = None):
    """Nelder-Mead simplex descent over a real vector.

    Returns ``(x_best, f_best, trace)``.  The best value sequence is
    monotone non-increasing; convergence requires both the relative cost
    spread and the simplex diameter to fall below their tolerances.
    """
    cfg = config or NelderMeadConfig()
    x0 = np.asarray(x0, dtype=float)
    trace = MinimizeTrace()

    def feval(x):
        trace.evaluations += 1
        v = float(f(x))
        if not math.isfinite(v):
            trace.penalized += 1
            v = PENALTY_COST
        return v

    f0 = float(f(x0))
    trace.evaluations += 1
    if not math.isfinite(f0):
        raise ValidationError("objective is not finite at the starting point")

    best_x, best_f = x0.copy(), f0
    n = x0.size
    alpha, gamma_e, rho, sigma = 1.0, 2.0, 0.5, 0.5

    def initial_simplex(center, scale):
        pts = [center.copy()]
        for i in range(n):
            q = center.copy()
            step = scale * (abs(q[i]) if q[i] != 0.0 else 1.0)
            q[i] += step
            pts.append(q)
        return pts

    for round_idx in range(cfg.restarts + 1):
        round_start_best = best_f
        scale = cfg.init_step * (0.5 ** round_idx)
        xs = initial_simplex(best_x, scale)
        fs = [best_f] + [feval(x) for x in xs[1:]]
        converged = False
        while trace.iterations < cfg.max_iter:
            order = np.argsort(fs)
            xs = [xs[i] for i in order]
            fs = [fs[i] for i in order]
            if fs[0] < best_f:
                best_f, best_x = fs[0], xs[0].copy()
            trace.best_history.append(best_f)
            spread = (fs[-1] - fs[0]) / max(abs(fs[0]), 1e-300)
            diameter = max(float(np.max(np.abs(x - xs[0]))) for x in xs[1:])
            trace.final_spread, trace.final_diameter = spread, diameter
            # A collapsed simplex resolves the argmin even when evaluation
            # noise keeps the cost spread above its tolerance.
            if spread <= cfg.cost_tol or diameter <= cfg.simplex_tol:
                converged = True
                break
            trace.iterations += 1

            centroid = np.mean(xs[:-1], axis=0)
            xr = centroid + alpha * (centroid - xs[-1])
            fr = feval(xr)
            if fs[0] <= fr < fs[-2]:
                xs[-1], fs[-1] = xr, fr
                continue
            if fr < fs[0]:
                xe = centroid + gamma_e * (xr - centroid)
                fe = feval(xe)
                if fe < fr:
                    xs[-1], fs[-1] = xe, fe
                else:
                    xs[-1], fs[-1] = xr, fr
                continue
            xc = centroid + rho * (xs[-1] - centroid)
            fc = feval(xc)
            if fc < fs[-1]:
                xs[-1], fs[-1] = xc, fc
                continue
            for i in range(1, n + 1):
                xs[i] = xs[0] + sigma * (xs[i] - xs[0])
                fs[i] = feval(xs[i])
        if fs[0] < best_f:
            best_f, best_x = fs[0], xs[0].copy()
        trace.converged = converged
        if trace.iterations >= cfg.max_iter:
            break
        # A restart re-seeds a fresh simplex around the incumbent; once a
        # converged round no longer improves the best value, stop.
        improvement = round_start_best - best_f
        if converged and improvement <= cfg.cost_tol * max(abs(best_f), 1e-300):
            break
        if round_idx < cfg.restarts:
            trace.restarts_used += 1

    return best_x, best_f, trace


@dataclass
class FitResult:
    theta: ModelParameters
    mask: FreeMask
    gamma: float
    cost: float
    model_values: np.ndarray
    status: str                  # "converged" | "not_converged"
    trace: MinimizeTrace
    log_space: bool = True

    def to_json(self) -> str:
        return json.dumps({
            "theta": self.theta.to_dict(),
            "free": list(self.mask.free_names),
            "gamma": self.gamma,
            "cost": self.cost,
            "model_values": self.model_values.tolist(),
            "status": self.status,
            "log_space": self.log_space,
            "trace": {
                "iterations": self.trace.iterations,
                "evaluations": self.trace.evaluations,
                "restarts_used": self.trace.restarts_used,
                "penalized": self.trace.penalized,
                "final_spread": self.trace.final_spread,
                "final_diameter": self.trace.final_diameter,
                "best_history": self.trace.best_history,
            },
        })


def fit(obs: ObservationSet, theta_init: ModelParameters, mask: FreeMask,
        gamma: float, opt_config: NelderMeadConfig | None = None,
        mesh=None, settings: SolverSettings | None = None,
        log_space: bool = True) -> FitResult:
    """Minimize the GLS cost over the masked free parameters.

    Masked-off parameters keep their ``theta_init`` values bit-exactly.
    Forward-solver failures during the search are penalized and recorded in
    the trace instead of aborting.  The returned cost never exceeds the cost
    at ``theta_init``.
    """
    require_valid(theta_init)
    warn_if_untruncated(obs)
    names = mask.free_names

    def unpack(x):
        vals = np.exp(x) if log_space else x
        return theta_init.with_values(names, vals)

    def objective(x):
        try:
            return gls_cost(unpack(x), obs, gamma, mesh, settings)
        except ValidationError:
            raise
        except Exception:  # noqa: BLE001 - solver failures are penalized
            return math.nan

    x0 = theta_init.values_for(names)
    if log_space:
        if np.any(x0 <= 0.0):
            raise ValidationError(
                "log-space fitting requires positive starting values; "
                f"offending parameters: {[n for n, v in zip(names, x0) if v <= 0]}")
        x0 = np.log(x0)
    try:
        x_best, f_best, trace = minimize(objective, x0, opt_config)
    except ValidationError as exc:
        raise FitFailureError(f"fit could not start: {exc}") from exc

    theta_hat = unpack(x_best)
    model = observable(theta_hat, obs.t, mesh, settings)
    return FitResult(theta=theta_hat, mask=mask, gamma=gamma, cost=f_best,
                     model_values=model,
                     status="converged" if trace.converged else "not_converged",
                     trace=trace, log_space=log_space)
