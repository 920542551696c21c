"""Observation models, synthetic data generation, truncation, residuals, and
residual diagnostics.

The measurement model is ``y_k = M(t_k) + M(t_k)^gamma * eps_k`` with i.i.d.
mean-zero noise: ``gamma = 0`` is the absolute (additive) error model and
``gamma = 1`` pure relative error.  All statistics modules consume the
weighted residuals ``(y_k - M_k) / M_k^gamma``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ValidationError
from .forward import SolverSettings, observable
from .model import FreeMask, ModelParameters

DEFAULT_TRUNCATION_THRESHOLD = 0.12
DEFAULT_TRUNCATION_T_END = 8.0


@dataclass(frozen=True)
class ObservationSet:
    """Time series of normalized polymerized-mass observations."""

    t: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)
    truncation: dict | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValidationError("t and y must be 1-D arrays of equal length")
        if t.size and np.any(np.diff(t) <= 0.0):
            raise ValidationError("observation times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValidationError("observations must be finite")
        t.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.t.size

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t.tolist(),
            "y": self.y.tolist(),
            "provenance": self.provenance,
            "truncation": self.truncation,
        })


@dataclass(frozen=True)
class ResidualSeries:
    """Weighted residuals paired with the model values that produced them.

    ``excluded`` lists (index, reason) pairs for points that could not be
    standardized (zero model value with a positive weighting exponent).
    """

    r: np.ndarray
    model: np.ndarray
    t: np.ndarray
    gamma: float
    excluded: tuple = ()


def simulate_observations(truth: ModelParameters, t_grid, gamma: float,
                          sigma: float, seed: int,
                          mesh=None,
                          settings: SolverSettings | None = None) -> ObservationSet:
    """Draw one synthetic data set from the relative-error observation model.

    ``y_k = M(t_k; truth) + M(t_k; truth)^gamma * eps_k`` with
    ``eps_k ~ Normal(0, sigma^2)`` from a generator seeded by ``seed``;
    bit-reproducible for fixed inputs.
    """
    if not (0.0 <= gamma <= 1.0):
        raise ValidationError(f"gamma in [0,1] violated: {gamma!r}")
    if sigma < 0.0:
        raise ValidationError(f"sigma >= 0 violated: {sigma!r}")
    t_grid = np.asarray(t_grid, dtype=float)
    m = observable(truth, t_grid, mesh, settings)
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, size=m.size) if sigma > 0 else np.zeros(m.size)
    y = m + m ** gamma * eps
    return ObservationSet(
        t=t_grid, y=y,
        provenance={"kind": "synthetic", "seed": int(seed), "gamma": gamma,
                    "sigma": sigma, "truth": truth.to_dict()},
    )


def truncate_observations(obs: ObservationSet,
                          threshold: float = DEFAULT_TRUNCATION_THRESHOLD,
                          t_end: float = DEFAULT_TRUNCATION_T_END) -> ObservationSet:
    """Keep the window [t0, t_end] where t0 is the first time y exceeds
    ``threshold``.  Early low-signal points are discarded because the initial
    aggregation phase is not believed to follow the deterministic model."""
    above = obs.y > threshold
    if not above.any():
        raise ValidationError(
            f"no observation exceeds the truncation threshold {threshold}")
    k0 = int(np.argmax(above))
    keep = (np.arange(obs.n) >= k0) & (obs.t <= t_end)
    record = {"threshold": threshold, "t_end": t_end,
              "t0": float(obs.t[k0]), "n_before": obs.n,
              "n_kept": int(keep.sum())}
    return ObservationSet(t=obs.t[keep].copy(), y=obs.y[keep].copy(),
                          provenance=obs.provenance, truncation=record)


def residuals(obs: ObservationSet, model_values, gamma: float) -> ResidualSeries:
    """Weighted residuals ``(y_k - M_k) / M_k^gamma``.

    Points with ``M_k = 0`` and ``gamma > 0`` are excluded with a recorded
    reason rather than producing infinities.
    """
    model_values = np.asarray(model_values, dtype=float)
    if model_values.shape != obs.y.shape:
        raise ValidationError("model value count must match the observation count")
    if gamma < 0.0 or gamma > 1.0:
        raise ValidationError(f"gamma in [0,1] violated: {gamma!r}")
    excluded = []
    if gamma > 0.0:
        bad = model_values <= 0.0
        for k in np.nonzero(bad)[0]:
            excluded.append((int(k), "nonpositive model value"))
        keep = ~bad
    else:
        keep = np.ones(obs.n, dtype=bool)
    m = model_values[keep]
    r = (obs.y[keep] - m) / m ** gamma if gamma > 0 else obs.y[keep] - m
    return ResidualSeries(r=r, model=m, t=obs.t[keep], gamma=gamma,
                          excluded=tuple(excluded))


@dataclass(frozen=True)
class ResidualDiagnostics:
    lag1_autocorr: float
    fan_corr: float          # Pearson corr of |r| with the model value
    mean: float
    variance: float
    zero_variance: bool
    vs_time: np.ndarray      # columns (t, r), plot-ready
    vs_model: np.ndarray     # columns (M, r), plot-ready


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def residual_diagnostics(series: ResidualSeries) -> ResidualDiagnostics:
    """Numerical stand-ins for the visual residual-plot checks.

    Lag-1 autocorrelation probes independence over time; the correlation of
    |r| with the model value detects the fan shape left by a mismatched
    weighting exponent.
    """
    r = series.r
    if r.size < 10:
        raise ValidationError("residual diagnostics need at least 10 points")
    var = float(r.var())
    zero_var = var == 0.0
    if zero_var:
        lag1 = 0.0
        fan = 0.0
    else:
        lag1 = _pearson(r[:-1], r[1:])
        fan = _pearson(np.abs(r), series.model)
    return ResidualDiagnostics(
        lag1_autocorr=lag1, fan_corr=fan, mean=float(r.mean()), variance=var,
        zero_variance=zero_var,
        vs_time=np.column_stack([series.t, r]),
        vs_model=np.column_stack([series.model, r]),
    )


def gamma_scan(obs: ObservationSet, theta_init: ModelParameters,
               mask: FreeMask, gamma_list,
               mesh=None,
               settings: SolverSettings | None = None,
               opt_config=None) -> dict:
    """Fit the model for each candidate weighting exponent and tabulate the
    residual diagnostics; recommend the gamma with the flattest |r|-vs-model
    relation.  Estimator failures flag their row and the scan continues.
    """
    from .estimator import fit  # deferred: estimator depends on this module

    gamma_list = list(gamma_list)
    if not gamma_list:
        raise ValidationError("gamma_list must be nonempty")
    rows = []
    for g in gamma_list:
        row = {"gamma": float(g)}
        try:
            res = fit(obs, theta_init, mask, g, opt_config,
                      mesh=mesh, settings=settings)
            diag = residual_diagnostics(residuals(obs, res.model_values, g))
            row.update(status=res.status, cost=res.cost,
                       lag1_autocorr=diag.lag1_autocorr,
                       fan_corr=diag.fan_corr, variance=diag.variance)
        except Exception as exc:  # noqa: BLE001 - row-level isolation
            row.update(status="failed", error=str(exc))
        rows.append(row)
    ok = [row for row in rows if row.get("status") in ("converged", "not_converged")]
    if not ok:
        raise ValidationError("every gamma candidate failed to fit")
    best = min(ok, key=lambda row: abs(row["fan_corr"]))
    return {"rows": rows, "recommended_gamma": best["gamma"]}


def load_observations_csv(path) -> ObservationSet:
    """Parse a ``t,m`` CSV file into an ObservationSet.

    Rejects missing headers, non-numeric fields, NaN, negative mass
    fractions, and non-monotone times, naming the offending line.
    """
    ts, ys = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "t,m":
            raise DataFormatError(f"expected header 't,m', got {header!r}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) != 2:
                raise DataFormatError(f"expected 2 fields, got {len(parts)}",
                                      line=lineno)
            try:
                t, m = float(parts[0]), float(parts[1])
            except ValueError:
                raise DataFormatError(f"non-numeric value in {raw!r}",
                                      line=lineno) from None
            if not (np.isfinite(t) and np.isfinite(m)):
                raise DataFormatError("non-finite value", line=lineno)
            if m < 0.0:
                raise DataFormatError(f"negative mass fraction {m}", line=lineno)
            if ts and t <= ts[-1]:
                raise DataFormatError(
                    f"time {t} not greater than previous {ts[-1]}", line=lineno)
            ts.append(t)
            ys.append(m)
    if not ts:
        raise DataFormatError("no data rows", line=2)
    return ObservationSet(t=np.array(ts), y=np.array(ys),
                          provenance={"kind": "ingested", "path": str(path)})


def save_observations_csv(obs: ObservationSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,m\n")
        for t, y in zip(obs.t, obs.y):
            fh.write(f"{float(t)!r},{float(y)!r}\n")


def warn_if_untruncated(obs: ObservationSet) -> None:
    if obs.truncation is None:
        warnings.warn("observations were never truncated; the low-signal "
                      "early phase may bias the fit", stacklevel=3)
