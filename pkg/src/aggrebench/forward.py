"""Hybrid ODE / finite-volume forward model for nucleated polymerization.

State layout
------------
``V``            monomer concentration (single ODE),
``c_i``          discrete polymer concentrations for sizes ``i0 .. N0``,
``u_j``          finite-volume cell averages of the continuous size density
                 on the geometric mesh covering ``[N0, x_max]``,
``V_star``       conformer concentration, never integrated: it is recovered
                 algebraically from the mass-conservation closure

    V_star = c0 - V - sum_i i*c_i - sum_j xbar_j * u_j * dx_j

so the total mass identity holds exactly by construction and the
conservation residual measures only clamping and round-off.

The transport part ``du/dt = -V_star * d(kon(x) u)/dx`` is discretized in
conservative flux form with a choice of upwind, Lax-Wendroff, or van-Leer
flux-limited edge fluxes; the inflow flux at ``x = N0`` is
``V_star * kon(N0) * c_N0`` with ``c_N0`` remaining an ODE unknown.  Time
stepping is an explicit two-stage (Heun) Runge-Kutta with the step size
adapted every step from :func:`stable_dt`.
"""
from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

from .errors import NumericalFailureError, StepBudgetError, ValidationError
from .model import Mesh, ModelParameters, kon_eval, require_valid, resolve_mesh

SCHEMES = ("upwind", "lax_wendroff", "flux_limiter")


@dataclass(frozen=True)
class SolverSettings:
    """Knobs for the explicit integrator.

    Output values are linearly interpolated between accepted steps by
    default; ``land_exactly`` instead shortens steps to hit every output
    time, which matters for derivative-based diagnostics on dense grids.
    """

    scheme: str = "upwind"
    safety: float = 0.9
    max_steps: int = 5_000_000
    vstar_tol: float = 1e-9      # relative to c0; closure below -tol*c0 fails
    clamp_negative: bool = True
    land_exactly: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}; pick from {SCHEMES}")
        if not (0.0 < self.safety <= 1.0):
            raise ValidationError(f"safety in (0,1] violated: {self.safety!r}")


@dataclass(frozen=True)
class HybridState:
    """Snapshot of the coupled state at one time."""

    t: float
    V: float
    c: np.ndarray        # sizes i0 .. N0
    u: np.ndarray        # FV cell averages
    V_star: float


@dataclass
class Trajectory:
    """Forward-solve output sampled at the requested times.

    ``m`` is the normalized polymerized mass fraction M(t)/c0, the observable
    consumed by every statistics module.  ``sink_sum`` stores
    ``sum_i kon(i) c_i + sum_j kon(xbar_j) u_j dx_j`` (the conformer
    consumption factor) and ``c_nucleus`` the nucleus concentration; both
    exist so closure diagnostics do not need full states.
    """

    t: np.ndarray
    m: np.ndarray
    V: np.ndarray
    V_star: np.ndarray
    mass_poly: np.ndarray
    c_nucleus: np.ndarray
    sink_sum: np.ndarray
    c0: float
    scheme: str
    n_steps: int
    dt_min: float
    dt_max: float
    clamped_mass: float

    def to_csv(self, path) -> None:
        header = "t,m,V,V_star"
        data = np.column_stack([self.t, self.m, self.V, self.V_star])
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t.tolist(),
            "m": self.m.tolist(),
            "V": self.V.tolist(),
            "V_star": self.V_star.tolist(),
            "scheme": self.scheme,
            "n_steps": self.n_steps,
            "dt_min": self.dt_min,
            "dt_max": self.dt_max,
            "clamped_mass": self.clamped_mass,
            "c0": self.c0,
        })


class _Workspace:
    """Per-solve precomputed tables (kon samples, quadrature weights)."""

    def __init__(self, p: ModelParameters, mesh: Mesh):
        if mesh.N0 <= p.i0:
            raise ValidationError(
                f"mesh start N0={mesh.N0} must exceed nucleus size i0={p.i0}")
        if p.i_max <= mesh.N0:
            raise ValidationError(
                f"i_max={p.i_max!r} must exceed mesh start N0={mesh.N0}")
        self.p = p
        self.mesh = mesh
        self.sizes = np.arange(p.i0, mesh.N0 + 1, dtype=float)
        self.kon_disc = kon_eval(self.sizes, p)
        self.kon_edges = kon_eval(mesh.edges, p)
        self.kon_cent = kon_eval(mesh.centers, p)
        self.mass_w_disc = self.sizes                      # i weights
        self.mass_w_fv = mesh.centers * mesh.widths        # midpoint quadrature
        self.sink_w_fv = self.kon_cent * mesh.widths
        self.min_w_over_kon = float(np.min(mesh.widths / self.kon_edges[1:]))
        # center-to-center distances for the Lax-Wendroff gradient term
        self.delta = np.empty(mesh.n_cells + 1)
        self.delta[1:-1] = mesh.centers[1:] - mesh.centers[:-1]
        self.delta[0] = mesh.centers[0] - mesh.N0
        self.delta[-1] = mesh.edges[-1] - mesh.centers[-1]

    def closure(self, V: float, c: np.ndarray, u: np.ndarray) -> float:
        return self.p.c0 - V - float(self.mass_w_disc @ c) - float(self.mass_w_fv @ u)

    def poly_mass(self, c: np.ndarray, u: np.ndarray) -> float:
        return float(self.mass_w_disc @ c) + float(self.mass_w_fv @ u)

    def sink(self, c: np.ndarray, u: np.ndarray) -> float:
        return float(self.kon_disc @ c) + float(self.sink_w_fv @ u)


def fv_fluxes(u: np.ndarray, a_edges: np.ndarray, inflow_value: float,
              delta: np.ndarray, dt: float, scheme: str) -> np.ndarray:
    """Edge fluxes for the conservative update of ``du/dt = -d(a u)/dx``.

    ``a_edges`` are the (nonnegative) transport speeds at the cell edges,
    ``inflow_value`` the upstream density feeding the first edge, and
    ``delta`` the center-to-center distances used by the Lax-Wendroff
    gradient.  Flow is assumed left-to-right (polymers only grow).
    """
    n = u.size
    F = np.empty(n + 1)
    F[0] = a_edges[0] * inflow_value
    F[1:] = a_edges[1:] * u            # donor cell, including outflow edge
    if scheme == "upwind" or n < 2:
        return F
    jump = u[1:] - u[:-1]              # across interior edges 1..n-1
    a_int = a_edges[1:-1]
    nu = a_int * dt / delta[1:-1]
    corr = 0.5 * a_int * (1.0 - nu) * jump
    if scheme == "lax_wendroff":
        F[1:-1] += corr
        return F
    # van Leer limiter: smoothness ratio of consecutive upwind jumps
    prev = np.empty(n - 1)
    prev[0] = u[0] - inflow_value
    prev[1:] = jump[:-1]
    denom = np.where(jump == 0.0, 1.0, jump)
    r = np.where(jump == 0.0, 0.0, prev / denom)
    phi = (r + np.abs(r)) / (1.0 + np.abs(r))
    F[1:-1] += phi * corr
    return F


def advect_step(u: np.ndarray, a_edges: np.ndarray, dt: float, mesh: Mesh,
                scheme: str, inflow_value: float = 0.0) -> np.ndarray:
    """Single explicit conservative transport step (no reaction coupling).

    For the ``lax_wendroff`` scheme one such step is the classical
    second-order method; for ``upwind`` it is the first-order donor-cell
    scheme.  Mainly useful for scheme verification on manufactured problems.
    """
    delta = np.empty(mesh.n_cells + 1)
    delta[1:-1] = mesh.centers[1:] - mesh.centers[:-1]
    delta[0] = mesh.centers[0] - mesh.edges[0]
    delta[-1] = mesh.edges[-1] - mesh.centers[-1]
    F = fv_fluxes(u, a_edges, inflow_value, delta, dt, scheme)
    return u - dt * np.diff(F) / mesh.widths


def _nucleation_bound(vs: float, growth: float, p: ModelParameters,
                      safety: float) -> float:
    """Largest dt with dt * i0^2 kon_N * (vs + dt*growth)^(i0-1) <= safety.

    ``growth`` is the current net production rate of the conformer pool; the
    projection keeps the quadratic nucleation sink stable even when starting
    from an empty pool.
    """
    k = p.i0 ** 2 * p.kon_N
    if p.i0 == 2:
        a = k * max(growth, 0.0)
        b = k * vs
        if a <= 0.0:
            return safety / b if b > 0.0 else np.inf
        return (-b + np.sqrt(b * b + 4.0 * a * safety)) / (2.0 * a)
    rate_now = k * vs ** (p.i0 - 1)
    dt = safety / rate_now if rate_now > 0.0 else np.inf
    g = max(growth, 0.0)
    if g == 0.0:
        return dt
    if not np.isfinite(dt):
        dt = (safety / (k * g ** (p.i0 - 1))) ** (1.0 / p.i0)
    while dt * k * (vs + dt * g) ** (p.i0 - 1) > safety:
        dt *= 0.5
    return dt


def _stable_dt_core(vs: float, V: float, c_nucleus: float, sink: float,
                    min_w_over_kon: float, kon_i0: float,
                    p: ModelParameters, safety: float) -> float:
    vs = max(vs, 0.0)
    ode_rate = max(p.kI_plus + p.kI_minus, p.koff_N + kon_i0 * vs)
    growth = (p.kI_plus * V - p.kI_minus * vs
              + p.i0 * p.koff_N * c_nucleus - vs * sink)
    # Heun is stable to 2 on the negative real axis, so the nucleation decay
    # mode may run at twice the advective safety factor.
    dt = min(safety / ode_rate, _nucleation_bound(vs, growth, p, 2.0 * safety))
    if vs > 0.0:
        dt = min(dt, safety * min_w_over_kon / vs)
    return dt


def stable_dt(state: HybridState, mesh: Mesh, p: ModelParameters,
              safety: float = 0.9) -> float:
    """Largest stable explicit step at the given state.

    Advective bound: the donor-cell CFL ``min_j dx_j / (V_star kon(x_{j+1}))``
    over the mesh cells (outflow-edge speed).  It is capped by the reaction
    bound ``1 / max(kI_plus + kI_minus, koff_N + kon(i0) V_star)`` and by a
    nucleation bound that projects the conformer pool forward over the step
    (the quadratic sink ``kon_N V_star^i0`` is otherwise unstable when the
    pool is filling from zero).  When ``V_star`` is zero and the pool is not
    growing, only the reaction bound applies.
    """
    if not (0.0 < safety <= 1.0):
        raise ValidationError(f"safety in (0,1] violated: {safety!r}")
    ws = _Workspace(p, mesh)
    return _stable_dt_core(state.V_star, state.V, float(state.c[0]),
                           ws.sink(state.c, state.u), ws.min_w_over_kon,
                           float(ws.kon_disc[0]), p, safety)


def _initial_arrays(p: ModelParameters, mesh: Mesh):
    n_disc = mesh.N0 - p.i0 + 1
    return p.c0, np.zeros(n_disc), np.zeros(mesh.n_cells)


def solve_forward(p: ModelParameters, mesh: Mesh, scheme: str,
                  t_out, settings: SolverSettings | None = None) -> Trajectory:
    """Integrate the hybrid system from the pristine initial state.

    Initial data: ``V(0) = c0`` with every aggregate concentration zero.
    Returns a :class:`Trajectory` sampled at exactly ``t_out`` (strictly
    increasing, first entry >= 0); integration always starts at t = 0.

    Raises :class:`StepBudgetError` when the CFL step count exceeds the
    configured budget and :class:`NumericalFailureError` when the
    mass-conservation closure yields a conformer concentration below
    tolerance.
    """
    require_valid(p)
    if settings is None:
        settings = SolverSettings(scheme=scheme)
    elif settings.scheme != scheme:
        settings = SolverSettings(scheme=scheme, safety=settings.safety,
                                  max_steps=settings.max_steps,
                                  vstar_tol=settings.vstar_tol,
                                  clamp_negative=settings.clamp_negative,
                                  land_exactly=settings.land_exactly)
    t_out = np.asarray(t_out, dtype=float)
    if t_out.ndim != 1 or t_out.size == 0:
        raise ValidationError("t_out must be a nonempty 1-D sequence")
    if t_out[0] < 0.0 or np.any(np.diff(t_out) <= 0.0):
        raise ValidationError("t_out must be strictly increasing with t_out[0] >= 0")

    ws = _Workspace(p, mesh)
    V, c, u = _initial_arrays(p, mesh)
    vstar_floor = -settings.vstar_tol * p.c0
    # Predictor stages are discarded intermediates: during the nucleation
    # burst their conformer balance may dip slightly negative without harming
    # the corrected state, so only a gross violation fails the stage.
    stage_floor = -0.05 * p.c0

    n_out = t_out.size
    out = {k: np.empty(n_out) for k in
           ("m", "V", "V_star", "mass_poly", "c_nucleus", "sink_sum")}
    k_out = 0
    t = 0.0
    n_steps = 0
    dt_min, dt_max = np.inf, 0.0
    clamped = 0.0
    clamp_buf = 0.0
    scheme_f = settings.scheme
    kon_disc = ws.kon_disc
    kon_edges = ws.kon_edges
    kon_i0 = float(kon_disc[0])
    inv_w = 1.0 / mesh.widths

    def vstar_of(Vv, cc, uu, tt, floor=vstar_floor):
        vs = ws.closure(Vv, cc, uu)
        if vs < floor:
            raise NumericalFailureError(
                f"conformer closure went negative ({vs:.3e})", tt)
        return max(vs, 0.0)

    def rhs(Vv, cc, uu, vs, dt, sink=None):
        # The conformer pool relaxes at rate r toward production/r; when the
        # step cannot resolve that relaxation (r*dt > 1) use the exponential
        # average of the pool over the step instead of the stale endpoint
        # value, which keeps the consumption feedback loop stable.  For
        # r*dt <= 1 this is plain Heun and second order is untouched.
        if sink is None:
            sink = ws.sink(cc, uu)
        r = p.kI_minus + sink + p.i0 ** 2 * p.kon_N * vs ** (p.i0 - 1)
        z = r * dt
        if z > 1.0:
            qs = (p.kI_plus * Vv + p.i0 * p.koff_N * cc[0]) / r
            phi = -np.expm1(-z) / z
            vs = qs + (vs - qs) * phi
        dV = -p.kI_plus * Vv + p.kI_minus * vs
        flow = kon_disc * cc
        dc = np.empty_like(cc)
        dc[0] = p.kon_N * vs ** p.i0 - p.koff_N * cc[0] - vs * flow[0]
        dc[1:] = vs * (flow[:-1] - flow[1:])
        F = fv_fluxes(uu, vs * kon_edges, cc[-1], ws.delta, dt, scheme_f)
        du = -np.diff(F) * inv_w
        return dV, dc, du

    def clamp(cc, uu):
        nonlocal clamp_buf
        if not settings.clamp_negative:
            return cc, uu
        neg_c = cc < 0.0
        if neg_c.any():
            clamp_buf += float(-(ws.mass_w_disc[neg_c] @ cc[neg_c]))
            cc = np.where(neg_c, 0.0, cc)
        neg_u = uu < 0.0
        if neg_u.any():
            clamp_buf += float(-(ws.mass_w_fv[neg_u] @ uu[neg_u]))
            uu = np.where(neg_u, 0.0, uu)
        return cc, uu

    def record_tuple(Vv, cc, uu, vs):
        mass = ws.poly_mass(cc, uu)
        return (mass / p.c0, Vv, vs, mass, float(cc[0]), ws.sink(cc, uu))

    def emit(idx, values):
        for key, val in zip(("m", "V", "V_star", "mass_poly", "c_nucleus",
                             "sink_sum"), values):
            out[key][idx] = val

    vs = vstar_of(V, c, u, t)
    rec = record_tuple(V, c, u, vs)
    while k_out < n_out and t_out[k_out] <= 0.0:
        emit(k_out, rec)
        k_out += 1

    while k_out < n_out:
        dt = _stable_dt_core(vs, V, float(c[0]), rec[5], ws.min_w_over_kon,
                             kon_i0, p, settings.safety)
        landing = False
        if settings.land_exactly and t + dt >= t_out[k_out]:
            dt = t_out[k_out] - t
            landing = True
        # When the conformer balance dips below tolerance the step was too
        # aggressive (quasi-steady overshoot during the nucleation burst);
        # halve and retry locally instead of failing outright.
        for retry in range(61):
            if retry == 60:
                raise NumericalFailureError(
                    "step-halving could not restore the conformer balance", t)
            clamp_buf = 0.0
            try:
                dV1, dc1, du1 = rhs(V, c, u, vs, dt, rec[5])
                V1 = V + dt * dV1
                c1, u1 = clamp(c + dt * dc1, u + dt * du1)
                vs1 = vstar_of(V1, c1, u1, t + dt, stage_floor)
                dV2, dc2, du2 = rhs(V1, c1, u1, vs1, dt)
                V2 = V + 0.5 * dt * (dV1 + dV2)
                c2, u2 = clamp(c + 0.5 * dt * (dc1 + dc2),
                               u + 0.5 * dt * (du1 + du2))
                # A genuinely unstable step drives the closure negative by an
                # amount comparable to the mass it moved; truncation-level
                # wiggle is orders of magnitude below that and is clamped.
                moved = abs(V2 - V) + dt * abs(dV1)
                vs2 = vstar_of(V2, c2, u2, t + dt,
                               min(vstar_floor, -0.01 * moved))
            except NumericalFailureError:
                dt *= 0.5
                continue
            break
        V, c, u, vs = V2, c2, u2, vs2
        clamped += clamp_buf
        t_new = t_out[k_out] if landing and dt == t_out[k_out] - t else t + dt
        rec_new = record_tuple(V, c, u, vs)
        while k_out < n_out and t_out[k_out] <= t_new:
            w = (t_out[k_out] - t) / dt
            emit(k_out, tuple(a + w * (b - a) for a, b in zip(rec, rec_new)))
            k_out += 1
        t, rec = t_new, rec_new
        n_steps += 1
        dt_min = min(dt_min, dt)
        dt_max = max(dt_max, dt)
        if n_steps > settings.max_steps:
            raise StepBudgetError(settings.max_steps, t)

    return Trajectory(t=t_out.copy(), m=out["m"], V=out["V"],
                      V_star=out["V_star"], mass_poly=out["mass_poly"],
                      c_nucleus=out["c_nucleus"], sink_sum=out["sink_sum"],
                      c0=p.c0, scheme=settings.scheme, n_steps=n_steps,
                      dt_min=float(dt_min) if n_steps else 0.0,
                      dt_max=float(dt_max), clamped_mass=clamped)


def observable(p: ModelParameters, t_out, mesh=None,
               settings: SolverSettings | None = None) -> np.ndarray:
    """Normalized polymerized-mass curve M(t)/c0 at the requested times.

    ``mesh`` may be a Mesh, a MeshSpec (rebuilt per parameter set, which
    keeps grids consistent when ``i_max`` varies), or None for the standard
    grid.
    """
    if settings is None:
        settings = SolverSettings()
    mesh = resolve_mesh(mesh, p)
    return solve_forward(p, mesh, settings.scheme, t_out, settings).m


def conservation_residual(traj: Trajectory) -> float:
    """Worst relative deficit of ``V + V_star + polymerized mass`` vs ``c0``.

    With the algebraic closure this is round-off plus any mass created by
    negativity clamping.
    """
    deficit = np.abs(traj.V + traj.V_star + traj.mass_poly - traj.c0)
    return float(np.max(deficit) / traj.c0)


def closure_consistency(traj: Trajectory, p: ModelParameters) -> float:
    """Compare the time derivative of the algebraically closed conformer
    concentration against the exchange/nucleation/consumption right-hand side

        kI_plus V - kI_minus V_star + i0 koff_N c_nucleus - V_star * sink_sum

    evaluated on the stored trajectory (central differences in time).
    Returns the maximum absolute mismatch over interior output points.
    """
    if traj.t.size < 3:
        raise ValidationError("closure consistency needs at least 3 output times")
    t, vs = traj.t, traj.V_star
    dvdt = (vs[2:] - vs[:-2]) / (t[2:] - t[:-2])
    mid = slice(1, -1)
    rhs = (p.kI_plus * traj.V[mid] - p.kI_minus * vs[mid]
           + p.i0 * p.koff_N * traj.c_nucleus[mid]
           - vs[mid] * traj.sink_sum[mid])
    return float(np.max(np.abs(dvdt - rhs)))
