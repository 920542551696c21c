"""Acceptance gate: every numbered criterion as one test with its stated
tolerance, printing a PASS/FAIL line (run with ``pytest -s`` to see them
live).  Criteria involving heavy Monte-Carlo are marked ``slow``."""
from __future__ import annotations

import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.special import erf

from aggrebench import (
    FreeMask,
    NelderMeadConfig,
    NestedSpec,
    ObservationSet,
    SolverSettings,
    advect_step,
    build_mesh,
    chi_square_sf,
    compare_nested,
    conservation_residual,
    default_mesh,
    evaluate_uncertainty,
    fast_benchmark,
    fast_benchmark_mesh,
    fit,
    observable,
    report_from_costs,
    residual_diagnostics,
    residuals,
    scaled_benchmark,
    solve_forward,
    truncate_observations,
)
from aggrebench.bootstrap import bootstrap_estimate
from aggrebench.model import ModelParameters, kon_eval

warnings.filterwarnings("ignore", message=".*truncated.*")
warnings.filterwarnings("ignore", message=".*clamping.*")

GAMMA = 0.6
SIGMA = 0.0025


def _verdict(num: int, description: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num:02d} {status} - {description}"
          + (f" [{detail}]" if detail else ""))
    assert passed, f"criterion {num}: {description} {detail}"


@pytest.fixture(scope="module")
def truth():
    return fast_benchmark()


@pytest.fixture(scope="module")
def mesh(truth):
    return fast_benchmark_mesh(truth)


@pytest.fixture(scope="module")
def smooth_settings():
    # exact output landing keeps the cost surface smooth in theta, which the
    # fit-based Monte-Carlo criteria need
    return SolverSettings(land_exactly=True)


@pytest.fixture(scope="module")
def short_curve(truth, mesh, smooth_settings):
    t = np.linspace(0.0, 4.0, 376)[1:]
    return t, observable(truth, t, mesh, smooth_settings)


@pytest.fixture(scope="module")
def standard_curve(truth, mesh, smooth_settings):
    t = np.linspace(0.0, 8.0, 751)[1:]
    return t, observable(truth, t, mesh, smooth_settings)


def _draw(t, m_true, seed, sigma=SIGMA, gamma=GAMMA):
    rng = np.random.default_rng(seed)
    y = m_true + m_true ** gamma * rng.normal(0.0, sigma, m_true.size)
    return truncate_observations(ObservationSet(t=t, y=y))


def test_criterion_01_comparison_statistic_arithmetic():
    report = report_from_costs(j_restricted=0.0044192109,
                               j_full=0.0043709501, n=699, df=1, alpha=0.01)
    ok = abs(report.statistic - 7.7178) <= 5e-4 and report.verdict == "reject"
    _verdict(1, "comparison statistic reproduces the published arithmetic",
             ok, f"U={report.statistic:.5f}")


def test_criterion_02_chi_square_threshold_table():
    table = [(1.32, 0.25), (2.71, 0.10), (3.84, 0.05), (6.63, 0.01),
             (10.83, 0.001)]
    errs = {tau: abs(chi_square_sf(tau, 1) - alpha) for tau, alpha in table}
    ok = all(err <= 2e-3 for err in errs.values())
    _verdict(2, "chi-square survival function matches the threshold table",
             ok, f"max err={max(errs.values()):.2e}")


def test_criterion_03_mass_conservation_random_draws():
    rng = np.random.default_rng(2026)
    t_out = np.linspace(0.0, 8.0, 41)
    worst = 0.0
    for _ in range(50):
        p = ModelParameters(
            kI_plus=float(np.exp(rng.uniform(np.log(1.1), np.log(4.4)))),
            kI_minus=float(np.exp(rng.uniform(np.log(5.5), np.log(22.0)))),
            kon_N=float(np.exp(rng.uniform(np.log(1.0), np.log(20.0)))),
            koff_N=float(np.exp(rng.uniform(np.log(45.0), np.log(180.0)))),
            kon_min=float(np.exp(rng.uniform(np.log(0.5), np.log(4.0)))),
            kon_max=float(np.exp(rng.uniform(np.log(60.0), np.log(500.0)))),
            x1=float(rng.uniform(0.04, 0.12)),
            x2=float(rng.uniform(0.7, 0.9)),
            i_max=float(np.exp(rng.uniform(np.log(150.0), np.log(800.0)))),
        )
        traj = solve_forward(p, default_mesh(p), "upwind", t_out)
        worst = max(worst, conservation_residual(traj))
    _verdict(3, "mass conservation <= 1e-8 over 50 random draws on the "
                "default mesh", worst <= 1e-8, f"worst={worst:.2e}")


def test_criterion_04_exchange_equilibrium(truth, mesh):
    p = truth.replace(kon_N=0.0)
    traj = solve_forward(p, mesh, "upwind", [8.0])
    ratio = traj.V_star[-1] / traj.V[-1]
    expect = p.kI_plus / p.kI_minus
    rel = abs(ratio - expect) / expect
    _verdict(4, "conformer/monomer ratio reaches kI+/kI- without nucleation",
             rel <= 1e-3, f"rel err={rel:.2e}")


def test_criterion_05_solver_oracle_equivalence():
    p = scaled_benchmark(2000.0)
    N_max = 2000
    sizes = np.arange(p.i0, N_max + 1, dtype=float)
    kon = kon_eval(sizes, p)
    kon_eff = kon.copy()
    kon_eff[-1] = 0.0          # truncation: nothing grows past the top bin

    def rhs(t, y):
        V, Vs = y[0], y[1]
        c = y[2:]
        flux = kon_eff * c * Vs
        nuc = p.kon_N * Vs ** p.i0
        dV = -p.kI_plus * V + p.kI_minus * Vs
        dVs = (p.kI_plus * V - p.kI_minus * Vs + p.i0 * p.koff_N * c[0]
               - p.i0 * nuc - float(np.sum(kon_eff * c)) * Vs)
        dc = np.empty_like(c)
        dc[0] = nuc - p.koff_N * c[0] - flux[0]
        dc[1:] = flux[:-1] - flux[1:]
        return np.concatenate(([dV, dVs], dc))

    y0 = np.zeros(2 + sizes.size)
    y0[0] = p.c0
    t_out = np.linspace(0.0, 8.0, 41)
    sol = solve_ivp(rhs, (0.0, 8.0), y0, method="RK45", t_eval=t_out,
                    rtol=1e-7, atol=1e-12)
    assert sol.status == 0
    m_oracle = (sizes[:, None] * sol.y[2:]).sum(axis=0) / p.c0

    traj = solve_forward(p, default_mesh(p), "upwind", t_out)
    sup = float(np.max(np.abs(traj.m - m_oracle)))
    _verdict(5, "hybrid solver matches the truncated-ODE oracle within 2%",
             sup <= 0.02, f"sup-norm={sup:.2e}")


def _gaussian_cell_averages(mesh, center, width):
    a = (mesh.edges - center) / (width * np.sqrt(2.0))
    anti = 0.5 * erf(a)
    return width * np.sqrt(2 * np.pi) * np.diff(anti) / mesh.widths


def _advection_order(scheme):
    speed, T = 20.0, 4.0
    errors = []
    for q in (0.02, 0.01):
        mesh = build_mesh(50, 800.0, q)
        u = _gaussian_cell_averages(mesh, 200.0, 25.0)
        a_edges = np.full(mesh.edges.size, speed)
        dt = 0.4 * float(np.min(mesh.widths)) / speed
        n_steps = int(np.ceil(T / dt))
        dt = T / n_steps
        for _ in range(n_steps):
            u = advect_step(u, a_edges, dt, mesh, scheme)
        exact = _gaussian_cell_averages(mesh, 200.0 + speed * T, 25.0)
        errors.append(float(np.sum(np.abs(u - exact) * mesh.widths)))
    return float(np.log2(errors[0] / errors[1]))


def test_criterion_06_scheme_orders():
    order_up = _advection_order("upwind")
    order_lw = _advection_order("lax_wendroff")
    ok = order_up >= 0.8 and order_lw >= 1.7
    _verdict(6, "manufactured advection orders (upwind >= 0.8, "
                "Lax-Wendroff >= 1.7)", ok,
             f"upwind={order_up:.2f}, lw={order_lw:.2f}")


@pytest.mark.slow
def test_criterion_07_estimator_recovery(truth, mesh, smooth_settings,
                                         standard_curve):
    t, m_true = standard_curve
    mask = FreeMask.from_names(["kI_plus", "kI_minus", "koff_N"])
    start = truth.replace(kI_plus=2.16, kI_minus=10.927, koff_N=108.256)
    cfg = NelderMeadConfig(max_iter=250, cost_tol=1e-10, simplex_tol=1e-6,
                           restarts=0, init_step=0.03)
    truth_vec = truth.values_for(mask.free_names)
    hits = 0
    sigma2_values = []
    for seed in range(20):
        obs = _draw(t, m_true, seed)
        res = fit(obs, start, mask, GAMMA, cfg, mesh=mesh,
                  settings=smooth_settings)
        rep = evaluate_uncertainty(obs, res.theta, mask, GAMMA, mesh=mesh,
                                   settings=smooth_settings)
        sigma2_values.append(rep.sigma2)
        z = np.abs(res.theta.values_for(mask.free_names) - truth_vec) / rep.se
        hits += bool(np.all(z <= 3.0))
    sigma2_mean = float(np.mean(sigma2_values))
    ok = hits >= 18 and 4e-6 <= sigma2_mean <= 9e-6
    _verdict(7, "3-parameter fits recover the truth within 3 SE in >=90% "
                "of seeds at the published noise scale", ok,
             f"hits={hits}/20, sigma2={sigma2_mean:.2e}")


@pytest.mark.slow
def test_criterion_08_bootstrap_asymptotic_agreement(truth, mesh,
                                                     smooth_settings,
                                                     short_curve):
    t, m_true = short_curve
    mask = FreeMask.from_names(["kI_plus", "kI_minus"])
    # sigma small enough that the cost surface is locally quadratic over the
    # sampling spread, the regime where asymptotic theory applies
    obs = _draw(t, m_true, seed=1234, sigma=0.001)
    base_cfg = NelderMeadConfig(max_iter=200, cost_tol=1e-10,
                                simplex_tol=1e-7, restarts=1, init_step=0.02)
    base = fit(obs, truth.replace(kI_plus=2.16, kI_minus=10.927), mask,
               GAMMA, base_cfg, mesh=mesh, settings=smooth_settings)
    asym = evaluate_uncertainty(obs, base.theta, mask, GAMMA, mesh=mesh,
                                settings=smooth_settings)
    boot_cfg = NelderMeadConfig(max_iter=80, cost_tol=1e-9,
                                simplex_tol=1e-5, restarts=0, init_step=0.01)
    boot = bootstrap_estimate(obs, base, 1000, GAMMA, seed=99,
                              opt_config=boot_cfg, mesh=mesh,
                              settings=smooth_settings)
    ratios = boot.se / asym.se
    ok = bool(np.all(np.abs(ratios - 1.0) <= 0.25)) \
        and boot.converged_count >= 950
    _verdict(8, "bootstrap SE within 25% of asymptotic SE (2 parameters, "
                "M=1000)", ok,
             f"ratios={np.array2string(ratios, precision=3)}, "
             f"converged={boot.converged_count}")


def test_criterion_09_residual_diagnostic_discrimination(truth, mesh,
                                                         smooth_settings):
    # untruncated relative-error data on a design that samples both tails of
    # the mass curve; the |r|-vs-model correlation of a half-normal fan
    # cannot exceed ~0.48 when the model values are confined to [0.12, 1],
    # so the early low-signal window is what gives the detector leverage
    t = np.concatenate([np.linspace(0.02, 0.16, 150),
                        np.linspace(2.0, 4.0, 150)])
    m_true = observable(truth, t, mesh, smooth_settings)
    mask = FreeMask.from_names(["kI_plus", "kI_minus"])
    start = truth.replace(kI_plus=2.16, kI_minus=10.927)
    cfg = NelderMeadConfig(max_iter=120, cost_tol=1e-9, simplex_tol=1e-6,
                           restarts=0, init_step=0.02)
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(10_000 + seed)
        y = m_true * (1.0 + rng.normal(0.0, 0.05, m_true.size))
        obs = ObservationSet(t=t, y=y)
        corr = {}
        for g in (1.0, 0.0):
            res = fit(obs, start, mask, g, cfg, mesh=mesh,
                      settings=smooth_settings)
            diag = residual_diagnostics(residuals(obs, res.model_values, g))
            corr[g] = diag.fan_corr
        hits += bool(abs(corr[1.0]) < 0.15 and corr[0.0] > 0.5)
    _verdict(9, "residual fan-shape separates matched from mismatched "
                "weighting in >=90% of seeds", hits >= 18, f"hits={hits}/20")


@pytest.mark.slow
def test_criterion_10_null_calibration(truth, mesh, smooth_settings,
                                       short_curve):
    t, m_true = short_curve
    spec = NestedSpec(
        full=FreeMask.from_names(["kI_plus", "kI_minus", "kon_N"]),
        restricted=FreeMask.from_names(["kI_plus", "kI_minus"]))
    start = truth.replace(kI_plus=2.16, kI_minus=10.927)
    cfg = NelderMeadConfig(max_iter=150, cost_tol=1e-10, simplex_tol=1e-7,
                           restarts=0, init_step=0.02)
    rejections = 0
    for seed in range(200):
        obs = _draw(t, m_true, seed)
        rep = compare_nested(obs, spec, start, GAMMA, alpha=0.05,
                             opt_config=cfg, mesh=mesh,
                             settings=smooth_settings)
        rejections += rep.statistic > 3.84
    rate = rejections / 200.0
    _verdict(10, "null rejection rate at tau=3.84 lies in [2%, 10%] over "
                 "200 replicates", 0.02 <= rate <= 0.10,
             f"rate={rate:.3f} ({rejections}/200)")


def test_criterion_11_ill_conditioning_reproduction(smooth_settings):
    p = fast_benchmark(i_max=4000.0)
    mesh = build_mesh(12, 16000.0, 0.12)
    t = np.linspace(0.1, 2.0, 150)
    m_true = observable(p, t, mesh, smooth_settings)
    rng = np.random.default_rng(5)
    y = m_true + m_true ** GAMMA * rng.normal(0.0, SIGMA, m_true.size)
    obs = truncate_observations(ObservationSet(t=t, y=y), t_end=2.0)
    mask9 = FreeMask((True,) * 9)
    rep = evaluate_uncertainty(obs, p, mask9, GAMMA, mesh=mesh,
                               settings=smooth_settings)
    ok = (not rep.invertible) and rep.se is None and not (rep.cond < 1e8)
    _verdict(11, "nine-parameter information matrix is ill-conditioned "
                 "(kappa >= 1e8) and SE computation is refused", ok,
             f"kappa={rep.cond:.3e}")


def test_criterion_12_supported_parameter_set(truth, mesh, smooth_settings,
                                              short_curve):
    t, m_true = short_curve
    obs = _draw(t, m_true, seed=42)
    cfg = NelderMeadConfig(max_iter=250, cost_tol=1e-10, simplex_tol=1e-7,
                           restarts=1, init_step=0.03)
    restricted = FreeMask.from_names(["kI_plus", "kI_minus"])

    # adding the nucleus stability rate is significant when its pinned value
    # is off the generating one
    spec_koff = NestedSpec(
        full=FreeMask.from_names(["kI_plus", "kI_minus", "koff_N"]),
        restricted=restricted)
    start_koff = truth.replace(koff_N=93.332, kI_plus=2.16, kI_minus=10.927)
    rep_koff = compare_nested(obs, spec_koff, start_koff, GAMMA, alpha=0.01,
                              opt_config=cfg, mesh=mesh,
                              settings=smooth_settings)

    # adding the nucleation rate is not (it is pinned at the truth)
    spec_kon = NestedSpec(
        full=FreeMask.from_names(["kI_plus", "kI_minus", "kon_N"]),
        restricted=restricted)
    start_kon = truth.replace(kI_plus=2.16, kI_minus=10.927)
    rep_kon = compare_nested(obs, spec_kon, start_kon, GAMMA, alpha=0.01,
                             opt_config=cfg, mesh=mesh,
                             settings=smooth_settings)

    ok = rep_koff.verdict == "reject" and rep_kon.verdict == "do-not-reject"
    _verdict(12, "nested tests accept the nucleus-stability extension and "
                 "decline the nucleation extension", ok,
             f"U_koff={rep_koff.statistic:.2f}, "
             f"U_kon={rep_kon.statistic:.3f}")
