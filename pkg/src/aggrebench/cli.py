"""Command-line workbench tying the pipeline together.

Subcommands: simulate, fit, residuals, gamma-scan, uncertainty, bootstrap,
compare.  Every report embeds the fully resolved configuration and a content
hash of the input data.  Exit codes: 0 success, 2 validation error,
3 numerical failure.  The environment variable AGGRE_THREADS caps internal
parallelism (bootstrap replicates).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .bootstrap import bootstrap_estimate
from .comparison import NestedSpec, compare_nested, report_from_costs
from .config import RunConfig
from .errors import (AggrebenchError, DataFormatError, FitFailureError,
                     NumericalFailureError, StepBudgetError, ValidationError)
from .estimator import fit
from .forward import observable, solve_forward
from .model import FreeMask, resolve_mesh
from .observation import (ObservationSet, gamma_scan, load_observations_csv,
                          residual_diagnostics, residuals,
                          save_observations_csv, simulate_observations,
                          truncate_observations)
from .uncertainty import evaluate_uncertainty

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True),
                    encoding="utf-8")


def _write_table(path: Path, header: str, columns) -> None:
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", header=header, comments="")


def _report(config: RunConfig, data_path, body: dict) -> dict:
    return {
        "config": config.to_dict(),
        "input": None if data_path is None else
        {"path": str(data_path), "sha256": _sha256(data_path)},
        "report": body,
    }


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "gamma", None) is not None:
        overrides["gamma"] = args.gamma
    if getattr(args, "scheme", None) is not None:
        overrides["solver"] = {"scheme": args.scheme}
    if getattr(args, "seed", None) is not None:
        overrides["simulate"] = {"seed": args.seed}
        overrides["bootstrap"] = {"seed": args.seed}
    return cfg.override(overrides) if overrides else cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_truncated(args, cfg: RunConfig) -> ObservationSet:
    if not args.data:
        raise ValidationError("this subcommand requires --data PATH")
    obs = load_observations_csv(args.data)
    tr = cfg.data["truncation"]
    return truncate_observations(obs, threshold=float(tr["threshold"]),
                                 t_end=float(tr["t_end"]))


def _fit_on(obs, cfg: RunConfig, mask=None):
    p = cfg.parameters()
    return fit(obs, p, mask or cfg.mask(), cfg.gamma, cfg.optimizer(),
               mesh=cfg.mesh_spec(), settings=cfg.solver_settings())


def _residual_tables(out, obs, model_values, gamma):
    series = residuals(obs, model_values, gamma)
    _write_table(out / "residuals_vs_time.csv", "t,r", [series.t, series.r])
    _write_table(out / "residuals_vs_model.csv", "m_model,r",
                 [series.model, series.r])
    return series


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    sim = cfg.data["simulate"]
    truth = cfg.parameters()
    t_grid = np.linspace(float(sim["t_start"]), float(sim["t_end"]),
                         int(sim["n_points"]))
    if t_grid[0] == 0.0 and cfg.gamma > 0.0:
        t_grid = t_grid[1:]          # m(0) = 0 cannot carry relative noise
    obs = simulate_observations(truth, t_grid, cfg.gamma,
                                float(sim["sigma"]), int(sim["seed"]),
                                mesh=cfg.mesh_spec(),
                                settings=cfg.solver_settings())
    save_observations_csv(obs, out / "data.csv")
    _write_json(out / "provenance.json", {
        "truth": truth.to_dict(),
        "seed": int(sim["seed"]),
        "gamma": cfg.gamma,
        "sigma": float(sim["sigma"]),
        "config": cfg.to_dict(),
    })
    print(f"simulate: wrote {obs.n} points to {out / 'data.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    obs = _load_truncated(args, cfg)
    result = _fit_on(obs, cfg)
    _write_json(out / "fit_report.json",
                _report(cfg, args.data, json.loads(result.to_json())))
    _write_table(out / "fit_overlay.csv", "t,y,m_model",
                 [obs.t, obs.y, result.model_values])
    _residual_tables(out, obs, result.model_values, cfg.gamma)
    print(f"fit: J={result.cost:.10g} status={result.status} "
          f"({result.trace.evaluations} evaluations)")
    return EXIT_OK


def cmd_residuals(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    obs = _load_truncated(args, cfg)
    model = observable(cfg.parameters(), obs.t, cfg.mesh_spec(),
                       cfg.solver_settings())
    series = _residual_tables(out, obs, model, cfg.gamma)
    diag = residual_diagnostics(series)
    _write_json(out / "residual_report.json", _report(cfg, args.data, {
        "lag1_autocorr": diag.lag1_autocorr,
        "fan_corr": diag.fan_corr,
        "mean": diag.mean,
        "variance": diag.variance,
        "zero_variance": diag.zero_variance,
        "n": int(series.r.size),
        "excluded": list(series.excluded),
    }))
    print(f"residuals: lag1={diag.lag1_autocorr:.4f} fan={diag.fan_corr:.4f}")
    return EXIT_OK


def cmd_gamma_scan(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    obs = _load_truncated(args, cfg)
    table = gamma_scan(obs, cfg.parameters(), cfg.mask(),
                       cfg.data["gamma_scan"], mesh=cfg.mesh_spec(),
                       settings=cfg.solver_settings(),
                       opt_config=cfg.optimizer())
    _write_json(out / "gamma_scan.json", _report(cfg, args.data, table))
    with open(out / "gamma_scan.csv", "w", encoding="utf-8") as fh:
        fh.write("gamma,status,cost,lag1_autocorr,fan_corr\n")
        for row in table["rows"]:
            fh.write(f"{row['gamma']},{row.get('status')},"
                     f"{row.get('cost', '')},{row.get('lag1_autocorr', '')},"
                     f"{row.get('fan_corr', '')}\n")
    print(f"gamma-scan: recommended gamma = {table['recommended_gamma']}")
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    obs = _load_truncated(args, cfg)
    result = _fit_on(obs, cfg)
    unc = cfg.data["uncertainty"]
    report = evaluate_uncertainty(obs, result.theta, result.mask, cfg.gamma,
                                  cfg.fd_config(), float(unc["level"]),
                                  float(unc["cond_limit"]),
                                  mesh=cfg.mesh_spec(),
                                  settings=cfg.solver_settings())
    _write_json(out / "uncertainty_report.json",
                _report(cfg, args.data, json.loads(report.to_json())))
    if report.invertible:
        theta_hat = result.theta.values_for(report.free_names)
        _write_table(out / "ci_table.csv", "parameter_index,estimate,se,lower,upper",
                     [np.arange(len(theta_hat)), theta_hat, report.se,
                      report.ci[:, 0], report.ci[:, 1]])
    if unc["dump_matrices"]:
        np.savetxt(out / "sensitivity.csv", report.chi, delimiter=",")
        np.savetxt(out / "fisher.csv", report.fisher, delimiter=",")
    state = "ok" if report.invertible else "refused (ill-conditioned)"
    print(f"uncertainty: cond={report.cond:.3e} SE {state}")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    obs = _load_truncated(args, cfg)
    base = _fit_on(obs, cfg)
    if base.status != "converged":
        raise FitFailureError("base fit did not converge; cannot bootstrap")
    bs = cfg.data["bootstrap"]
    result = bootstrap_estimate(obs, base, int(bs["replicates"]), cfg.gamma,
                                int(bs["seed"]), cfg.optimizer(),
                                mesh=cfg.mesh_spec(),
                                settings=cfg.solver_settings(),
                                percentile_levels=tuple(bs["percentiles"]))
    _write_json(out / "bootstrap_report.json",
                _report(cfg, args.data, json.loads(result.to_json())))
    result.samples_csv(out / "bootstrap_samples.csv")
    for j, name in enumerate(result.free_names):
        counts, edges = np.histogram(result.samples[:, j], bins=30)
        _write_table(out / f"bootstrap_hist_{name}.csv",
                     "bin_left,bin_right,count",
                     [edges[:-1], edges[1:], counts])
    print(f"bootstrap: {result.converged_count}/{result.replicates} replicates, "
          f"SE = {np.array2string(result.se, precision=6)}")
    return EXIT_OK


_THRESHOLD_TABLE = ((0.25, "75%"), (0.10, "90%"), (0.05, "95%"),
                    (0.01, "99%"), (0.001, "99.9%"))


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    comp = cfg.data["compare"]
    costs = comp.get("costs")
    if costs:
        report = report_from_costs(float(costs["j_restricted"]),
                                   float(costs["j_full"]),
                                   int(costs["n"]),
                                   int(costs.get("df", 1)),
                                   float(comp["alpha"]))
        data_path = None
    else:
        obs = _load_truncated(args, cfg)
        spec = NestedSpec(full=FreeMask.from_names(comp["full_free"]),
                          restricted=FreeMask.from_names(comp["restricted_free"]))
        report = compare_nested(obs, spec, cfg.parameters(), cfg.gamma,
                                float(comp["alpha"]), cfg.optimizer(),
                                mesh=cfg.mesh_spec(),
                                settings=cfg.solver_settings())
        data_path = args.data
    _write_json(out / "comparison_report.json",
                _report(cfg, data_path, json.loads(report.to_json())))
    from .comparison import chi_square_threshold
    lines = ["alpha  threshold  confidence"]
    for alpha, label in _THRESHOLD_TABLE:
        lines.append(f"{alpha:<6g} {chi_square_threshold(alpha, report.df):9.3f}"
                     f"  {label}")
    lines.append("")
    lines.append(f"statistic = {report.statistic:.6g} (df={report.df}), "
                 f"p = {report.p_value:.6g}, verdict: {report.verdict} "
                 f"at alpha = {report.alpha}")
    (out / "comparison_table.txt").write_text("\n".join(lines) + "\n",
                                              encoding="utf-8")
    print(f"compare: U={report.statistic:.6g} p={report.p_value:.4g} "
          f"-> {report.verdict}")
    return EXIT_OK


def cmd_forward(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    sim = cfg.data["simulate"]
    p = cfg.parameters()
    t_grid = np.linspace(float(sim["t_start"]), float(sim["t_end"]),
                         int(sim["n_points"]))
    mesh = resolve_mesh(cfg.mesh_spec(), p)
    traj = solve_forward(p, mesh, cfg.solver_settings().scheme, t_grid,
                         cfg.solver_settings())
    traj.to_csv(out / "trajectory.csv")
    _write_json(out / "trajectory_meta.json",
                _report(cfg, None, json.loads(traj.to_json())))
    print(f"forward: {traj.n_steps} steps, m(end)={traj.m[-1]:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aggrebench",
        description="Polymerization kinetics workbench: simulation, GLS "
                    "fitting, uncertainty, bootstrap, and model comparison.",
        epilog="AGGRE_THREADS caps internal parallelism.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": (cmd_simulate, "generate synthetic observations"),
        "forward": (cmd_forward, "run one forward solve and dump the trajectory"),
        "fit": (cmd_fit, "estimate free parameters from data"),
        "residuals": (cmd_residuals, "residual tables and diagnostics at the "
                                     "configured parameters"),
        "gamma-scan": (cmd_gamma_scan, "scan weighting exponents"),
        "uncertainty": (cmd_uncertainty, "asymptotic standard errors and CIs"),
        "bootstrap": (cmd_bootstrap, "residual bootstrap distribution"),
        "compare": (cmd_compare, "nested-model significance test"),
    }
    for name, (func, help_text) in commands.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--data", help="input CSV (t,m)")
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--seed", type=int, help="override random seed")
        sp.add_argument("--gamma", type=float, help="override weighting exponent")
        sp.add_argument("--scheme", choices=("upwind", "lax_wendroff",
                                             "flux_limiter"),
                        help="override transport scheme")
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailureError, StepBudgetError, FitFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AggrebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
