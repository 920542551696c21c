#!/usr/bin/env python3
"""Weighting-exponent scan: which error model do the residuals support?

Generates data under a known exponent, refits under a ladder of candidate
exponents, and tabulates the residual diagnostics per candidate.  The
recommended exponent should track the generating one.
"""
from __future__ import annotations

import argparse
import warnings
from pathlib import Path

import numpy as np

from aggrebench import (
    FreeMask,
    NelderMeadConfig,
    ObservationSet,
    SolverSettings,
    fast_benchmark,
    fast_benchmark_mesh,
    gamma_scan,
    observable,
)

warnings.filterwarnings("ignore", message=".*truncated.*")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--true-gamma", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--candidates", type=float, nargs="+",
                    default=[0.0, 0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--out", default="outputs/gamma_scan")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    truth = fast_benchmark()
    mesh = fast_benchmark_mesh(truth)
    settings = SolverSettings(land_exactly=True)

    # sample both tails of the curve so the fan diagnostic has leverage
    t = np.concatenate([np.linspace(0.02, 0.16, 150),
                        np.linspace(2.0, 4.0, 150)])
    m_true = observable(truth, t, mesh, settings)
    rng = np.random.default_rng(args.seed)
    y = m_true + m_true ** args.true_gamma * rng.normal(
        0.0, args.sigma, m_true.size)
    obs = ObservationSet(t=t, y=y)

    table = gamma_scan(obs, truth.replace(kI_plus=2.16, kI_minus=10.927),
                       FreeMask.from_names(["kI_plus", "kI_minus"]),
                       args.candidates, mesh=mesh, settings=settings,
                       opt_config=NelderMeadConfig(max_iter=120, restarts=0,
                                                   init_step=0.02))
    print(f"{'gamma':>6} {'cost':>12} {'|fan corr|':>11} {'lag1':>8}")
    for row in table["rows"]:
        if row.get("status") == "failed":
            print(f"{row['gamma']:>6} {'failed':>12}")
            continue
        print(f"{row['gamma']:>6} {row['cost']:>12.4e} "
              f"{abs(row['fan_corr']):>11.4f} {row['lag1_autocorr']:>8.4f}")
    print(f"generating exponent: {args.true_gamma}, "
          f"recommended: {table['recommended_gamma']}")
    import json
    (out / "scan.json").write_text(json.dumps(table, indent=2))
    print(f"wrote {out}/scan.json")


if __name__ == "__main__":
    main()
