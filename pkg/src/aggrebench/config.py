"""Run configuration: one JSON document that fully determines a run.

Defaults are filled in and written back into every report, so the exact
settings behind any output are never ambiguous.
"""
from __future__ import annotations

import copy
import json

from .benchmark import demo_parameters
from .errors import ValidationError
from .estimator import NelderMeadConfig
from .forward import SolverSettings
from .model import FreeMask, MeshSpec, ModelParameters
from .uncertainty import FiniteDifferenceConfig

_DEFAULTS = {
    "parameters": demo_parameters().to_dict(),
    "free": ["kI_plus", "kI_minus", "koff_N"],
    "gamma": 0.6,
    "mesh": {"N0": 50, "q": 0.01, "x_max_factor": 4.0},
    "solver": {"scheme": "upwind", "safety": 0.9, "max_steps": 5_000_000,
               "vstar_tol": 1e-9},
    "truncation": {"threshold": 0.12, "t_end": 8.0},
    "optimizer": {"max_iter": 2000, "cost_tol": 1e-10, "simplex_tol": 1e-8,
                  "restarts": 2, "init_step": 0.05},
    "simulate": {"t_start": 0.0, "t_end": 8.0, "n_points": 750,
                 "sigma": 0.0025, "seed": 0},
    "bootstrap": {"replicates": 1000, "seed": 0, "percentiles": [2.5, 97.5]},
    "compare": {"restricted_free": ["kI_plus", "kI_minus"],
                "full_free": ["kI_plus", "kI_minus", "koff_N"],
                "alpha": 0.01, "costs": None},
    "uncertainty": {"level": 0.95, "cond_limit": 1e12, "fd_rel_step": 1e-4,
                    "dump_matrices": False},
    "gamma_scan": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ValidationError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


class RunConfig:
    """Validated view over the configuration document."""

    def __init__(self, overrides: dict | None = None):
        self.data = _merge(_DEFAULTS, overrides or {})

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"config {path} must be a JSON object")
        return cls(raw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def override(self, overrides: dict) -> "RunConfig":
        merged = RunConfig.__new__(RunConfig)
        merged.data = _merge(self.data, overrides)
        return merged

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, **kwargs)

    # typed accessors -----------------------------------------------------

    def parameters(self) -> ModelParameters:
        return ModelParameters.from_dict(self.data["parameters"])

    def mask(self) -> FreeMask:
        return FreeMask.from_names(self.data["free"])

    def mesh_spec(self) -> MeshSpec:
        m = self.data["mesh"]
        return MeshSpec(N0=int(m["N0"]), q=float(m["q"]),
                        x_max_factor=float(m["x_max_factor"]))

    def solver_settings(self) -> SolverSettings:
        s = self.data["solver"]
        return SolverSettings(scheme=s["scheme"], safety=float(s["safety"]),
                              max_steps=int(s["max_steps"]),
                              vstar_tol=float(s["vstar_tol"]))

    def optimizer(self) -> NelderMeadConfig:
        o = self.data["optimizer"]
        return NelderMeadConfig(max_iter=int(o["max_iter"]),
                                cost_tol=float(o["cost_tol"]),
                                simplex_tol=float(o["simplex_tol"]),
                                restarts=int(o["restarts"]),
                                init_step=float(o["init_step"]))

    def fd_config(self) -> FiniteDifferenceConfig:
        return FiniteDifferenceConfig(
            rel_step=float(self.data["uncertainty"]["fd_rel_step"]))

    @property
    def gamma(self) -> float:
        return float(self.data["gamma"])
