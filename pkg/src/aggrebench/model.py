"""Kinetic parameters, the piecewise-linear polymerization rate profile, and
the geometric size mesh.

The aggregation network has three reaction channels: monomer/conformer
exchange (kI_plus, kI_minus), nucleation of the smallest stable aggregate of
``i0`` conformers (kon_N, koff_N), and size-dependent elongation by conformer
addition at rate ``kon(x)``.  The elongation rate is represented by a
continuous trapezoid: a linear ramp from ``kon_min`` at the nucleus size up to
``kon_max`` at ``x1*i_max``, a plateau until ``x2*i_max``, a linear descent
back to ``kon_min`` at ``i_max``, and the floor value beyond.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

# Names of the nine estimable rate/shape parameters, in canonical order.
ESTIMABLE = (
    "kI_plus",
    "kI_minus",
    "kon_N",
    "koff_N",
    "kon_min",
    "kon_max",
    "x1",
    "x2",
    "i_max",
)


@dataclass(frozen=True)
class ModelParameters:
    """The nine estimable rates plus the structural constants.

    Units: time in hours, concentration in micromol.  ``i0`` is the nucleus
    size in monomer units and ``c0`` the initial monomer concentration; both
    are structural (never estimated).
    """

    kI_plus: float
    kI_minus: float
    kon_N: float
    koff_N: float
    kon_min: float
    kon_max: float
    x1: float
    x2: float
    i_max: float
    i0: int = 2
    c0: float = 200.0

    def replace(self, **changes) -> "ModelParameters":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Flat mapping with exactly the field names (JSON interchange form)."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParameters":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown parameter fields: {sorted(unknown)}")
        return cls(**d)

    def values_for(self, names: Sequence[str]) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=float)

    def with_values(self, names: Sequence[str], values: Iterable[float]) -> "ModelParameters":
        return replace(self, **{n: float(v) for n, v in zip(names, values)})


@dataclass(frozen=True)
class FreeMask:
    """Boolean flags over the nine estimable parameters.

    Parameters with a False flag are held at their ``ModelParameters`` values
    during fitting.  At least one flag must be set.
    """

    flags: tuple = field(default=(True,) * 9)

    def __post_init__(self):
        if len(self.flags) != len(ESTIMABLE):
            raise ValidationError(
                f"mask needs {len(ESTIMABLE)} flags, got {len(self.flags)}"
            )
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))
        if self.count == 0:
            raise ValidationError("mask must free at least one parameter")

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FreeMask":
        wanted = set(names)
        unknown = wanted - set(ESTIMABLE)
        if unknown:
            raise ValidationError(f"unknown parameter names: {sorted(unknown)}")
        return cls(tuple(n in wanted for n in ESTIMABLE))

    @property
    def count(self) -> int:
        return sum(self.flags)

    @property
    def free_names(self) -> tuple:
        return tuple(n for n, f in zip(ESTIMABLE, self.flags) if f)

    def __contains__(self, name: str) -> bool:
        return name in self.free_names


def parameter_violations(p: ModelParameters) -> list:
    """List every violated parameter invariant (empty when p is valid)."""
    bad = []
    for name in ("kI_plus", "kI_minus", "koff_N", "kon_min", "kon_max"):
        v = getattr(p, name)
        if not np.isfinite(v) or v <= 0.0:
            bad.append(f"positive rate violated: {name}={v!r}")
    # kon_N = 0 switches nucleation off entirely, a meaningful degenerate case
    if not np.isfinite(p.kon_N) or p.kon_N < 0.0:
        bad.append(f"nonnegative rate violated: kon_N={p.kon_N!r}")
    if not (0.0 < p.x1 < 1.0):
        bad.append(f"x1 in (0,1) violated: x1={p.x1!r}")
    if not (0.0 < p.x2 < 1.0):
        bad.append(f"x2 in (0,1) violated: x2={p.x2!r}")
    if not (p.x1 < p.x2):
        bad.append(f"x1 < x2 violated: x1={p.x1!r}, x2={p.x2!r}")
    if p.i0 < 2:
        bad.append(f"i0 >= 2 violated: i0={p.i0!r}")
    if not np.isfinite(p.i_max) or p.i_max <= p.i0:
        bad.append(f"i_max > i0 violated: i_max={p.i_max!r}")
    elif p.x1 * p.i_max <= p.i0:
        bad.append(
            f"ramp end above nucleus violated: x1*i_max={p.x1 * p.i_max!r} <= i0={p.i0}"
        )
    if not np.isfinite(p.c0) or p.c0 <= 0.0:
        bad.append(f"positive c0 violated: c0={p.c0!r}")
    if p.kon_min > p.kon_max:
        bad.append(f"kon_min <= kon_max violated: {p.kon_min!r} > {p.kon_max!r}")
    return bad


def validate_parameters(p: ModelParameters):
    """Return ``p`` unchanged when every invariant holds, otherwise the list
    of violation messages.  Never raises."""
    bad = parameter_violations(p)
    return p if not bad else bad


def require_valid(p: ModelParameters) -> ModelParameters:
    bad = parameter_violations(p)
    if bad:
        raise ValidationError("invalid parameters: " + "; ".join(bad), bad)
    return p


def kon_eval(x, p: ModelParameters):
    """Evaluate the elongation-rate profile ``kon`` at size ``x``.

    Accepts a scalar or array and returns the matching shape.  The profile is
    continuous, bounded by [kon_min, kon_max], and equal to kon_min for every
    size beyond i_max.  Sizes below the nucleus clamp to the floor value.
    """
    require_valid(p)
    x = np.asarray(x, dtype=float)
    b1 = p.x1 * p.i_max
    b2 = p.x2 * p.i_max
    span = p.kon_max - p.kon_min
    up = p.kon_min + span * (x - p.i0) / (b1 - p.i0)
    down = p.kon_max - span * (x - b2) / (p.i_max - b2)
    out = np.select(
        [x <= p.i0, x < b1, x <= b2, x < p.i_max],
        [p.kon_min, up, p.kon_max, down],
        default=p.kon_min,
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Mesh:
    """Geometric size grid for the transport region ``[N0, >= x_max]``.

    Edges satisfy ``x_{j+1} = x_j / (1 - q)``, so cell widths obey
    ``dx_{j-1}/dx_j = 1 - q`` exactly and the grid refines toward small
    polymer sizes.
    """

    N0: int
    x_max: float
    q: float
    edges: np.ndarray
    centers: np.ndarray
    widths: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.widths.size


def build_mesh(N0: int, x_max: float, q: float) -> Mesh:
    """Construct the geometric mesh from ``N0`` up to at least ``x_max``.

    The cell count is ``ceil(log(x_max/N0) / log(1/(1-q)))``; the final edge
    may overshoot ``x_max``.
    """
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q in (0,1) violated: q={q!r}")
    if x_max <= N0:
        raise ValidationError(f"x_max > N0 violated: x_max={x_max!r}, N0={N0!r}")
    if N0 <= 0:
        raise ValidationError(f"positive N0 violated: N0={N0!r}")
    ratio = 1.0 / (1.0 - q)
    n = int(np.ceil(np.log(x_max / N0) / np.log(ratio) - 1e-12))
    n = max(n, 1)
    edges = float(N0) * ratio ** np.arange(n + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    for arr in (edges, centers, widths):
        arr.flags.writeable = False
    return Mesh(N0=int(N0), x_max=float(x_max), q=float(q),
                edges=edges, centers=centers, widths=widths)


def default_mesh(p: ModelParameters, N0: int = 50, q: float = 0.01,
                 x_max_factor: float = 4.0) -> Mesh:
    """Default grid: starts at size 50, 1% relative spacing, extends to
    4*i_max so the plateau and descent of kon are fully resolved."""
    return build_mesh(N0, x_max_factor * p.i_max, q)


@dataclass(frozen=True)
class MeshSpec:
    """Recipe for building a mesh from a parameter set.

    Useful when a fit varies ``i_max``: the grid is rebuilt per evaluation
    with the same relative layout.
    """

    N0: int = 50
    q: float = 0.01
    x_max_factor: float = 4.0

    def build(self, p: ModelParameters) -> Mesh:
        return build_mesh(self.N0, self.x_max_factor * p.i_max, self.q)


def resolve_mesh(mesh, p: ModelParameters) -> Mesh:
    """Accept a Mesh, a MeshSpec, or None (standard grid) and return a Mesh."""
    if mesh is None:
        return default_mesh(p)
    if isinstance(mesh, MeshSpec):
        return mesh.build(p)
    return mesh
