"""Core data types: discrete measures, grids, densities, potentials, plans.

All types are immutable after construction (frozen dataclasses over
read-only numpy arrays) and therefore safe to share across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DomainError,
    HyperplaneSupportedError,
    NonzeroBarycenterError,
    ValidationError,
)

__all__ = [
    "DiscreteMeasure",
    "GridSpec",
    "GridDensity",
    "PiecewiseAffinePotential",
    "TransportPlan",
    "SolverOptions",
    "ProblemSpec",
    "ValidationReport",
    "auto_center",
    "validate",
    "default_grid",
    "sphere_surface_measure",
]

PROBLEM_SCHEMA = "qmm-problem-v1"

# Rank decisions on the weighted atom matrix happen at this scale.
HYPERPLANE_SING_VAL_TOL = 1e-10
BARYCENTER_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12
MASS_TOL = 1e-9


def _frozen_array(obj, arr: np.ndarray, name: str) -> None:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    object.__setattr__(obj, name, arr)


def sphere_surface_measure(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure: atoms y_j with weights mu_j."""

    atoms: np.ndarray  # (J, n) coordinates
    weights: np.ndarray  # (J,) nonnegative, summing to 1

    def __post_init__(self):
        atoms = np.atleast_2d(np.array(self.atoms, dtype=float))
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.shape[0]:
            raise ValidationError(
                f"{atoms.shape[0]} atoms but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(atoms)):
            raise ValidationError("atom coordinates must be finite")
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        total = float(np.sum(weights))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {total!r}, not 1")
        _frozen_array(self, atoms, "atoms")
        _frozen_array(self, weights, "weights")

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[0]

    def barycenter(self) -> np.ndarray:
        return self.weights @ self.atoms

    def first_moment(self) -> float:
        """M1 = integral of |y| d mu."""
        return float(self.weights @ np.linalg.norm(self.atoms, axis=1))

    def translated(self, shift: Sequence[float]) -> "DiscreteMeasure":
        return DiscreteMeasure(self.atoms + np.asarray(shift, dtype=float), self.weights)

    def to_json_dict(self) -> dict:
        rows = [list(map(float, a)) + [float(w)] for a, w in zip(self.atoms, self.weights)]
        return {"atoms": rows}

    @classmethod
    def from_json_dict(cls, data: dict) -> "DiscreteMeasure":
        _expect_keys(data, {"atoms"}, "DiscreteMeasure")
        rows = np.atleast_2d(np.array(data["atoms"], dtype=float))
        if rows.shape[1] < 2:
            raise ValidationError("each atom row needs coordinates plus a weight")
        return cls(rows[:, :-1], rows[:, -1])


def auto_center(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Translate a measure so its barycenter is 0 (idempotent)."""
    return DiscreteMeasure(mu.atoms - mu.barycenter(), mu.weights)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box partitioned into equal cells (midpoint quadrature)."""

    center: np.ndarray  # (n,) box center
    half_width: np.ndarray  # (n,) half-width R per axis
    cells_per_axis: tuple  # (n,) cell counts

    def __post_init__(self):
        center = np.array(self.center, dtype=float).ravel()
        half_width = np.array(self.half_width, dtype=float).ravel()
        if half_width.shape != center.shape:
            raise ValidationError("center and half_width must share a length")
        if np.any(half_width <= 0) or not np.all(np.isfinite(half_width)):
            raise ValidationError("half widths must be positive and finite")
        cells = tuple(int(m) for m in np.atleast_1d(self.cells_per_axis))
        if len(cells) != center.shape[0] or any(m < 1 for m in cells):
            raise ValidationError("cells_per_axis must list a positive count per axis")
        _frozen_array(self, center, "center")
        _frozen_array(self, half_width, "half_width")
        object.__setattr__(self, "cells_per_axis", cells)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    @property
    def cell_width(self) -> np.ndarray:
        return 2.0 * self.half_width / np.asarray(self.cells_per_axis, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_width))

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    def axis_edges(self, axis: int) -> np.ndarray:
        lo = self.center[axis] - self.half_width[axis]
        hi = self.center[axis] + self.half_width[axis]
        return np.linspace(lo, hi, self.cells_per_axis[axis] + 1)

    def axis_centers(self, axis: int) -> np.ndarray:
        edges = self.axis_edges(axis)
        return 0.5 * (edges[:-1] + edges[1:])

    def centers(self) -> np.ndarray:
        """Cell centers, shape (num_cells, n), C-order over axes."""
        axes = [self.axis_centers(i) for i in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="C") for m in mesh], axis=1)

    def translated(self, shift: Sequence[float]) -> "GridSpec":
        return GridSpec(self.center + np.asarray(shift, dtype=float),
                        self.half_width, self.cells_per_axis)

    def scaled(self, factor: float) -> "GridSpec":
        return GridSpec(self.center, self.half_width * float(factor), self.cells_per_axis)

    def to_json_dict(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "half_width": [float(r) for r in self.half_width],
            "cells_per_axis": list(self.cells_per_axis),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GridSpec":
        _expect_keys(data, {"center", "half_width", "cells_per_axis"}, "GridSpec")
        return cls(np.asarray(data["center"], dtype=float),
                   np.asarray(data["half_width"], dtype=float),
                   tuple(data["cells_per_axis"]))


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-constant density on a grid: one nonnegative value per cell."""

    grid: GridSpec
    values: np.ndarray  # (num_cells,) flat, C-order matching GridSpec.centers()

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.shape[0] != self.grid.num_cells:
            raise ValidationError(
                f"expected {self.grid.num_cells} cell values, got {values.shape[0]}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("density values must be finite")
        if np.any(values < 0):
            raise ValidationError("density values must be nonnegative")
        _frozen_array(self, values, "values")

    def mass(self) -> float:
        return float(np.sum(self.values)) * self.grid.cell_volume

    def normalized(self) -> "GridDensity":
        total = self.mass()
        if total <= 0:
            raise ValidationError("cannot normalize a zero density")
        return GridDensity(self.grid, self.values / total)

    def require_normalized(self, tol: float = MASS_TOL) -> None:
        if abs(self.mass() - 1.0) > tol:
            raise ValidationError(f"grid mass {self.mass()!r} is not 1 within {tol}")

    def first_moment(self) -> float:
        """M1 = integral of |x| rho(x) dx by midpoint quadrature."""
        r = np.linalg.norm(self.grid.centers(), axis=1)
        return float(r @ self.values) * self.grid.cell_volume

    def barycenter(self) -> np.ndarray:
        return (self.values @ self.grid.centers()) * self.grid.cell_volume

    def translated(self, shift: Sequence[float]) -> "GridDensity":
        return GridDensity(self.grid.translated(shift), self.values)

    def to_csv(self) -> str:
        """One row per cell (center coords, value); grid spec in the header."""
        buf = io.StringIO()
        n = self.grid.dimension
        buf.write("# qmm-grid-density-v1\n")
        buf.write("# grid=" + json.dumps(self.grid.to_json_dict()) + "\n")
        buf.write(",".join(f"x{i + 1}" for i in range(n)) + ",value\n")
        centers = self.grid.centers()
        for row, val in zip(centers, self.values):
            buf.write(",".join(repr(float(c)) for c in row) + f",{repr(float(val))}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridDensity":
        lines = text.strip().splitlines()
        if len(lines) < 3 or not lines[0].startswith("# qmm-grid-density-v1"):
            raise ValidationError("not a grid density CSV")
        grid = GridSpec.from_json_dict(json.loads(lines[1].split("=", 1)[1]))
        values = np.array([float(ln.rsplit(",", 1)[1]) for ln in lines[3:]])
        return cls(grid, values)


@dataclass(frozen=True)
class PiecewiseAffinePotential:
    """Convex potential u(x) = max_j (x . y_j - v_j) with gauge constant c.

    The slopes y_j are shared with the target measure's atoms; v_j are the
    dual values at the atoms.  phi = u - c is the positive convex factor of
    the solved density rho = phi^{-(n+q)}.
    """

    slopes: np.ndarray  # (J, n) atoms y_j
    offsets: np.ndarray  # (J,) dual values v_j
    gauge: float  # constant c with u > c after a solve

    def __post_init__(self):
        slopes = np.atleast_2d(np.array(self.slopes, dtype=float))
        offsets = np.array(self.offsets, dtype=float).ravel()
        if slopes.shape[0] != offsets.shape[0]:
            raise ValidationError("one offset per slope is required")
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(offsets))):
            raise ValidationError("potential parameters must be finite")
        _frozen_array(self, slopes, "slopes")
        _frozen_array(self, offsets, "offsets")
        object.__setattr__(self, "gauge", float(self.gauge))

    @property
    def dimension(self) -> int:
        return self.slopes.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = x @ self.slopes.T - self.offsets
        return np.max(vals, axis=1)

    def argmax(self, x) -> np.ndarray:
        """Index of the active affine piece (ties: lowest index)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = x @ self.slopes.T - self.offsets
        return np.argmax(vals, axis=1)

    def phi(self, x) -> np.ndarray:
        return self(x) - self.gauge

    def canonical(self, mu: DiscreteMeasure) -> "PiecewiseAffinePotential":
        """Fix the gauge freedom (u + k, v - k) by sum(mu_j v_j) = 0.

        phi = u - c is invariant: the shift moves u and c together.
        """
        k = float(mu.weights @ self.offsets)
        return PiecewiseAffinePotential(self.slopes, self.offsets - k, self.gauge + k)

    def to_json_dict(self) -> dict:
        return {
            "slopes": [list(map(float, row)) for row in self.slopes],
            "offsets": [float(v) for v in self.offsets],
            "gauge": float(self.gauge),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PiecewiseAffinePotential":
        _expect_keys(data, {"slopes", "offsets", "gauge"}, "PiecewiseAffinePotential")
        return cls(np.asarray(data["slopes"], dtype=float),
                   np.asarray(data["offsets"], dtype=float), data["gauge"])


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling between two discrete measures."""

    source_index: np.ndarray  # (K,) int indices into the source atoms
    target_index: np.ndarray  # (K,) int indices into the target atoms
    mass: np.ndarray  # (K,) nonnegative masses

    def __post_init__(self):
        si = np.array(self.source_index, dtype=int).ravel()
        ti = np.array(self.target_index, dtype=int).ravel()
        m = np.array(self.mass, dtype=float).ravel()
        if not (si.shape == ti.shape == m.shape):
            raise ValidationError("plan arrays must share a length")
        if np.any(m < 0):
            raise ValidationError("plan masses must be nonnegative")
        for name, arr in (("source_index", si), ("target_index", ti)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        _frozen_array(self, m, "mass")

    def total_mass(self) -> float:
        return float(np.sum(self.mass))

    def marginals(self, num_source: int, num_target: int):
        row = np.bincount(self.source_index, weights=self.mass, minlength=num_source)
        col = np.bincount(self.target_index, weights=self.mass, minlength=num_target)
        return row, col

    def validate_against(self, source: DiscreteMeasure, target: DiscreteMeasure,
                         tol: float = 1e-10) -> None:
        row, col = self.marginals(source.num_atoms, target.num_atoms)
        if np.max(np.abs(row - source.weights)) > tol:
            raise ValidationError("plan row sums do not match the source weights")
        if np.max(np.abs(col - target.weights)) > tol:
            raise ValidationError("plan column sums do not match the target weights")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,mass\n")
        for i, j, m in zip(self.source_index, self.target_index, self.mass):
            buf.write(f"{int(i)},{int(j)},{repr(float(m))}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances, caps and damping controls for the density solver."""

    tolerance: float = 1e-4  # optimality residual, relative to 1 + |c|
    pushforward_tolerance: float = 1e-3  # total-variation error of the pushforward
    max_outer_iterations: int = 200
    max_dual_iterations: int = 5000
    marginal_tolerance: float = 1e-6  # dual gradient cap, relative to max mu_j
    gap_tolerance: float = 1e-5  # accepted primal/dual gap
    damping_floor: float = 1e-7  # smallest accepted backtracking step
    tail_fraction: float = 1e-3  # mass allowed beyond the default box

    def to_json_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "pushforward_tolerance": self.pushforward_tolerance,
            "max_outer_iterations": self.max_outer_iterations,
            "max_dual_iterations": self.max_dual_iterations,
            "marginal_tolerance": self.marginal_tolerance,
            "gap_tolerance": self.gap_tolerance,
            "damping_floor": self.damping_floor,
            "tail_fraction": self.tail_fraction,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SolverOptions":
        _expect_keys(data, set(cls().to_json_dict()), "SolverOptions", allow_missing=True)
        return cls(**data)


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem description: dimension, exponent, target, grid, options."""

    dimension: int
    exponent_q: float
    target: DiscreteMeasure
    grid: Optional[GridSpec] = None  # None: sized from the target's support
    options: SolverOptions = field(default_factory=SolverOptions)
    auto_center: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError("dimension must be a positive integer")
        if not self.exponent_q > 0:
            raise DomainError("exponent q must be positive")
        if self.target.dimension != self.dimension:
            raise ValidationError("target atoms do not match the stated dimension")
        if self.grid is not None and self.grid.dimension != self.dimension:
            raise ValidationError("grid does not match the stated dimension")

    @property
    def alpha(self) -> float:
        """alpha = 1 - 1/(n+q), always in (0, 1)."""
        return 1.0 - 1.0 / (self.dimension + self.exponent_q)

    @property
    def q_outside_existence_theory(self) -> bool:
        return self.exponent_q <= 1.0

    def to_json_dict(self) -> dict:
        return {
            "schema": PROBLEM_SCHEMA,
            "dimension": self.dimension,
            "exponent_q": float(self.exponent_q),
            "target": self.target.to_json_dict(),
            "grid": None if self.grid is None else self.grid.to_json_dict(),
            "options": self.options.to_json_dict(),
            "auto_center": self.auto_center,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ProblemSpec":
        _expect_keys(data, {"schema", "dimension", "exponent_q", "target", "grid",
                            "options", "auto_center"}, "ProblemSpec", allow_missing=True)
        for required in ("dimension", "exponent_q", "target"):
            if required not in data:
                raise ValidationError(f"ProblemSpec: missing field {required!r}")
        if data.get("schema", PROBLEM_SCHEMA) != PROBLEM_SCHEMA:
            raise ValidationError(f"unsupported problem schema {data.get('schema')!r}")
        grid = data.get("grid")
        return cls(
            dimension=int(data["dimension"]),
            exponent_q=float(data["exponent_q"]),
            target=DiscreteMeasure.from_json_dict(data["target"]),
            grid=None if grid is None else GridSpec.from_json_dict(grid),
            options=SolverOptions.from_json_dict(data.get("options", {})),
            auto_center=bool(data.get("auto_center", True)),
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the standing-assumption checks on a problem."""

    barycenter_norm: float
    smallest_singular_value: float
    hyperplane_supported: bool
    q_warning: bool  # True when q <= 1 (outside the existence window)
    c_mu: float
    auto_centered: bool


def _weighted_singular_values(mu: DiscreteMeasure) -> np.ndarray:
    centered = mu.atoms - mu.barycenter()
    weighted = centered * np.sqrt(mu.weights)[:, None]
    return np.linalg.svd(weighted, compute_uv=False)


def validate(spec: ProblemSpec) -> ValidationReport:
    """Check the standing assumptions: centered, not hyperplane-supported.

    Raises HyperplaneSupportedError when the weighted centered atoms have
    rank < n, and NonzeroBarycenterError when the barycenter exceeds
    tolerance with auto-centering disabled.
    """
    mu = spec.target
    n = spec.dimension
    bary = mu.barycenter()
    bary_norm = float(np.linalg.norm(bary))

    sing = _weighted_singular_values(mu)
    smallest = float(sing[-1]) if sing.shape[0] >= n else 0.0
    if smallest < HYPERPLANE_SING_VAL_TOL:
        raise HyperplaneSupportedError(
            "target measure is supported on a hyperplane "
            f"(smallest weighted singular value {smallest:.3e})"
        )
    if not spec.auto_center and bary_norm > BARYCENTER_TOL:
        raise NonzeroBarycenterError(
            f"target barycenter has norm {bary_norm:.3e} and auto-centering is off"
        )

    from .verification import c_mu as _c_mu  # deferred: verification imports this module

    centered = auto_center(mu) if spec.auto_center else mu
    return ValidationReport(
        barycenter_norm=bary_norm,
        smallest_singular_value=smallest,
        hyperplane_supported=False,
        q_warning=spec.q_outside_existence_theory,
        c_mu=float(_c_mu(centered)),
        auto_centered=spec.auto_center and bary_norm > 0,
    )


def _support_slope(mu: DiscreteMeasure, directions: int = 4096) -> float:
    """Smallest directional growth rate of max_j x . y_j over unit directions."""
    atoms = mu.atoms
    n = mu.dimension
    if n == 1:
        return float(min(np.max(atoms[:, 0]), np.max(-atoms[:, 0])))
    if n == 2:
        theta = np.linspace(0.0, 2.0 * np.pi, directions, endpoint=False)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        # Fibonacci lattice on the sphere; adequate for a bounding estimate.
        k = np.arange(directions)
        z = 1.0 - 2.0 * (k + 0.5) / directions
        phi = np.pi * (1.0 + math.sqrt(5.0)) * k
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return float(np.min(np.max(dirs @ atoms.T, axis=1)))


def default_grid(mu: DiscreteMeasure, q: float,
                 cells_per_axis: Optional[int] = None,
                 tail_fraction: float = 1e-3) -> GridSpec:
    """Box sized so the tail of rho ~ (s_min |x|)^{-(n+q)} stays below
    ``tail_fraction`` of the mass, with s_min the least support slope."""
    n = mu.dimension
    s_min = _support_slope(mu)
    if s_min <= 0:
        raise ValidationError("target support slope is degenerate; validate the measure")
    omega = sphere_surface_measure(n)
    radius = (omega / (q * tail_fraction * s_min ** (n + q))) ** (1.0 / q)
    if cells_per_axis is None:
        cells_per_axis = 4096 if n == 1 else 256
    return GridSpec(np.zeros(n), np.full(n, radius), (cells_per_axis,) * n)


def _expect_keys(data: dict, allowed: set, where: str, allow_missing: bool = False) -> None:
    if not isinstance(data, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown fields {sorted(unknown)}")
    if not allow_missing:
        missing = allowed - set(data)
        if missing:
            raise ValidationError(f"{where}: missing fields {sorted(missing)}")
