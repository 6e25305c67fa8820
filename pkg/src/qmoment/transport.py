"""Maximal-correlation transport T(rho, mu) = sup over couplings of x.y.

Two routes are provided and kept independent of each other:

* ``lp_max_correlation`` — exact linear programming on discrete-discrete
  instances (with a brute-force vertex enumeration for tiny instances);
* ``semi_discrete_dual`` — minimization of the Kantorovich dual
  G(v) = int max_j (x.y_j - v_j) d rho + sum_j mu_j v_j over the offsets v,
  for a grid density against a discrete target.

The semi-discrete route integrates the piecewise-constant density exactly
along grid rows (regions of the affine maximum are intervals per row), so
the per-atom masses vary continuously in v and the convex model objective
is C^1.  Across a row strip the region boundary is sampled at the strip
midline, a midpoint rule in the secondary axis; in 1D the integration is
exact.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize as sciopt

from .errors import (
    EmptyCellWarning,
    NonconvergenceError,
    SizeExceededError,
    UnsupportedDimensionError,
    ValidationError,
)
from .measures import (
    DiscreteMeasure,
    GridDensity,
    GridSpec,
    PiecewiseAffinePotential,
    SolverOptions,
    TransportPlan,
)

__all__ = [
    "DualSolveResult",
    "lp_max_correlation",
    "enumerate_max_correlation",
    "semi_discrete_dual",
    "eval_T",
    "map_assignment",
    "quantile_correlation_1d",
    "grid_density_to_discrete",
]

LP_VARIABLE_GUARD = 10_000


# ---------------------------------------------------------------------------
# Discrete-discrete oracles
# ---------------------------------------------------------------------------

def lp_max_correlation(rho: DiscreteMeasure, mu: DiscreteMeasure
                       ) -> Tuple[TransportPlan, float]:
    """Exact maximal correlation between two discrete measures.

    Solves max sum_{ij} gamma_ij x_i . y_j over the transportation polytope
    with the HiGHS simplex at tight feasibility tolerances.  Guarded to at
    most ``LP_VARIABLE_GUARD`` variables.
    """
    if rho.dimension != mu.dimension:
        raise ValidationError("measures live in different dimensions")
    ni, nj = rho.num_atoms, mu.num_atoms
    if ni * nj > LP_VARIABLE_GUARD:
        raise SizeExceededError(
            f"{ni}x{nj} exceeds the exact-solve guard of {LP_VARIABLE_GUARD} variables"
        )
    cost = rho.atoms @ mu.atoms.T  # maximize <cost, gamma>

    a_eq = np.zeros((ni + nj - 1, ni * nj))
    for i in range(ni):
        a_eq[i, i * nj:(i + 1) * nj] = 1.0
    for j in range(nj - 1):  # last column constraint is redundant
        a_eq[ni + j, j::nj] = 1.0
    b_eq = np.concatenate([rho.weights, mu.weights[:-1]])

    res = sciopt.linprog(
        c=-cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-9},
    )
    if res.status != 0:
        raise NonconvergenceError(f"LP solver failed: {res.message}")
    gamma = np.maximum(res.x.reshape(ni, nj), 0.0)
    keep = np.argwhere(gamma > 0)
    plan = TransportPlan(keep[:, 0], keep[:, 1], gamma[keep[:, 0], keep[:, 1]])
    plan.validate_against(rho, mu)
    return plan, float(np.sum(gamma * cost))


def _tree_plan(ni: int, nj: int, cells, row: np.ndarray, col: np.ndarray):
    """Masses of the basic solution supported on a spanning tree, or None."""
    deg = {}
    adj = {}
    for (i, j) in cells:
        deg[("r", i)] = deg.get(("r", i), 0) + 1
        deg[("c", j)] = deg.get(("c", j), 0) + 1
        adj.setdefault(("r", i), []).append((i, j))
        adj.setdefault(("c", j), []).append((i, j))
    if len(deg) != ni + nj:
        return None  # not spanning
    remaining_row = row.astype(float).copy()
    remaining_col = col.astype(float).copy()
    alive = set(cells)
    masses = {}
    while alive:
        leaf = None
        for cell in alive:
            i, j = cell
            if deg[("r", i)] == 1:
                leaf, amount = cell, remaining_row[i]
                break
            if deg[("c", j)] == 1:
                leaf, amount = cell, remaining_col[j]
                break
        if leaf is None:
            return None  # a cycle survived
        i, j = leaf
        masses[leaf] = amount
        remaining_row[i] -= amount
        remaining_col[j] -= amount
        deg[("r", i)] -= 1
        deg[("c", j)] -= 1
        alive.remove(leaf)
    if any(m < -1e-12 for m in masses.values()):
        return None
    return masses


def enumerate_max_correlation(rho: DiscreteMeasure, mu: DiscreteMeasure
                              ) -> Tuple[TransportPlan, float]:
    """Brute-force maximum over all vertices of the transportation polytope.

    Vertices are basic solutions supported on spanning trees of the
    bipartite graph; every tree is enumerated, so this is exact but only
    sensible for tiny instances (guarded at 4x4).
    """
    ni, nj = rho.num_atoms, mu.num_atoms
    if ni > 4 or nj > 4:
        raise SizeExceededError("vertex enumeration is guarded at 4x4 instances")
    cost = rho.atoms @ mu.atoms.T
    all_cells = list(itertools.product(range(ni), range(nj)))
    best_value = -np.inf
    best_masses = None
    for cells in itertools.combinations(all_cells, ni + nj - 1):
        masses = _tree_plan(ni, nj, cells, rho.weights, mu.weights)
        if masses is None:
            continue
        value = sum(cost[i, j] * m for (i, j), m in masses.items())
        if value > best_value:
            best_value, best_masses = value, masses
    items = sorted(best_masses.items())
    plan = TransportPlan(
        np.array([i for (i, _), _ in items]),
        np.array([j for (_, j), _ in items]),
        np.array([max(m, 0.0) for _, m in items]),
    )
    return plan, float(best_value)


def grid_density_to_discrete(rho: GridDensity) -> DiscreteMeasure:
    """Collapse a grid density to atoms at cell centers (zero cells dropped)."""
    w = rho.values * rho.grid.cell_volume
    keep = w > 0
    w = w[keep]
    return DiscreteMeasure(rho.grid.centers()[keep], w / np.sum(w))


# ---------------------------------------------------------------------------
# 1D quantile oracle
# ---------------------------------------------------------------------------

class _Quantile1D:
    """Piecewise-affine quantile function of a one-dimensional measure."""

    def __init__(self, measure):
        if isinstance(measure, DiscreteMeasure):
            if measure.dimension != 1:
                raise UnsupportedDimensionError("quantile oracle is 1D only")
            order = np.argsort(measure.atoms[:, 0], kind="stable")
            x = measure.atoms[order, 0]
            w = measure.weights[order]
            self.cum = np.concatenate([[0.0], np.cumsum(w)])
            self.lo = x  # value on (cum[k], cum[k+1]) is x[k]
            self.slope = np.zeros_like(x)
            self.breaks = self.cum
        elif isinstance(measure, GridDensity):
            if measure.grid.dimension != 1:
                raise UnsupportedDimensionError("quantile oracle is 1D only")
            rho = measure.normalized()
            masses = rho.values * rho.grid.cell_volume
            edges = rho.grid.axis_edges(0)
            self.cum = np.concatenate([[0.0], np.cumsum(masses)])
            self.lo = edges[:-1]
            with np.errstate(divide="ignore", invalid="ignore"):
                self.slope = np.where(masses > 0, rho.grid.cell_width[0] / masses, 0.0)
            self.breaks = self.cum
        else:
            raise TypeError("expected DiscreteMeasure or GridDensity")
        self.cum[-1] = 1.0  # guard cumulative rounding

    def eval(self, s: np.ndarray, side: str) -> np.ndarray:
        """Q(s); at mass breakpoints choose the piece on the given side.

        side='right' skips zero-mass pieces forward, side='left' backward,
        giving the correct one-sided limits of the quantile function.
        """
        k = np.searchsorted(self.cum, s, side=side) - 1
        k = np.clip(k, 0, len(self.lo) - 1)
        return self.lo[k] + self.slope[k] * (s - self.cum[k])


def quantile_correlation_1d(rho, mu) -> float:
    """T in 1D as the co-monotone coupling value int_0^1 Q_rho Q_mu ds.

    Exact for discrete measures and piecewise-constant grid densities:
    both quantiles are affine between the merged mass breakpoints, so a
    Simpson rule per piece integrates the quadratic product exactly.
    """
    qr, qm = _Quantile1D(rho), _Quantile1D(mu)
    s = np.unique(np.concatenate([qr.breaks, qm.breaks, [0.0, 1.0]]))
    s = s[(s >= 0.0) & (s <= 1.0)]
    a, b = s[:-1], s[1:]
    mid = 0.5 * (a + b)
    va = qr.eval(a, "right") * qm.eval(a, "right")
    vb = qr.eval(b, "left") * qm.eval(b, "left")
    vm = qr.eval(mid, "left") * qm.eval(mid, "left")
    return float(np.sum((b - a) / 6.0 * (va + 4.0 * vm + vb)))


# ---------------------------------------------------------------------------
# Row-sliced exact integration engine
# ---------------------------------------------------------------------------

class _SlicedGrid:
    """Row-major view of a grid density with per-row prefix integrals."""

    def __init__(self, rho: GridDensity):
        grid = rho.grid
        n = grid.dimension
        if n not in (1, 2):
            raise UnsupportedDimensionError(
                f"semi-discrete transport supports n in {{1, 2}}, got n={n}"
            )
        self.n = n
        self.grid = grid
        self.xe = grid.axis_edges(0)
        self.xc = grid.axis_centers(0)
        self.hx = float(grid.cell_width[0])
        if n == 2:
            self.yr = grid.axis_centers(1)
            self.hy = float(grid.cell_width[1])
            vals = rho.values.reshape(grid.cells_per_axis)  # (m0, m1), x major
            self.rows = np.ascontiguousarray(vals.T)  # (rows=m1, cols=m0)
        else:
            self.yr = np.zeros(1)
            self.hy = 1.0
            self.rows = rho.values.reshape(1, -1)
        nrows, ncols = self.rows.shape
        self.num_rows, self.num_cols = nrows, ncols
        self.cum_mass = np.zeros((nrows, ncols + 1))
        np.cumsum(self.rows * self.hx, axis=1, out=self.cum_mass[:, 1:])
        self.cum_xmass = np.zeros((nrows, ncols + 1))
        np.cumsum(self.rows * self.xc * self.hx, axis=1, out=self.cum_xmass[:, 1:])

    def flat_from_rowcol(self, arr_rc: np.ndarray) -> np.ndarray:
        """Back to the flat C-order (axis 0 slowest) of GridDensity.values."""
        return np.ascontiguousarray(arr_rc.T).ravel(order="C")


class _LineFamily:
    """Atom-induced lines per row, grouped by exactly-equal x-slope."""

    def __init__(self, atoms: np.ndarray):
        atoms = np.atleast_2d(atoms)
        j = atoms.shape[0]
        self.sx = atoms[:, 0].copy()
        self.sy = atoms[:, 1].copy() if atoms.shape[1] > 1 else np.zeros(j)
        self.order = np.lexsort((np.arange(j), self.sx))
        sx_sorted = self.sx[self.order]
        new_group = np.concatenate([[True], np.diff(sx_sorted) > 0])
        self.group_starts = np.flatnonzero(new_group)
        self.group_slopes = sx_sorted[self.group_starts]
        sizes = np.diff(np.append(self.group_starts, j))
        self.group_sizes = sizes
        self.all_singleton = bool(np.all(sizes == 1))
        self.num_groups = len(self.group_starts)
        self.num_atoms = j


@dataclass
class _PieceSet:
    """Intervals of constant active atom, per row, covering the box."""

    row: np.ndarray  # (P,) row index
    atom: np.ndarray  # (P,) original atom index
    t0: np.ndarray  # (P,) left end
    t1: np.ndarray  # (P,) right end


def _row_intercepts(family: _LineFamily, sliced: _SlicedGrid, v: np.ndarray):
    """Per-row intercepts, reduced over equal-slope groups.

    Returns (gb, gidx): group intercepts (R, G) and the winning original
    atom index per group (higher intercept wins, ties to lowest index).
    """
    b = sliced.yr[:, None] * family.sy[None, :] - v[None, :]
    bs = b[:, family.order]
    if family.all_singleton:
        gb = bs
        gidx = np.broadcast_to(family.order, bs.shape)
        return gb, gidx
    nrows = bs.shape[0]
    gb = np.maximum.reduceat(bs, family.group_starts, axis=1)
    gidx = np.empty((nrows, family.num_groups), dtype=int)
    for k, (start, size) in enumerate(zip(family.group_starts, family.group_sizes)):
        if size == 1:
            gidx[:, k] = family.order[start]
        else:
            rel = np.argmax(bs[:, start:start + size], axis=1)
            gidx[:, k] = family.order[start + rel]
    return gb, gidx


def _envelope_pieces(family: _LineFamily, sliced: _SlicedGrid,
                     v: np.ndarray) -> _PieceSet:
    """Upper envelope of the atom lines per row, clipped to the box."""
    gb, gidx = _row_intercepts(family, sliced, v)
    slopes = family.group_slopes
    ngroups = family.num_groups
    xlo, xhi = float(sliced.xe[0]), float(sliced.xe[-1])
    rows_out, atoms_out, t0_out, t1_out = [], [], [], []
    for r in range(sliced.num_rows):
        bi = gb[r]
        stack = []
        bps = []
        for g in range(ngroups):
            t_cross = -np.inf
            while stack:
                top = stack[-1]
                t_cross = (bi[top] - bi[g]) / (slopes[g] - slopes[top])
                if bps and t_cross <= bps[-1]:
                    stack.pop()
                    bps.pop()
                else:
                    break
            if stack:
                stack.append(g)
                bps.append(t_cross)
            else:
                stack.append(g)
        # clip envelope pieces to [xlo, xhi]
        cuts = [xlo] + [min(max(t, xlo), xhi) for t in bps] + [xhi]
        idx_row = gidx[r]
        for piece, g in enumerate(stack):
            a, bnd = cuts[piece], cuts[piece + 1]
            if bnd > a:
                rows_out.append(r)
                atoms_out.append(idx_row[g])
                t0_out.append(a)
                t1_out.append(bnd)
    return _PieceSet(
        np.asarray(rows_out, dtype=int), np.asarray(atoms_out, dtype=int),
        np.asarray(t0_out, dtype=float), np.asarray(t1_out, dtype=float),
    )


def _column_of(sliced: _SlicedGrid, t: np.ndarray) -> np.ndarray:
    k = np.searchsorted(sliced.xe, t, side="right") - 1
    return np.clip(k, 0, sliced.num_cols - 1)


def _piece_masses(sliced: _SlicedGrid, pieces: _PieceSet):
    """rho-mass and first moments of every piece (exact per row)."""
    k0 = _column_of(sliced, pieces.t0)
    k1 = _column_of(sliced, pieces.t1)
    rows = pieces.row
    dens0 = sliced.rows[rows, k0]
    dens1 = sliced.rows[rows, k1]
    fm0 = sliced.cum_mass[rows, k0] + dens0 * (pieces.t0 - sliced.xe[k0])
    fm1 = sliced.cum_mass[rows, k1] + dens1 * (pieces.t1 - sliced.xe[k1])
    fx0 = sliced.cum_xmass[rows, k0] + dens0 * 0.5 * (pieces.t0 ** 2 - sliced.xe[k0] ** 2)
    fx1 = sliced.cum_xmass[rows, k1] + dens1 * 0.5 * (pieces.t1 ** 2 - sliced.xe[k1] ** 2)
    return fm1 - fm0, fx1 - fx0


def _atom_masses(sliced: _SlicedGrid, pieces: _PieceSet, num_atoms: int):
    """Per-atom region mass and first moment (Mx, My) under rho."""
    dm, dmx = _piece_masses(sliced, pieces)
    hy = sliced.hy
    mass = np.bincount(pieces.atom, weights=dm, minlength=num_atoms) * hy
    mx = np.bincount(pieces.atom, weights=dmx, minlength=num_atoms) * hy
    my = np.bincount(pieces.atom, weights=sliced.yr[pieces.row] * dm,
                     minlength=num_atoms) * hy
    return mass, mx, my


def _dual_objective(sliced: _SlicedGrid, family: _LineFamily, mu: DiscreteMeasure,
                    v: np.ndarray):
    """G(v), its gradient mu - mass, and the per-atom masses and moments."""
    pieces = _envelope_pieces(family, sliced, v)
    mass, mx, my = _atom_masses(sliced, pieces, mu.num_atoms)
    atoms = mu.atoms
    u_rho = float(atoms[:, 0] @ mx - v @ mass)
    if sliced.n == 2:
        u_rho += float(atoms[:, 1] @ my)
    value = u_rho + float(mu.weights @ v)
    grad = mu.weights - mass
    return value, grad, mass, mx, my, pieces


def _cell_potential_integrals(sliced: _SlicedGrid, family: _LineFamily,
                              v: np.ndarray, pieces: Optional[_PieceSet] = None
                              ) -> np.ndarray:
    """Integral of u over every grid cell, flat C-order (unit density).

    Used to form the cell-averaged potential u_bar = U / cell_volume and
    exact inner products <u, rho> = sum_c rho_c U_c under the row model.
    """
    if pieces is None:
        pieces = _envelope_pieces(family, sliced, v)
    sx = family.sx[pieces.atom]
    b = sliced.yr[pieces.row] * family.sy[pieces.atom] - v[pieces.atom]
    nrows, ncols = sliced.num_rows, sliced.num_cols
    k0 = _column_of(sliced, pieces.t0)
    k1 = _column_of(sliced, pieces.t1)

    # full columns k0+1 .. k1-1 via difference arrays of the affine coefficients
    d_const = np.zeros((nrows, ncols + 1))
    d_slope = np.zeros((nrows, ncols + 1))
    span = k1 > k0
    np.add.at(d_const, (pieces.row[span], k0[span] + 1), b[span])
    np.add.at(d_const, (pieces.row[span], k1[span]), -b[span])
    np.add.at(d_slope, (pieces.row[span], k0[span] + 1), sx[span])
    np.add.at(d_slope, (pieces.row[span], k1[span]), -sx[span])
    const_cov = np.cumsum(d_const, axis=1)[:, :ncols]
    slope_cov = np.cumsum(d_slope, axis=1)[:, :ncols]
    u_cell = (const_cov + slope_cov * sliced.xc[None, :]) * sliced.hx

    # partial columns at both ends of each piece
    def _affine_int(a, t, s_, b_):
        return 0.5 * s_ * (t ** 2 - a ** 2) + b_ * (t - a)

    left_end = np.where(span, sliced.xe[k0 + 1], pieces.t1)
    np.add.at(u_cell, (pieces.row, k0),
              _affine_int(pieces.t0, left_end, sx, b))
    if np.any(span):
        np.add.at(u_cell, (pieces.row[span], k1[span]),
                  _affine_int(sliced.xe[k1[span]], pieces.t1[span],
                              sx[span], b[span]))
    return sliced.flat_from_rowcol(u_cell * sliced.hy)


# ---------------------------------------------------------------------------
# Semi-discrete dual solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualSolveResult:
    """Converged Kantorovich dual solve of T(rho, mu)."""

    potential: PiecewiseAffinePotential
    primal_value: float  # int x . y_{j(x)} d rho over the assignment
    dual_value: float  # G(v) at the returned offsets
    cell_masses: np.ndarray  # rho-mass captured by each atom's region
    iterations: int
    final_gradient_norm: float

    @property
    def duality_gap(self) -> float:
        return abs(self.dual_value - self.primal_value)


def _check_duplicate_atoms(mu: DiscreteMeasure) -> None:
    if mu.num_atoms > 2048:
        return
    diff = mu.atoms[:, None, :] - mu.atoms[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    if np.min(dist) < 1e-12:
        raise ValidationError(
            "duplicate atoms make the dual degenerate; merge their weights first"
        )


def semi_discrete_dual(rho: GridDensity, mu: DiscreteMeasure,
                       options: Optional[SolverOptions] = None,
                       v0: Optional[np.ndarray] = None) -> DualSolveResult:
    """Minimize the dual G(v) with Barzilai-Borwein steps and Armijo backtracking.

    At return the per-atom gradient satisfies
    max_j |cell_mass_j - mu_j| <= marginal_tolerance * max_j mu_j.
    Raises NonconvergenceError when the iteration cap is hit first, and
    emits EmptyCellWarning when an atom with positive weight captures no
    mass at the optimum (the grid cannot resolve it).
    """
    options = options or SolverOptions()
    if rho.grid.dimension != mu.dimension:
        raise ValidationError("density and target live in different dimensions")
    rho.require_normalized()
    _check_duplicate_atoms(mu)

    sliced = _SlicedGrid(rho)
    family = _LineFamily(mu.atoms)
    v = np.zeros(mu.num_atoms) if v0 is None else np.asarray(v0, dtype=float).copy()
    v -= float(mu.weights @ v)  # gauge: sum mu_j v_j = 0

    tol = options.marginal_tolerance * float(np.max(mu.weights))
    value, grad, mass, mx, my, pieces = _dual_objective(sliced, family, mu, v)
    evals = 1
    prev_v = None
    prev_grad = None
    step = 1.0
    iterations = 0

    while np.max(np.abs(grad)) > tol:
        if iterations >= options.max_dual_iterations:
            raise NonconvergenceError(
                "dual solve hit the iteration cap with gradient "
                f"{np.max(np.abs(grad)):.3e} > {tol:.3e}"
            )
        if prev_v is not None:
            dv = v - prev_v
            dg = grad - prev_grad
            denom = float(dv @ dg)
            if denom > 0:
                step = float(dv @ dv) / denom
            step = float(np.clip(step, 1e-14, 1e14))
        gnorm2 = float(grad @ grad)
        trial = step
        for _ in range(64):
            v_new = v - trial * grad
            value_new, grad_new, mass, mx, my, pieces = _dual_objective(
                sliced, family, mu, v_new)
            evals += 1
            if value_new <= value - 1e-4 * trial * gnorm2:
                break
            trial *= 0.5
        else:
            # line search exhausted: at the numerical floor of the model
            break
        prev_v, prev_grad = v, grad
        v, value, grad = v_new, value_new, grad_new
        iterations += 1

    gnorm_inf = float(np.max(np.abs(grad)))
    if gnorm_inf > tol:
        raise NonconvergenceError(
            f"dual line search stalled at gradient {gnorm_inf:.3e} > {tol:.3e}"
        )

    shift = float(mu.weights @ v)
    v = v - shift  # G is invariant along the all-ones direction
    zero_cells = (mass <= 1e-15) & (mu.weights > 0)
    if np.any(zero_cells):
        warnings.warn(
            f"{int(np.sum(zero_cells))} atoms received no grid mass; "
            "the grid is too coarse for them", EmptyCellWarning)

    atoms = mu.atoms
    primal = float(atoms[:, 0] @ mx)
    if sliced.n == 2:
        primal += float(atoms[:, 1] @ my)
    potential = PiecewiseAffinePotential(mu.atoms, v, gauge=0.0)
    return DualSolveResult(
        potential=potential,
        primal_value=primal,
        dual_value=float(value),
        cell_masses=mass,
        iterations=iterations,
        final_gradient_norm=gnorm_inf,
    )


def eval_T(rho: GridDensity, mu: DiscreteMeasure,
           potential: PiecewiseAffinePotential) -> float:
    """Dual value int u d rho + sum mu_j v_j at the given potential.

    Equals T(rho, mu) at the optimum within the duality gap, and upper
    bounds it for any offsets (weak duality); invariant under the gauge
    shift (u + k, v - k).
    """
    rho.require_normalized()
    sliced = _SlicedGrid(rho)
    family = _LineFamily(potential.slopes)
    value, *_ = _dual_objective(sliced, family, mu, np.asarray(potential.offsets))
    return float(value)


def map_assignment(rho: GridDensity, potential: PiecewiseAffinePotential
                   ) -> np.ndarray:
    """Active atom index per grid cell, evaluated at cell centers.

    Ties (a measure-zero hyperplane set) break to the lowest atom index.
    """
    centers = rho.grid.centers()
    out = np.empty(centers.shape[0], dtype=int)
    chunk = max(1, 2 ** 22 // max(1, potential.slopes.shape[0]))
    for start in range(0, centers.shape[0], chunk):
        block = centers[start:start + chunk]
        out[start:start + chunk] = np.argmax(
            block @ potential.slopes.T - potential.offsets, axis=1)
    return out
