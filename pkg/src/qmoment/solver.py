"""Density solver: alternate dual transport solves with density updates.

One outer iteration solves the semi-discrete dual at the current density,
pins the gauge constant c so that (u - c)^{-(n+q)} integrates to one over
the grid, forms the updated density, and takes a damped convex-combination
step sized by backtracking so the recorded objective never increases
(beyond 1e-9 slack).  Convergence is declared on the first-order
optimality residual u + f'(rho) - c, not on iterate distance.

Reported functional values carry analytic tail corrections: the potential
u(x) = max_j (x . y_j - v_j) extends beyond the box exactly, so mass, F, T
and M1 of the induced density outside the box reduce to closed-form radial
integrals (exact rays in 1D, a fine midpoint rule in the angle for n = 2).
Box-only values are kept alongside them.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import (
    DomainError,
    MassUnreachableError,
    NonconvergenceError,
    ValidationError,
)
from .functionals import FunctionalValues, delta_window, eval_F, f_prime, lower_bound_F
from .measures import (
    DiscreteMeasure,
    GridDensity,
    GridSpec,
    PiecewiseAffinePotential,
    ProblemSpec,
    SolverOptions,
    ValidationReport,
    auto_center,
    default_grid,
    validate,
)
from .transport import (
    _cell_potential_integrals,
    _LineFamily,
    _SlicedGrid,
    semi_discrete_dual,
)

__all__ = [
    "SolveReport",
    "IterationRecord",
    "TailEstimates",
    "normalize_c",
    "density_update",
    "solve",
    "export_solution",
    "load_solution",
    "tail_estimates",
]

SOLUTION_SCHEMA = "qmm-solution-v1"
MASS_BISECTION_TOL = 1e-10
RESIDUAL_FLOOR_SCALE = 1e-12  # residual is evaluated on {rho > floor}
ARMIJO_C1 = 1e-4
DESCENT_SLACK = 1e-9


# ---------------------------------------------------------------------------
# Gauge constant and density update
# ---------------------------------------------------------------------------

def _grid_mass(u_values: np.ndarray, c: float, cell_volume: float, p: float) -> float:
    with np.errstate(over="ignore"):
        return float(np.sum((u_values - c) ** (-p))) * cell_volume


def _normalize_c_values(u_values: np.ndarray, cell_volume: float,
                        n: int, q: float) -> float:
    """c with integral of (u - c)^{-(n+q)} over the grid equal to 1."""
    p = n + q
    u_min = float(np.min(u_values))
    spread = float(np.max(u_values)) - u_min
    eps = 1e-12 * max(spread, abs(u_min), 1.0)
    c_hi = u_min - eps
    if _grid_mass(u_values, c_hi, cell_volume, p) < 1.0:
        raise MassUnreachableError(
            "unit mass is unreachable: even c -> min u leaves the grid short; "
            "enlarge the box"
        )
    width = max(spread, 1.0)
    c_lo = u_min - width
    for _ in range(300):
        if _grid_mass(u_values, c_lo, cell_volume, p) < 1.0:
            break
        width *= 4.0
        c_lo = u_min - width
    else:  # pragma: no cover - mass >= 1 for arbitrarily low c is impossible
        raise MassUnreachableError("could not bracket the gauge constant")

    lo, hi = c_lo, c_hi
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        m = _grid_mass(u_values, mid, cell_volume, p)
        if abs(m - 1.0) <= MASS_BISECTION_TOL:
            return mid
        if m < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= abs(hi) * 4e-16 + 1e-300:
            break
    c = 0.5 * (lo + hi)
    if abs(_grid_mass(u_values, c, cell_volume, p) - 1.0) > MASS_BISECTION_TOL:
        raise MassUnreachableError(
            "gauge bisection could not pin unit mass to tolerance"
        )
    return c


def _potential_values(u, grid: GridSpec) -> np.ndarray:
    if isinstance(u, PiecewiseAffinePotential):
        return u(grid.centers())
    return np.asarray(u, dtype=float).ravel()


def normalize_c(u, grid: GridSpec, n: int, q: float) -> float:
    """Gauge constant c from unit grid mass of (u - c)^{-(n+q)}.

    ``u`` may be a PiecewiseAffinePotential (evaluated at cell centers) or
    an array of potential values on the grid.  Raises MassUnreachableError
    when even c -> min u cannot reach unit mass (grid too small).
    """
    return _normalize_c_values(_potential_values(u, grid), grid.cell_volume, n, q)


def density_update(u, c: float, grid: GridSpec, n: int, q: float,
                   renormalize: bool = True) -> GridDensity:
    """Cellwise rho = (u - c)^{-(n+q)}, optionally renormalized to unit mass."""
    u_values = _potential_values(u, grid)
    if not c < float(np.min(u_values)):
        raise DomainError("density update requires c < min u on the grid")
    values = (u_values - c) ** (-(n + q))
    rho = GridDensity(grid, values)
    return rho.normalized() if renormalize else rho


# ---------------------------------------------------------------------------
# Tail corrections from the analytic extension of the potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimates:
    """Integrals of the extended density over the complement of the box.

    All values are +inf (or -inf for F) when the corresponding integral
    diverges, which happens for q <= 1 (outside the existence window).
    """

    mass: float  # int rho_ext
    F: float  # int f(rho_ext) = -(1/alpha) int (u-c)^{-(n+q-1)}
    T_u: float  # int u rho_ext
    M1: float  # int |x| rho_ext
    phi_core: float  # int (u-c)^{-(n+q-1)}  (shared by F and inequality checks)
    x_grad: float  # int x . grad u  rho_ext


def _power_tail_integral(w, s, r1, r2, p: float, k: int) -> np.ndarray:
    """integral of r^k (w + s r)^{-p} dr over [r1, r2], elementwise.

    Requires w + s r > 0 on the range; r2 may be +inf (with s > 0 there).
    Returns +inf where an infinite-range integral diverges (p <= k + 1).
    Closed form via tau = w + s r and a binomial expansion of r^k.
    """
    w, s, r1, r2 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (w, s, r1, r2)))
    out = np.zeros(w.shape)
    inf_range = np.isinf(r2)

    sloped = s != 0.0
    flat = ~sloped
    if np.any(flat):
        with np.errstate(invalid="ignore"):
            val = np.power(w, -p) * (r2 ** (k + 1) - r1 ** (k + 1)) / (k + 1)
        out[flat] = np.where(inf_range[flat], np.inf, val[flat])

    if np.any(sloped):
        s_safe = np.where(sloped, s, 1.0)
        tau1 = w + s * r1
        tau2 = np.where(inf_range, np.inf, w + s * r2)
        total = np.zeros(w.shape)
        diverged = np.zeros(w.shape, dtype=bool)
        for i in range(k + 1):
            e = i - p + 1.0
            coef = math.comb(k, i) * (-w) ** (k - i) / s_safe ** (k + 1)
            if abs(e) < 1e-12:
                with np.errstate(divide="ignore", invalid="ignore"):
                    term = np.log(tau2) - np.log(tau1)
                diverged |= inf_range
            else:
                with np.errstate(over="ignore", invalid="ignore"):
                    t2 = np.where(inf_range, np.inf if e > 0 else 0.0,
                                  np.power(np.abs(tau2), e))
                    term = (t2 - np.power(tau1, e)) / e
                diverged |= inf_range & (e > 0)
            total = total + coef * term
        total = np.where(diverged, np.inf, total)
        out[sloped] = total[sloped]
    return out


def _ray_pieces(slopes: np.ndarray, intercepts: np.ndarray, r_lo: float):
    """Upper envelope of a + s r on [r_lo, inf): lists (atom, r1, r2)."""
    # sort by slope; within equal slopes the highest intercept comes first
    # (ties to the lowest index) and the rest are dominated
    order = np.lexsort((np.arange(len(slopes)), -intercepts, slopes))
    s_sorted = slopes[order]
    b_sorted = intercepts[order]
    keep_stack = []
    bps = []
    for pos in range(len(order)):
        s_g, b_g = s_sorted[pos], b_sorted[pos]
        if keep_stack and s_g == s_sorted[keep_stack[-1]]:
            continue  # dominated duplicate slope
        t_cross = -np.inf
        while keep_stack:
            top = keep_stack[-1]
            t_cross = (b_sorted[top] - b_g) / (s_g - s_sorted[top])
            if bps and t_cross <= bps[-1]:
                keep_stack.pop()
                bps.pop()
            else:
                break
        if keep_stack:
            keep_stack.append(pos)
            bps.append(t_cross)
        else:
            keep_stack.append(pos)
    cuts = [r_lo] + [min(max(t, r_lo), np.inf) for t in bps] + [np.inf]
    pieces = []
    for idx, pos in enumerate(keep_stack):
        a, b = cuts[idx], cuts[idx + 1]
        if b > a:
            pieces.append((int(order[pos]), a, b))
    return pieces


def tail_estimates(potential: PiecewiseAffinePotential, grid: GridSpec,
                   n: int, q: float, num_angles: int = 2048) -> TailEstimates:
    """Tail integrals of rho_ext = (u - c)^{-(n+q)} outside the box."""
    c = potential.gauge
    atoms = potential.slopes
    v = potential.offsets
    alpha = 1.0 - 1.0 / (n + q)
    center = grid.center
    hw = grid.half_width

    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
        weights = np.ones(2)
    elif n == 2:
        theta = (np.arange(num_angles) + 0.5) * 2.0 * np.pi / num_angles
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        weights = np.full(num_angles, 2.0 * np.pi / num_angles)
    else:
        raise DomainError("tail estimates implemented for n in {1, 2}")

    piece_w, piece_s, piece_r1, piece_r2 = [], [], [], []
    piece_weight, piece_voffset = [], []
    for direction, ang_w in zip(dirs, weights):
        slopes = atoms @ direction
        intercepts = atoms @ center - v
        with np.errstate(divide="ignore"):
            exits = np.where(direction != 0, hw / np.abs(direction), np.inf)
        r_lo = float(np.min(exits))
        for j, r1, r2 in _ray_pieces(slopes, intercepts, r_lo):
            a = float(intercepts[j])
            s = float(slopes[j])
            if np.isinf(r2) and s <= 0:
                raise MassUnreachableError(
                    "potential does not grow along some direction; "
                    "the target support is degenerate"
                )
            w_piece = a - c
            if w_piece + s * r1 <= 0 or (np.isfinite(r2) and w_piece + s * r2 <= 0):
                raise MassUnreachableError(
                    "extended potential dips to the gauge constant outside "
                    "the box; enlarge the grid"
                )
            piece_w.append(w_piece)
            piece_s.append(s)
            piece_r1.append(r1)
            piece_r2.append(r2)
            piece_weight.append(float(ang_w))
            piece_voffset.append(float(v[j]))

    w_arr = np.array(piece_w)
    s_arr = np.array(piece_s)
    r1_arr = np.array(piece_r1)
    r2_arr = np.array(piece_r2)
    ang = np.array(piece_weight)
    voff = np.array(piece_voffset)

    p_mass = n + q
    p_core = n + q - 1.0
    mass_p = _power_tail_integral(w_arr, s_arr, r1_arr, r2_arr, p_mass, n - 1)
    core_p = _power_tail_integral(w_arr, s_arr, r1_arr, r2_arr, p_core, n - 1)
    m1_p = _power_tail_integral(w_arr, s_arr, r1_arr, r2_arr, p_mass, n)

    mass = float(np.sum(ang * mass_p))
    phi_core = float(np.sum(ang * core_p))
    # u = (u - c) + c collapses the u-weighted integral onto the core one
    t_u = float(np.sum(ang * (core_p + c * mass_p)))
    # x . grad u = u + v_j along the active piece of atom j
    x_grad = float(np.sum(ang * (core_p + c * mass_p + voff * mass_p)))
    m1 = float(np.sum(ang * m1_p))

    return TailEstimates(
        mass=mass,
        F=-phi_core / alpha if np.isfinite(phi_core) else -np.inf,
        T_u=t_u,
        M1=m1,
        phi_core=phi_core,
        x_grad=x_grad,
    )


# ---------------------------------------------------------------------------
# Solve loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    """Per-outer-iteration diagnostics."""

    index: int
    F: float  # box quadrature of f(rho)
    T: float  # model dual value at the iterate
    J: float  # F + T; nonincreasing up to 1e-9 per accepted step
    residual: float
    pushforward_tv: float
    theta: float  # accepted damping (0 for the final record)
    dual_iterations: int
    duality_gap: float


@dataclass(frozen=True)
class SolveReport:
    """Everything the verification, export and surface modules consume."""

    spec: ProblemSpec
    target: DiscreteMeasure  # the centered measure actually solved
    grid: GridSpec
    converged: bool
    outside_existence_theory: bool
    rho: GridDensity  # final density, exactly phi^{-(n+q)} cellwise
    potential: PiecewiseAffinePotential  # offsets gauge-fixed, gauge = c
    u_grid: np.ndarray  # cell-averaged potential values
    phi_grid: np.ndarray  # u_grid - c, positive on every cell
    residual: float  # optimality residual at the last iterate
    pushforward_tv: float
    cell_masses: np.ndarray
    duality_gap: float
    fixed_point_gap: float  # relative max-norm distance iterate -> update
    tail_mass: float
    functionals: FunctionalValues  # tail-corrected (continuum) estimates
    grid_functionals: FunctionalValues  # box-only values
    iterations: tuple
    wall_clock: dict
    validation: ValidationReport

    @property
    def exponent_q(self) -> float:
        return self.spec.exponent_q

    @property
    def dimension(self) -> int:
        return self.spec.dimension


def _initial_density(grid: GridSpec, n: int, q: float) -> GridDensity:
    """Isotropic power law matching the known decay class of solutions."""
    r = np.linalg.norm(grid.centers() - grid.center, axis=1)
    return GridDensity(grid, (1.0 + r) ** (-(n + q))).normalized()


def solve(spec: ProblemSpec) -> SolveReport:
    """Minimize J(rho) = F(rho) + T(rho, mu) on the grid.

    Raises NonconvergenceError (with the partial report attached) when the
    outer cap is hit, and retries once on a doubled box when unit mass is
    unreachable on the configured grid.
    """
    report_validation = validate(spec)
    mu = auto_center(spec.target) if spec.auto_center else spec.target
    grid = spec.grid if spec.grid is not None else default_grid(
        mu, spec.exponent_q, tail_fraction=spec.options.tail_fraction)

    for attempt in range(2):
        try:
            return _solve_on_grid(spec, mu, grid, report_validation)
        except MassUnreachableError:
            if attempt == 1:
                raise
            grid = grid.scaled(2.0)
    raise AssertionError("unreachable")


def _solve_on_grid(spec: ProblemSpec, mu: DiscreteMeasure, grid: GridSpec,
                   validation: ValidationReport) -> SolveReport:
    n, q = spec.dimension, spec.exponent_q
    alpha = spec.alpha
    opts = spec.options
    vol = grid.cell_volume
    clock = {"dual": 0.0, "gauge": 0.0, "update": 0.0, "tails": 0.0}
    t_total = time.perf_counter()

    geometry = _SlicedGrid(GridDensity(grid, np.ones(grid.num_cells)))
    family = _LineFamily(mu.atoms)
    mu_v_weights = mu.weights

    rho = _initial_density(grid, n, q)
    v = np.zeros(mu.num_atoms)
    records = []
    converged = False
    u_bar = None
    c = math.nan
    dual = None
    stalled = False

    for k in range(opts.max_outer_iterations):
        t0 = time.perf_counter()
        dual = semi_discrete_dual(rho, mu, opts, v0=v)
        clock["dual"] += time.perf_counter() - t0
        v = np.asarray(dual.potential.offsets)

        t0 = time.perf_counter()
        u_cell = _cell_potential_integrals(geometry, family, v)
        u_bar = u_cell / vol
        c = _normalize_c_values(u_bar, vol, n, q)
        clock["gauge"] += time.perf_counter() - t0

        floor = RESIDUAL_FLOOR_SCALE * float(np.max(rho.values))
        mask = rho.values > floor
        resid_vec = u_bar[mask] + f_prime(rho.values[mask], alpha) - c
        residual = float(np.max(np.abs(resid_vec))) / (1.0 + abs(c))
        tv = 0.5 * float(np.sum(np.abs(dual.cell_masses - mu_v_weights)))

        f_box = eval_F(rho, alpha)
        t_model = float(rho.values @ u_cell) + float(mu_v_weights @ v)
        j_model = f_box + t_model

        if residual <= opts.tolerance and tv <= opts.pushforward_tolerance:
            records.append(IterationRecord(k, f_box, t_model, j_model, residual,
                                           tv, 0.0, dual.iterations,
                                           dual.duality_gap))
            converged = True
            break

        t0 = time.perf_counter()
        rho_star = density_update(u_bar, c, grid, n, q, renormalize=True)
        diff = rho_star.values - rho.values
        # directional derivative of the model objective (f' dropped on
        # empty cells, where the true slope is even more negative)
        d0 = float(resid_vec @ diff[mask]) * vol
        d0 += float((u_bar[~mask] - c) @ diff[~mask]) * vol

        theta = 1.0
        accepted = False
        while theta >= opts.damping_floor:
            cand = GridDensity(grid, rho.values + theta * diff)
            j_cand = (eval_F(cand, alpha) + float(cand.values @ u_cell)
                      + float(mu_v_weights @ v))
            if j_cand <= j_model + DESCENT_SLACK + ARMIJO_C1 * theta * d0:
                accepted = True
                break
            theta *= 0.5
        records.append(IterationRecord(k, f_box, t_model, j_model, residual,
                                       tv, theta if accepted else 0.0,
                                       dual.iterations, dual.duality_gap))
        clock["update"] += time.perf_counter() - t0
        if not accepted:
            stalled = True
            break
        rho = cand
    clock["total"] = time.perf_counter() - t_total

    def _build_report(final_converged: bool) -> SolveReport:
        if final_converged:
            # rho := (u - c)^{-(n+q)} exactly, so the reported density and
            # potential satisfy the optimality structure cellwise
            rho_final = density_update(u_bar, c, grid, n, q, renormalize=False)
        else:
            rho_final = rho
        fixed_point_gap = float(
            np.max(np.abs(density_update(u_bar, c, grid, n, q,
                                         renormalize=False).values - rho.values))
            / np.max(rho.values))
        potential = PiecewiseAffinePotential(mu.atoms, v, gauge=c)

        t1 = time.perf_counter()
        tails = tail_estimates(potential, grid, n, q)
        clock["tails"] += time.perf_counter() - t1

        u_cell_final = _cell_potential_integrals(geometry, family, np.asarray(v))
        f_box = eval_F(rho_final, alpha)
        t_box = (float(rho_final.values @ u_cell_final)
                 + float(mu_v_weights @ v))
        m1_box = rho_final.first_moment()
        grid_functionals = FunctionalValues(F=f_box, T=t_box, M1=m1_box)

        m1_full = m1_box + tails.M1
        if q > 1.0:
            lo, hi = delta_window(n, q)
            delta = 0.5 * (lo + hi)
            bound = lower_bound_F(m1_full, delta, n, q)
        else:
            delta, bound = math.nan, math.nan
        functionals = FunctionalValues(
            F=f_box + tails.F,
            T=t_box + tails.T_u,
            M1=m1_full,
            lower_bound_at_delta=bound,
            delta=delta,
        )

        phi_grid = u_bar - c
        for arr in (phi_grid,):
            arr.flags.writeable = False
        return SolveReport(
            spec=spec,
            target=mu,
            grid=grid,
            converged=final_converged,
            outside_existence_theory=spec.q_outside_existence_theory,
            rho=rho_final,
            potential=potential,
            u_grid=u_bar,
            phi_grid=phi_grid,
            residual=records[-1].residual,
            pushforward_tv=records[-1].pushforward_tv,
            cell_masses=dual.cell_masses,
            duality_gap=dual.duality_gap,
            fixed_point_gap=fixed_point_gap,
            tail_mass=tails.mass,
            functionals=functionals,
            grid_functionals=grid_functionals,
            iterations=tuple(records),
            wall_clock=clock,
            validation=validation,
        )

    if not converged:
        reason = ("backtracking stalled before reaching tolerance" if stalled
                  else "outer iteration cap reached")
        last = records[-1] if records else None
        detail = (f" (residual {last.residual:.3e}, tv {last.pushforward_tv:.3e})"
                  if last else "")
        partial = _build_report(False) if u_bar is not None else None
        raise NonconvergenceError(reason + detail, report=partial)

    return _build_report(True)


# ---------------------------------------------------------------------------
# Export / reload
# ---------------------------------------------------------------------------

def _solution_json_dict(report: SolveReport, timestamp: str) -> dict:
    return {
        "schema": SOLUTION_SCHEMA,
        "timestamp": timestamp,
        "converged": bool(report.converged),
        "outside_existence_theory": bool(report.outside_existence_theory),
        "dimension": report.dimension,
        "exponent_q": float(report.exponent_q),
        "target": report.target.to_json_dict(),
        "grid": report.grid.to_json_dict(),
        "potential": report.potential.to_json_dict(),
        "diagnostics": {
            "residual": report.residual,
            "pushforward_tv": report.pushforward_tv,
            "duality_gap": report.duality_gap,
            "fixed_point_gap": report.fixed_point_gap,
            "tail_mass": report.tail_mass,
            "functionals": report.functionals.to_json_dict(),
            "grid_functionals": report.grid_functionals.to_json_dict(),
            "cell_masses": [float(m) for m in report.cell_masses],
            "iterations": [
                {
                    "index": r.index, "F": r.F, "T": r.T, "J": r.J,
                    "residual": r.residual, "pushforward_tv": r.pushforward_tv,
                    "theta": r.theta, "dual_iterations": r.dual_iterations,
                    "duality_gap": r.duality_gap,
                }
                for r in report.iterations
            ],
            "wall_clock": report.wall_clock,
        },
    }


def _grid_csv(report) -> str:
    n = report.grid.dimension
    head = ",".join(f"x{i + 1}" for i in range(n))
    lines = ["# qmm-solution-grid-v1", f"{head},phi,rho"]
    centers = report.grid.centers()
    for row, phi, val in zip(centers, report.phi_grid, report.rho.values):
        coords = ",".join(repr(float(x)) for x in row)
        lines.append(f"{coords},{repr(float(phi))},{repr(float(val))}")
    return "\n".join(lines) + "\n"


def export_solution(report: SolveReport, out_dir: Union[str, Path]
                    ) -> Tuple[Path, Path]:
    """Write solution.json and grid.csv; byte-deterministic except timestamp."""
    if str(out_dir) == "":
        raise OSError("empty output path")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    json_path = out / "solution.json"
    csv_path = out / "grid.csv"
    payload = _solution_json_dict(report, timestamp)
    json_path.write_text(json.dumps(payload, indent=1) + "\n")
    csv_path.write_text(_grid_csv(report))
    return json_path, csv_path


@dataclass(frozen=True)
class LoadedSolution:
    """Reconstructed solution; quacks like a SolveReport for verification."""

    converged: bool
    outside_existence_theory: bool
    dimension: int
    exponent_q: float
    target: DiscreteMeasure
    grid: GridSpec
    potential: PiecewiseAffinePotential
    rho: GridDensity
    phi_grid: np.ndarray
    u_grid: np.ndarray
    diagnostics: dict

    @property
    def functionals(self) -> FunctionalValues:
        d = self.diagnostics["functionals"]
        return FunctionalValues(F=d["F"], T=d["T"], M1=d["M1"],
                                lower_bound_at_delta=d["lower_bound_at_delta"],
                                delta=d["delta"])

    @property
    def cell_masses(self) -> np.ndarray:
        return np.asarray(self.diagnostics["cell_masses"], dtype=float)

    @property
    def pushforward_tv(self) -> float:
        return float(self.diagnostics["pushforward_tv"])

    @property
    def residual(self) -> float:
        return float(self.diagnostics["residual"])


def load_solution(json_path: Union[str, Path]) -> LoadedSolution:
    """Reload an exported solution (grid.csv is read from the same directory)."""
    json_path = Path(json_path)
    data = json.loads(json_path.read_text())
    if data.get("schema") != SOLUTION_SCHEMA:
        raise ValidationError(f"not a {SOLUTION_SCHEMA} file")
    grid = GridSpec.from_json_dict(data["grid"])
    potential = PiecewiseAffinePotential.from_json_dict(data["potential"])
    csv_path = json_path.parent / "grid.csv"
    lines = csv_path.read_text().strip().splitlines()
    if not lines[0].startswith("# qmm-solution-grid-v1"):
        raise ValidationError("missing or foreign grid.csv next to the solution")
    body = [ln.split(",") for ln in lines[2:]]
    phi = np.array([float(parts[-2]) for parts in body])
    rho_vals = np.array([float(parts[-1]) for parts in body])
    return LoadedSolution(
        converged=bool(data["converged"]),
        outside_existence_theory=bool(data["outside_existence_theory"]),
        dimension=int(data["dimension"]),
        exponent_q=float(data["exponent_q"]),
        target=DiscreteMeasure.from_json_dict(data["target"]),
        grid=grid,
        potential=potential,
        rho=GridDensity(grid, rho_vals),
        phi_grid=phi,
        u_grid=phi + potential.gauge,
        diagnostics=data["diagnostics"],
    )
