"""Independent checks of the solver's output against the theory.

Everything here recomputes its inputs through routes that do not share
code with the solver's inner loop: the non-degeneracy constant c(mu) via
direction search with exact weighted medians, the first-moment lower bound
on T, the integral inequality relating phi^{-(n+q-1)} to x . grad phi,
displacement-convexity probes along exact 1D quantile geodesics, and the
pointwise first-order optimality residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize as sciopt

from .errors import DomainError, UnsupportedDimensionError
from .functionals import eval_F, f_prime
from .measures import DiscreteMeasure, GridDensity, GridSpec
from .transport import _Quantile1D, map_assignment, quantile_correlation_1d

__all__ = [
    "c_mu",
    "check_t_lower_bound",
    "check_b1",
    "B1Check",
    "displacement_convexity_probe",
    "geodesic_objective_curve",
    "residual_profile",
    "optimality_residual",
    "OptimalityResidual",
    "sufficiency_spot_check",
    "verification_report",
    "VerificationReport",
]

RESIDUAL_FLOOR_SCALE = 1e-12


# ---------------------------------------------------------------------------
# Non-degeneracy constant c(mu)
# ---------------------------------------------------------------------------

def _median_abs_deviation(projections: np.ndarray, weights: np.ndarray) -> float:
    """min over l of sum_j w_j |p_j - l|, attained at a weighted median."""
    order = np.argsort(projections, kind="stable")
    p = projections[order]
    w = weights[order]
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, 0.5 * cum[-1], side="left"))
    median = p[min(k, len(p) - 1)]
    return float(w @ np.abs(p - median))


def _direction_objective(mu: DiscreteMeasure, e: np.ndarray) -> float:
    return _median_abs_deviation(mu.atoms @ e, mu.weights)


def c_mu(mu: DiscreteMeasure) -> float:
    """c(mu) = (1/2n) inf over unit directions e and offsets l of
    int |y.e - l| dmu: positive exactly when mu is full-dimensional.

    The inner minimization over l is exact (weighted median); the
    direction search uses a fine grid with local refinement (n = 2) or a
    Fibonacci sphere plus Nelder-Mead (n = 3).  n = 1 is exact.
    """
    n = mu.dimension
    if n == 1:
        return _direction_objective(mu, np.ones(1)) / 2.0

    if n == 2:
        theta = np.linspace(0.0, np.pi, 181)  # antipodal directions coincide
        vals = [
            _direction_objective(mu, np.array([math.cos(t), math.sin(t)]))
            for t in theta
        ]
        k = int(np.argmin(vals))
        span = theta[1] - theta[0]

        def obj(t):
            return _direction_objective(mu, np.array([math.cos(t), math.sin(t)]))

        res = sciopt.minimize_scalar(
            obj, bounds=(theta[k] - span, theta[k] + span), method="bounded",
            options={"xatol": 1e-10})
        best = min(float(np.min(vals)), float(res.fun))
        return best / (2.0 * n)

    if n == 3:
        count = 512
        k = np.arange(count)
        z = 1.0 - 2.0 * (k + 0.5) / count
        phi = np.pi * (1.0 + math.sqrt(5.0)) * k
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        vals = [_direction_objective(mu, d) for d in dirs]
        kbest = int(np.argmin(vals))
        theta0 = math.acos(max(-1.0, min(1.0, dirs[kbest, 2])))
        phi0 = math.atan2(dirs[kbest, 1], dirs[kbest, 0])

        def obj3(x):
            th, ph = x
            e = np.array([math.sin(th) * math.cos(ph),
                          math.sin(th) * math.sin(ph), math.cos(th)])
            return _direction_objective(mu, e)

        res = sciopt.minimize(obj3, np.array([theta0, phi0]),
                              method="Nelder-Mead",
                              options={"xatol": 1e-9, "fatol": 1e-12})
        best = min(float(np.min(vals)), float(res.fun))
        return best / (2.0 * n)

    raise UnsupportedDimensionError("c(mu) search implemented for n <= 3")


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------

def check_t_lower_bound(rho: GridDensity, mu: DiscreteMeasure, t_value: float
                        ) -> float:
    """Slack of T >= c(mu) M1(rho), valid for centered rho.

    Positive (above -1e-6) when the claim holds; the caller supplies T
    from whichever route it trusts (dual solve or quantile oracle).
    """
    return float(t_value) - c_mu(mu) * rho.first_moment()


@dataclass(frozen=True)
class B1Check:
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def check_b1(report) -> B1Check:
    """Both sides of n/(n+q-1) int phi^{-(n+q-1)} >= int x . grad phi d rho.

    grad phi on a cell is the assigned atom slope (exact for the
    piecewise-affine potential class); both sides carry the analytic tail
    of the extended potential beyond the box.
    """
    from .solver import tail_estimates  # local: solver depends on this module's sibling

    n = report.dimension
    q = report.exponent_q
    p_core = n + q - 1.0
    grid = report.grid
    vol = grid.cell_volume

    phi = np.asarray(report.phi_grid)
    rho = report.rho
    tails = tail_estimates(report.potential, grid, n, q)

    lhs_box = float(np.sum(phi ** (-p_core))) * vol
    lhs = (n / p_core) * (lhs_box + tails.phi_core)

    assignment = map_assignment(rho, report.potential)
    grads = report.potential.slopes[assignment]
    xdot = np.sum(grid.centers() * grads, axis=1)
    rhs = float(xdot @ rho.values) * vol + tails.x_grad
    return B1Check(lhs=lhs, rhs=rhs)


# ---------------------------------------------------------------------------
# Displacement-convexity probes (1D quantile geodesics)
# ---------------------------------------------------------------------------

def _one_sided_quantiles(measure, s_union: np.ndarray
                         ) -> Tuple[np.ndarray, np.ndarray]:
    """Left and right limits of the quantile function at the given levels."""
    quant = _Quantile1D(measure)
    left = quant.eval(s_union, "left")
    right = quant.eval(s_union, "right")
    left[0] = right[0]
    right[-1] = left[-1]
    return left, right


def _mass_per_cell(s_pts: np.ndarray, q_pts: np.ndarray,
                   edges: np.ndarray) -> np.ndarray:
    """Cell masses of the measure with quantile graph (s_pts, q_pts)."""
    # cdf at the edges by inverting the nondecreasing piecewise-affine graph
    idx = np.searchsorted(q_pts, edges, side="right")
    cdf = np.empty_like(edges)
    inside = (idx > 0) & (idx < len(q_pts))
    cdf[idx == 0] = 0.0
    cdf[idx == len(q_pts)] = 1.0
    k = idx[inside]
    q_lo, q_hi = q_pts[k - 1], q_pts[k]
    s_lo, s_hi = s_pts[k - 1], s_pts[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(q_hi > q_lo, (edges[inside] - q_lo) / (q_hi - q_lo), 1.0)
    cdf[inside] = s_lo + frac * (s_hi - s_lo)
    return np.diff(np.clip(cdf, 0.0, 1.0))


def geodesic_objective_curve(rho0: GridDensity, rho1: GridDensity,
                             mu: DiscreteMeasure, samples: int,
                             alpha: float, cells: int = 4001) -> np.ndarray:
    """J(rho_t) for t = 0, 1/k, ..., 1 along the 1D quantile geodesic.

    rho_t is realized by linear interpolation of the quantile functions
    (the exact Wasserstein geodesic in 1D), projected onto a common grid
    for the F term; T is evaluated by the exact quantile oracle.
    """
    if rho0.grid.dimension != 1 or rho1.grid.dimension != 1:
        raise UnsupportedDimensionError("geodesic probes are 1D only")
    rho0 = rho0.normalized()
    rho1 = rho1.normalized()
    s_union = np.unique(np.concatenate([
        _Quantile1D(rho0).breaks, _Quantile1D(rho1).breaks, [0.0, 1.0]]))
    s_union = s_union[(s_union >= 0.0) & (s_union <= 1.0)]
    q0_left, q0_right = _one_sided_quantiles(rho0, s_union)
    q1_left, q1_right = _one_sided_quantiles(rho1, s_union)
    # interleave the one-sided limits: jumps become vertical graph segments
    s_pts = np.repeat(s_union, 2)
    q0 = np.stack([q0_left, q0_right], axis=1).ravel()
    q1 = np.stack([q1_left, q1_right], axis=1).ravel()

    lo = min(float(q0.min()), float(q1.min()))
    hi = max(float(q0.max()), float(q1.max()))
    pad = 1e-9 * max(1.0, hi - lo)
    grid = GridSpec(np.array([(lo + hi) / 2.0]),
                    np.array([(hi - lo) / 2.0 + pad]), (cells,))
    edges = grid.axis_edges(0)
    width = grid.cell_width[0]

    values = []
    for t in np.linspace(0.0, 1.0, samples + 1):
        q_t = (1.0 - t) * q0 + t * q1
        masses = _mass_per_cell(s_pts, q_t, edges)
        total = masses.sum()
        rho_t = GridDensity(grid, np.maximum(masses, 0.0) / (width * total))
        f_val = eval_F(rho_t, alpha)
        t_val = quantile_correlation_1d(rho_t, mu)
        values.append(f_val + t_val)
    return np.asarray(values)


def displacement_convexity_probe(rho0: GridDensity, rho1: GridDensity,
                                 mu: DiscreteMeasure, samples: int,
                                 alpha: float, cells: int = 4001) -> float:
    """Minimum centered second difference of t -> J(rho_t) (>= ~0 expected)."""
    curve = geodesic_objective_curve(rho0, rho1, mu, samples, alpha, cells)
    if len(curve) < 3:
        return 0.0
    second = curve[:-2] - 2.0 * curve[1:-1] + curve[2:]
    return float(np.min(second))


# ---------------------------------------------------------------------------
# Optimality residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimalityResidual:
    """Pointwise first-order residual u + f'(rho) - c."""

    profile: np.ndarray  # residual on the active cells {rho > floor}
    active: np.ndarray  # boolean mask of active cells
    inactive_min: float  # min of u + f'(floor) - c off-support (or +inf)
    gauge: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.profile)))

    @property
    def relative(self) -> float:
        return self.max_abs / (1.0 + abs(self.gauge))


def residual_profile(u_values: np.ndarray, c: float, rho_values: np.ndarray,
                     n: int, q: float,
                     floor_scale: float = RESIDUAL_FLOOR_SCALE
                     ) -> OptimalityResidual:
    """Residual from raw arrays (e.g. hand-built closed-form fixtures)."""
    alpha = 1.0 - 1.0 / (n + q)
    u_values = np.asarray(u_values, dtype=float)
    rho_values = np.asarray(rho_values, dtype=float)
    floor = floor_scale * float(np.max(rho_values))
    active = rho_values > floor
    profile = u_values[active] + f_prime(rho_values[active], alpha) - c
    if np.any(~active):
        inactive_min = float(np.min(
            u_values[~active] + f_prime(max(floor, 1e-300), alpha) - c))
    else:
        inactive_min = math.inf
    return OptimalityResidual(profile=profile, active=active,
                              inactive_min=inactive_min, gauge=float(c))


def optimality_residual(report) -> OptimalityResidual:
    """Residual of a solve report, recomputed from its stored fields."""
    return residual_profile(np.asarray(report.u_grid), report.potential.gauge,
                            report.rho.values, report.dimension,
                            report.exponent_q)


# ---------------------------------------------------------------------------
# Sufficiency spot check
# ---------------------------------------------------------------------------

def _random_compact_density(rng: np.random.Generator, grid: GridSpec
                            ) -> GridDensity:
    """Smooth random bump mixture supported well inside the box (1D)."""
    centers = grid.centers()[:, 0]
    span = float(grid.half_width[0])
    lo = -min(5.0, 0.5 * span)
    hi = min(5.0, 0.5 * span)
    k = int(rng.integers(1, 4))
    vals = np.zeros_like(centers)
    for _ in range(k):
        loc = rng.uniform(lo, hi)
        width = rng.uniform(0.1, 1.5)
        vals += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((centers - loc) / width) ** 2)
    vals[np.abs(centers) > max(abs(lo), abs(hi)) + 6.0] = 0.0
    return GridDensity(grid, vals).normalized()


def sufficiency_spot_check(report, num_competitors: int = 20, seed: int = 0
                           ) -> float:
    """min over random compactly supported rho of J(rho) - J(rho_bar).

    Nonnegative (above -1e-3) when the solved density is optimal; 1D only
    (exact T via the quantile oracle), NaN otherwise.
    """
    if report.dimension != 1:
        return math.nan
    alpha = 1.0 - 1.0 / (report.dimension + report.exponent_q)
    rng = np.random.default_rng(seed)
    j_star = report.functionals.J
    worst = math.inf
    for _ in range(num_competitors):
        rho = _random_compact_density(rng, report.grid)
        j_val = eval_F(rho, alpha) + quantile_correlation_1d(rho, report.target)
        worst = min(worst, j_val - j_star)
    return float(worst)


# ---------------------------------------------------------------------------
# Aggregate report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    """All checks the verify command prints, one value or slack each."""

    c_mu: float
    t_lower_bound_slack: float
    b1_lhs: float
    b1_rhs: float
    b1_slack: float
    convexity_min_second_diff: float  # NaN when the probe does not apply
    residual_max: float
    residual_relative: float
    inactive_min: float
    pushforward_tv: float
    sufficiency_min_gap: float  # NaN outside 1D
    mass_error: float

    def to_json_dict(self) -> dict:
        return {
            "c_mu": self.c_mu,
            "t_lower_bound_slack": self.t_lower_bound_slack,
            "b1_lhs": self.b1_lhs,
            "b1_rhs": self.b1_rhs,
            "b1_slack": self.b1_slack,
            "convexity_min_second_diff": self.convexity_min_second_diff,
            "residual_max": self.residual_max,
            "residual_relative": self.residual_relative,
            "inactive_min": self.inactive_min,
            "pushforward_tv": self.pushforward_tv,
            "sufficiency_min_gap": self.sufficiency_min_gap,
            "mass_error": self.mass_error,
        }


def verification_report(report, seed: int = 0, competitors: int = 20,
                        geodesic_samples: int = 10) -> VerificationReport:
    """Run every applicable check against a solve report (or reloaded one)."""
    mu = report.target
    cmu_value = c_mu(mu)
    slack_t = report.functionals.T - cmu_value * report.functionals.M1

    b1 = check_b1(report)
    residual = optimality_residual(report)

    if report.dimension == 1:
        shift = 0.25 * float(report.grid.half_width[0]) / 10.0
        shifted = GridDensity(report.grid.translated([shift]), report.rho.values)
        alpha = 1.0 - 1.0 / (report.dimension + report.exponent_q)
        convexity = displacement_convexity_probe(
            report.rho, shifted, mu, samples=geodesic_samples, alpha=alpha)
        sufficiency = sufficiency_spot_check(report, competitors, seed)
    else:
        convexity = math.nan
        sufficiency = math.nan

    return VerificationReport(
        c_mu=cmu_value,
        t_lower_bound_slack=float(slack_t),
        b1_lhs=b1.lhs,
        b1_rhs=b1.rhs,
        b1_slack=b1.slack,
        convexity_min_second_diff=convexity,
        residual_max=residual.max_abs,
        residual_relative=residual.relative,
        inactive_min=residual.inactive_min,
        pushforward_tv=float(report.pushforward_tv),
        sufficiency_min_gap=sufficiency,
        mass_error=abs(report.rho.mass() - 1.0),
    )
