"""Local functional machinery: f, its derivative and conjugate, and bounds.

The internal energy integrand is f(t) = -t^alpha / alpha with
alpha = 1 - 1/(n+q).  Its conjugate f*(h) is +infinity for h >= 0 and
(1/alpha - 1)(-h)^{alpha/(alpha-1)} for h < 0, which makes the standard
Young-Fenchel bound F(rho) >= -C(delta) - M1(rho)^delta available for
delta in the window (n/(n+q-1), 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DomainError
from .measures import GridDensity, sphere_surface_measure

__all__ = [
    "f",
    "f_prime",
    "f_star",
    "eval_F",
    "lower_bound_constant",
    "lower_bound_F",
    "delta_window",
    "FunctionalValues",
]

# Values below this are treated as exactly zero to avoid underflow in t^alpha.
UNDERFLOW_FLOOR = 1e-300


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def f(t, alpha: float):
    """Internal energy integrand f(t) = -t^alpha / alpha for t >= 0."""
    alpha = _check_alpha(alpha)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("f is only defined for t >= 0")
    out = np.where(t_arr < UNDERFLOW_FLOOR, 0.0,
                   -np.power(np.maximum(t_arr, UNDERFLOW_FLOOR), alpha) / alpha)
    return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out


def f_prime(t, alpha: float):
    """f'(t) = -t^{alpha-1}; negative, increasing, -infinity as t -> 0+."""
    alpha = _check_alpha(alpha)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("f' requires t > 0 (it diverges at 0)")
    out = -np.power(t_arr, alpha - 1.0)
    return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out


def f_star(h, alpha: float):
    """Convex conjugate sup_{x>=0} (x h - f(x)): +inf for h >= 0."""
    alpha = _check_alpha(alpha)
    h_arr = np.asarray(h, dtype=float)
    coef = 1.0 / alpha - 1.0
    expo = alpha / (alpha - 1.0)  # negative
    with np.errstate(divide="ignore"):
        neg = coef * np.power(np.where(h_arr < 0, -h_arr, 1.0), expo)
    out = np.where(h_arr < 0, neg, np.inf)
    return float(out) if np.isscalar(h) or np.ndim(h) == 0 else out


def eval_F(rho: GridDensity, alpha: float) -> float:
    """Midpoint quadrature of f(rho) over the grid.

    Purely atomic (singular) mass contributes nothing to F, so discrete
    candidates are handled by the transport oracle path, not here.
    """
    return float(np.sum(f(rho.values, alpha))) * rho.grid.cell_volume


def delta_window(n: int, q: float) -> tuple:
    """Open interval of admissible exponents delta for the lower bound."""
    return (n / (n + q - 1.0), 1.0)


@lru_cache(maxsize=None)
def lower_bound_constant(n: int, q: float, delta: float) -> float:
    """C(delta) = 1 + integral of f*(-(1+|x|)^delta) over R^n.

    Finite exactly on the admissible window; computed once per (n, q,
    delta) by radial quadrature and cached.
    """
    lo, hi = delta_window(n, q)
    if not lo < delta < hi:
        raise DomainError(
            f"delta={delta!r} outside the admissible window ({lo!r}, {hi!r})"
        )
    alpha = 1.0 - 1.0 / (n + q)
    power = delta * alpha / (1.0 - alpha)  # = delta * (n + q - 1)
    coef = (1.0 / alpha - 1.0) * sphere_surface_measure(n)

    def integrand(r):
        return r ** (n - 1) * (1.0 + r) ** (-power)

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
    return 1.0 + coef * value


def lower_bound_F(m1: float, delta: float, n: int, q: float) -> float:
    """Lower bound -C(delta) - M1^delta valid for every probability measure."""
    if m1 < 0:
        raise DomainError("M1 must be nonnegative")
    return -lower_bound_constant(n, q, delta) - m1 ** delta


@dataclass(frozen=True)
class FunctionalValues:
    """Snapshot of the objective pieces for one density."""

    F: float
    T: float
    M1: float
    lower_bound_at_delta: float = math.nan
    delta: float = math.nan

    @property
    def J(self) -> float:
        return self.F + self.T

    def to_json_dict(self) -> dict:
        return {
            "F": self.F,
            "T": self.T,
            "J": self.J,
            "M1": self.M1,
            "lower_bound_at_delta": self.lower_bound_at_delta,
            "delta": self.delta,
        }
