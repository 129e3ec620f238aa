"""Rate function of the top-eigenvalue pair of two correlated GOE matrices.

With s = |r|^{p-2} the coupling strength, the pair rate is the sum of the two
single rates while v(x) v(y) <= 1/s and the coupled expression J_s beyond.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import INFINITE, DomainError
from .scalar import i1_arr, rate_I1, v_arr, v_map

BOUNDARY_RTOL = 1e-12


class Regime(enum.Enum):
    UNCOUPLED = "uncoupled"
    COUPLED = "coupled"
    INFINITE = "infinite"


@dataclass(frozen=True)
class PairRateValue:
    regime: Regime
    value: object  # float, or INFINITE
    boundary: bool = False


def coupling(p: int, r: float) -> float:
    if int(p) != p or p < 3:
        raise DomainError("p must be >= 3")
    if not abs(r) < 1:
        raise DomainError("|r| must be < 1")
    return abs(r) ** (p - 2)


def classify_regime(p: int, r: float, x: float, y: float):
    """Return (regime, on_boundary)."""
    s = coupling(p, r)
    if x < 2 or y < 2:
        return Regime.INFINITE, False
    if x == 2 or y == 2 or s == 0:
        return Regime.UNCOUPLED, False
    prod = v_map(x) * v_map(y) * s
    if abs(prod - 1.0) <= BOUNDARY_RTOL:
        return Regime.UNCOUPLED, True
    return (Regime.UNCOUPLED if prod < 1.0 else Regime.COUPLED), False


def J_uncoupled(x, y):
    return rate_I1(x) + rate_I1(y)


def J_coupled(s: float, x: float, y: float) -> float:
    """J_s(x, y); only meaningful for v(x) v(y) >= 1/s."""
    return (0.5 * (rate_I1(x) + rate_I1(y)) + 0.5 * math.log(s)
            + T_s(s, x, y))


def T_s(s, x, y):
    return (1 + s * s) / (8 * (1 - s * s)) * (x * x + y * y) - s * x * y / (2 * (1 - s * s))


def pair_rate(p: int, r: float, ell: int, x: float, y: float) -> PairRateValue:
    if int(ell) != ell or ell < 1:
        raise DomainError("ell must be >= 1")
    regime, edge = classify_regime(p, r, x, y)
    if regime is Regime.INFINITE:
        return PairRateValue(regime, INFINITE)
    if regime is Regime.UNCOUPLED:
        return PairRateValue(regime, ell * J_uncoupled(x, y), edge)
    return PairRateValue(regime, ell * J_coupled(coupling(p, r), x, y))


def pair_rate_arr(s: float, x, y):
    """Vectorised ell = 1 pair rate for x, y >= 2 (np.inf below)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ix, iy = i1_arr(x), i1_arr(y)
    J = ix + iy
    if s <= 0:
        return J
    # the x = 2 or y = 2 edge takes the uncoupled value, as in pair_rate
    coupled = (v_arr(x) * v_arr(y) * s > 1.0) & (x > 2) & (y > 2)
    Js = 0.5 * J + 0.5 * math.log(s) + T_s(s, x, y)
    return np.where(coupled, Js, J)


def rect_min(p: int, r: float, ell: int, u1: float, u2: float):
    """Minimiser and value of the pair rate over [u1, inf) x [u2, inf)."""
    if not (u1 > 2 and u2 > 2):
        raise DomainError("rect_min needs u1, u2 > 2")
    s = coupling(p, r)
    if u1 == u2:
        arg = (u1, u2)
    else:
        lo, hi = sorted((u1, u2))
        w = s * v_map(hi)
        u_star = w + 1.0 / w if w >= 1.0 else 2.0
        lo_new = max(u_star, lo)
        arg = (lo_new, hi) if u1 < u2 else (hi, lo_new)
    return arg, pair_rate(p, r, ell, *arg).value


def diag_gap(p: int, r: float, u: float) -> float:
    """D_u(s) = J_s(u,u) - J(u,u)."""
    if u < 2:
        raise DomainError("diag_gap needs u >= 2")
    s = coupling(p, r)
    if not 0 < s < 1:
        raise DomainError("need s in (0,1)")
    return diag_gap_s(s, u)


def diag_gap_s(s: float, u: float) -> float:
    return 0.5 * math.log(s) + (1 - s) / (4 * (1 + s)) * u * u - rate_I1(u)


def boundary_points(p: int, r: float, points: int = 100):
    """Points (x, y) on the regime boundary v(x) v(y) = 1/s, both >= 2."""
    s = coupling(p, r)
    if not 0 < s < 1:
        raise DomainError("need s in (0,1)")
    tau = np.linspace(0.0, math.log(1 / s), points)
    vx, vy = np.exp(tau), np.exp(-tau) / s
    return vx + 1 / vx, vy + 1 / vy


def boundary_continuity(p: int, r: float, points: int = 100) -> float:
    """max |J_s - J| over boundary points; zero when the rate is continuous."""
    s = coupling(p, r)
    xs, ys = boundary_points(p, r, points)
    return max(abs(J_coupled(s, x, y) - J_uncoupled(x, y)) for x, y in zip(xs, ys))
