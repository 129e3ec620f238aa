"""Semicircle-law scalars and single-GOE large-deviation rates.

All functions are pure.  Scalar entry points validate their input and use the
tagged ``INFINITE`` value; the ``*_arr`` variants are vectorised helpers used
by the optimiser and return ``np.inf`` instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import INFINITE, DomainError


@dataclass(frozen=True)
class TruncationWindow:
    eps: float
    kappa: float

    def __post_init__(self):
        if not (self.eps > 0 and self.kappa > self.eps):
            raise DomainError("need 0 < eps < kappa")


def _finite(x, name="x"):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite")
    return x


def semicircle_density(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2 * np.pi)


def v_map(x: float) -> float:
    """v(x) = (x + sqrt(x^2-4))/2 for x >= 2; the inverse of v + 1/v."""
    x = _finite(x)
    if x < 2:
        raise DomainError("v_map needs x >= 2")
    return 0.5 * (x + math.sqrt(x * x - 4.0))


def v_arr(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.sqrt(np.clip(x * x - 4.0, 0.0, None)))


def _i1_unit(x: float) -> float:
    # closed form 1/4 (v^2 - v^-2) - log v
    v = v_map(x)
    return 0.25 * (v * v - 1.0 / (v * v)) - math.log(v)


def i1_arr(x):
    """I_1(x;1) for an array with x >= 2 (np.inf below 2)."""
    x = np.asarray(x, dtype=float)
    v = v_arr(np.maximum(x, 2.0))
    out = 0.25 * (v * v - 1.0 / (v * v)) - np.log(v)
    return np.where(x < 2.0, np.inf, out)


def rate_I1(u: float, theta: float = 1.0):
    """Top-eigenvalue rate I_1(u; theta) = 2 int_1^{u/(2 theta)} sqrt(t^2-1) dt.

    Returns ``INFINITE`` for u < 2 theta.  Depends on (u, theta) only through
    u/theta.
    """
    u = _finite(u, "u")
    theta = _finite(theta, "theta")
    if theta <= 0:
        raise DomainError("theta must be positive")
    x = u / theta
    if x < 2.0:
        return INFINITE
    return _i1_unit(x)


def semicircle_log_potential(x: float, window: TruncationWindow | None = None) -> float:
    """Omega(x) = int log|lambda - x| dmu_sc(lambda).

    With a window the truncated log_eps^kappa is integrated numerically.
    """
    x = _finite(x)
    if window is None:
        ax = abs(x)
        base = 0.25 * x * x - 0.5
        if ax <= 2.0:
            return base
        return base - _i1_unit(ax)
    return _truncated_potential(x, window)


def omega_arr(x):
    x = np.abs(np.asarray(x, dtype=float))
    return 0.25 * x * x - 0.5 - i1_arr(np.maximum(x, 2.0))


def h_eps_kappa(x, window: TruncationWindow):
    x = np.asarray(x, dtype=float)
    return np.where(x < window.eps, window.eps, np.where(x > window.kappa, 1.0, x))


def h_kappa_inf(x, kappa: float):
    x = np.asarray(x, dtype=float)
    return np.where(x <= kappa, 1.0, x)


def log_eps_kappa(x, window: TruncationWindow):
    return np.log(h_eps_kappa(x, window))


def _truncated_potential(x: float, window: TruncationWindow) -> float:
    # lambda = 2 sin(theta) removes the square-root edge
    def f(th):
        lam = 2.0 * math.sin(th)
        w = (2.0 / math.pi) * math.cos(th) ** 2
        return float(log_eps_kappa(abs(lam - x), window)) * w

    breaks = []
    for c in (x - window.kappa, x - window.eps, x, x + window.eps, x + window.kappa):
        if -2.0 < c < 2.0:
            breaks.append(math.asin(c / 2.0))
    val, _ = integrate.quad(f, -math.pi / 2, math.pi / 2, points=sorted(breaks) or None,
                            epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def stieltjes_m(u: float) -> float:
    """m(u) = int (lambda - u)^{-1} dmu_sc for u < -2.

    This is the root of m^2 + u m + 1 = 0 that decays like -1/u, i.e.
    (-u - sqrt(u^2-4))/2.
    """
    u = _finite(u, "u")
    if u >= -2.0:
        raise DomainError("stieltjes_m needs u < -2")
    return 0.5 * (-u - math.sqrt(u * u - 4.0))


def stieltjes_arr(u):
    u = np.asarray(u, dtype=float)
    return 0.5 * (-u - np.sqrt(u * u - 4.0))


def threshold_E_inf(p: int) -> float:
    if int(p) != p or p < 3:
        raise DomainError("p must be >= 3")
    return 2.0 * math.sqrt((p - 1) / p)


def gamma_p(p: int) -> float:
    return 2.0 / threshold_E_inf(p)


def rate_Iell(u: float, p: int, ell: int) -> float:
    """I_ell(u) for u <= -E_inf, the rate of the ell-th smallest eigenvalue.

    Equals ell * I_1(gamma_p |u|; 1).  Both logarithms enter with the same
    sign; flipping them breaks agreement with the integral form.
    """
    u = _finite(u, "u")
    if int(ell) != ell or ell < 1:
        raise DomainError("ell must be a positive integer")
    e = threshold_E_inf(p)
    if u > -e:
        raise DomainError("rate_Iell needs u <= -E_inf")
    if u == -e:
        return 0.0
    root = math.sqrt(u * u - e * e)
    return -ell * (u / (e * e) * root + math.log(-u + root) - math.log(e))
