"""Complexity functions Sigma_ell, Sigma and the energy thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import optimize

from .errors import DomainError, NumericalError
from .scalar import gamma_p, i1_arr, stieltjes_m, threshold_E_inf

E_BIG = 3.0


@dataclass(frozen=True)
class ModelParams:
    p: int
    ell: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 3:
            raise DomainError("p must be >= 3")
        if int(self.ell) != self.ell or self.ell < 0:
            raise DomainError("ell must be a non-negative integer")


def _i1_bar(p, u):
    # I_1 at gamma_p |u|; callers only use it for u <= -E_inf, where
    # gamma_p |u| >= 2 up to rounding
    return float(i1_arr(max(gamma_p(p) * abs(u), 2.0)))


def sigma_ell(params: ModelParams, u: float) -> float:
    p, ell = params.p, params.ell
    u = float(u)
    e = threshold_E_inf(p)
    if u <= -e:
        return (0.5 * math.log(p - 1) - (p - 2) * u * u / (4 * (p - 1))
                - (ell + 1) * _i1_bar(p, u))
    return 0.5 * math.log(p - 1) - (p - 2) / p


def sigma_total(p: int, u: float) -> float:
    u = float(u)
    e = threshold_E_inf(p)
    if u <= -e:
        return 0.5 * math.log(p - 1) - (p - 2) * u * u / (4 * (p - 1)) - _i1_bar(p, u)
    if u <= 0:
        return 0.5 * math.log(p - 1) - (p - 2) * u * u / (4 * (p - 1))
    return 0.5 * math.log(p - 1)


def threshold_E_ell(params: ModelParams) -> float:
    e = threshold_E_inf(params.p)
    f = lambda E: sigma_ell(params, -E)
    if not f(E_BIG) < 0:
        raise NumericalError("Sigma_ell(-E_big) is not negative; bracket invalid")
    try:
        root = optimize.brentq(f, e, E_BIG, xtol=1e-15, rtol=1e-15, maxiter=500)
    except (RuntimeError, ValueError) as exc:
        raise NumericalError(str(exc)) from exc
    return root


def c_coefficient(params: ModelParams) -> float:
    p, ell = params.p, params.ell
    return (2 * (p - 1) + ell * p) / (2 * (p - 1))


def frak_S(params: ModelParams, u: float) -> float:
    g = gamma_p(params.p)
    return g * (params.ell + 1) * stieltjes_m(g * u)


def sigma_derivative(params: ModelParams, u: float) -> float:
    """d Sigma_ell / du on u < -E_inf."""
    u = float(u)
    if u >= -threshold_E_inf(params.p):
        raise DomainError("sigma_derivative needs u < -E_inf")
    return -(frak_S(params, u) + c_coefficient(params) * u)
