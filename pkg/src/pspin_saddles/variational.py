"""The bounding function Psi_{p,ell}(r, u1, u2) and its maximisation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .complexity import ModelParams, sigma_ell, threshold_E_ell
from .covariance import H_quadratic, log_G, r_star
from .errors import DomainError, as_float
from .pair_rate import Regime, classify_regime, coupling, pair_rate, pair_rate_arr
from .scalar import gamma_p, omega_arr, rate_I1, semicircle_log_potential, threshold_E_inf


class Branch(enum.Enum):
    PERP = "perp"
    PARALLEL = "parallel"
    BOUNDARY = "boundary"
    EXTENSION_ENDPOINT = "extension_endpoint"


@dataclass(frozen=True)
class PsiEvaluation:
    r: float
    u1: float
    u2: float
    value: float
    branch: Branch


def bounding_psi(params: ModelParams, r: float, u1: float, u2: float) -> PsiEvaluation:
    p, ell = params.p, params.ell
    if not abs(r) < 1:
        raise DomainError("|r| must be < 1")
    g = gamma_p(p)
    x1, x2 = g * abs(u1), g * abs(u2)
    if not (u1 < 0 and u2 < 0 and x1 > 2 and x2 > 2):
        raise DomainError("need u_i < -2/gamma_p")
    val = (1 + math.log(p - 1) + float(log_G(p, r))
           + semicircle_log_potential(x1) + semicircle_log_potential(x2)
           - float(H_quadratic(p, r, u1, u2)))
    if ell:
        val -= ell * as_float(pair_rate(p, r, 1, x1, x2).value)
    regime, edge = classify_regime(p, r, x1, x2)
    if edge:
        branch = Branch.BOUNDARY
    else:
        branch = Branch.PERP if regime is Regime.UNCOUPLED else Branch.PARALLEL
    return PsiEvaluation(r, u1, u2, val, branch)


def psi_endpoint(params: ModelParams, u: float) -> float:
    """Limit of Psi(r, u, u) as |r| -> 1."""
    p, ell = params.p, params.ell
    x = gamma_p(p) * abs(u)
    return (1 + math.log(p - 1) + 2 * semicircle_log_potential(x) - ell * rate_I1(x)
            + 0.5 * math.log(1 / (p - 1)) - (3 * p - 2) / (4 * (p - 1)) * u * u)


def psi_diagonal_extended(params: ModelParams, r: float, u: float) -> PsiEvaluation:
    if not u < -threshold_E_inf(params.p):
        raise DomainError("need u < -E_inf")
    if not -1 <= r <= 1:
        raise DomainError("r must lie in [-1, 1]")
    if abs(r) == 1:
        return PsiEvaluation(r, u, u, psi_endpoint(params, u), Branch.EXTENSION_ENDPOINT)
    ev = bounding_psi(params, r, u, u)
    rs = r_star(params.p, u)
    if ev.branch is not Branch.BOUNDARY:
        branch = Branch.PERP if abs(r) <= rs else Branch.PARALLEL
        ev = PsiEvaluation(r, u, u, ev.value, branch)
    return ev


class PsiGrid:
    """Vectorised Psi on a product grid of energies for one r at a time."""

    def __init__(self, params: ModelParams, u1, u2):
        self.p, self.ell = params.p, params.ell
        g = gamma_p(self.p)
        self.u1 = np.asarray(u1, dtype=float)[:, None]
        self.u2 = np.asarray(u2, dtype=float)[None, :]
        self.x1, self.x2 = g * np.abs(self.u1), g * np.abs(self.u2)
        self.base = 1 + math.log(self.p - 1) + omega_arr(self.x1) + omega_arr(self.x2)

    def at(self, r: float):
        val = self.base + float(log_G(self.p, r)) - H_quadratic(self.p, r, self.u1, self.u2)
        if self.ell:
            val = val - self.ell * pair_rate_arr(coupling(self.p, r), self.x1, self.x2)
        return val


def _psi_point(params, r, u1, u2):
    return bounding_psi(params, r, u1, u2).value


def optimize_psi(params: ModelParams, r_box=(-0.95, 0.95), u_box=None, points: int = 201,
                 budget: int = 2000):
    """Maximise Psi over r in r_box and u1, u2 in u_box.

    Grid scan followed by a bounded Nelder-Mead polish.  Returns
    ((r, u1, u2), value).
    """
    p = params.p
    e_inf = threshold_E_inf(p)
    e_ell = threshold_E_ell(params)
    if u_box is None:
        raise DomainError("u_box required")
    ulo, uhi = map(float, u_box)
    rlo, rhi = map(float, r_box)
    if not (-1 < rlo <= rhi < 1):
        raise DomainError("r_box must be inside (-1, 1)")
    if not (-e_ell <= ulo <= uhi < -e_inf):
        raise DomainError("u_box must be inside (-E_ell, -E_inf)")
    rg = np.linspace(rlo, rhi, points) if rhi > rlo else np.array([rlo])
    ug = np.linspace(ulo, uhi, points) if uhi > ulo else np.array([ulo])
    grid = PsiGrid(params, ug, ug)
    best, arg = -np.inf, None
    for r in rg:  # fixed order keeps ties deterministic
        vals = grid.at(r)
        k = int(np.argmax(vals))
        if vals.flat[k] > best:
            i, j = divmod(k, ug.size)
            best, arg = float(vals.flat[k]), (float(r), float(ug[i]), float(ug[j]))

    lo = np.array([rlo, ulo, ulo])
    hi = np.array([rhi, uhi, uhi])
    if np.all(hi > lo):
        res = optimize.minimize(lambda z: -_psi_point(params, *np.clip(z, lo, hi)),
                                np.array(arg), method="Nelder-Mead",
                                bounds=list(zip(lo, hi)),
                                options={"xatol": 1e-8, "fatol": 1e-12, "maxfev": budget})
        if -res.fun > best:
            best, arg = float(-res.fun), tuple(float(v) for v in np.clip(res.x, lo, hi))
    elif rhi > rlo:
        res = optimize.minimize_scalar(lambda r: -_psi_point(params, r, ulo, ulo),
                                       bounds=(rlo, rhi), method="bounded",
                                       options={"xatol": 1e-8})
        if -res.fun > best:
            best, arg = float(-res.fun), (float(res.x), ulo, ulo)
    return arg, best


def identity_suite(params: ModelParams, points: int = 200):
    """Check the analytic identities of Psi on a grid of energies.

    Returns a dict name -> (passed, max_residual).
    """
    p, ell = params.p, params.ell
    e_inf = threshold_E_inf(p)
    e_ell = threshold_E_ell(params)
    us = np.linspace(-3.0, -e_inf - 1e-6, points)
    us = us[gamma_p(p) * np.abs(us) > 2]
    rep = {}

    res = max(abs(bounding_psi(params, 0.0, u, u).value - 2 * sigma_ell(params, u)) for u in us)
    rep["psi_at_zero_is_twice_complexity"] = (res <= 1e-9, res)

    res = 0.0
    for u in us:
        x = gamma_p(p) * abs(u)
        lhs = psi_endpoint(params, u) - bounding_psi(params, 0.0, u, u).value
        res = max(res, abs(lhs - (-sigma_ell(params, u) - rate_I1(x))))
    rep["endpoint_minus_origin"] = (res <= 1e-9, res)

    # Sigma_ell - I_1 drops one more I_1, which is Sigma_{ell+1}
    nxt = ModelParams(p, ell + 1)
    res = max(abs(psi_endpoint(params, u) - sigma_ell(nxt, u)) for u in us)
    rep["endpoint_is_next_index_complexity"] = (res <= 1e-9, res)

    below = us[us <= -e_ell]
    if below.size:
        worst = max(max(bounding_psi(params, 0.0, u, u).value, psi_endpoint(params, u))
                    for u in below)
        rep["nonpositive_below_E_ell"] = (worst <= 1e-10, max(worst, 0.0))
    return rep
