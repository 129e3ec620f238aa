"""Overlap-dependent covariances of the conditional Hessian pair.

All formulas are rational functions of r.  Monomials whose coefficient
vanishes identically (e.g. (p-3) r^{p-4} at p = 3) are skipped so that r = 0
is safe.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NumericalError
from .scalar import gamma_p, v_map


def _check(p, r):
    if int(p) != p or p < 3:
        raise DomainError("p must be >= 3")
    r = float(r)
    if not abs(r) < 1:
        raise DomainError("|r| must be < 1")
    return int(p), r


def _mono(c, r, k):
    if c == 0:
        return 0.0
    return c * r ** k


def coeff_bundle(p: int, r: float):
    """(a1, a2, a3, a4, b1, b2, b3, b4) at overlap r."""
    p, r = _check(p, r)
    w = 1 - r * r
    corr = r ** p - (p - 1) * r ** (p - 2) * w
    a1 = 1.0 / (p * (1 - r ** (2 * p - 2)))
    a2 = 1.0 / (p * (1 - corr ** 2))
    a3 = -r ** (p - 1) * a1
    a4 = -corr * a2
    shape = -(p - 2) + p * r * r
    b1 = -p + a2 * p ** 3 * r ** (2 * p - 2) * w
    b2 = -p * r ** p - a4 * p ** 3 * r ** (2 * p - 2) * w
    b3 = a2 * p ** 2 * (p - 1) * r ** (2 * p - 4) * w * shape
    b4 = (p * (p - 1) * r ** (p - 2) * w
          - a4 * p ** 2 * (p - 1) * r ** (2 * p - 4) * w * shape)
    return a1, a2, a3, a4, b1, b2, b3, b4


def sigma_U_eigs(p: int, r: float):
    """Closed-form eigenvalues of Sigma_U on [1,1] and [1,-1]."""
    p, r = _check(p, r)
    s1, s2 = _eig_ratios(p, r)
    return float(s1), float(s2)


def _factor_pm1(c):
    """Write an integer polynomial as (1-r)^a (1+r)^b q(r)."""
    P = np.polynomial.polynomial.Polynomial
    q, k = P(c), {}
    for root in (1.0, -1.0):
        k[root] = 0
        while q.degree() > 0 and abs(q(root)) < 1e-9:
            q, k[root] = q // P([1.0, -root]), k[root] + 1
    return k[1.0], k[-1.0], q


@functools.lru_cache(maxsize=None)
def _eig_factors(p: int):
    P = np.polynomial.polynomial.Polynomial
    t = P([0.0] * (p - 2) + [1.0]) * P([1.0, 0.0, -1.0]) * (p - 1)
    rq = P([0.0] * (2 * p - 2) + [1.0])
    rp = P([0.0] * p + [1.0])
    out = []
    for num, den in ((1 + t - rq, 1 + t - rp), (1 - t - rq, 1 - t + rp)):
        an, bn, qn = _factor_pm1(num.coef)
        ad, bd, qd = _factor_pm1(den.coef)
        out.append((an - ad, bn - bd, qn, qd))
    return tuple(out)


def _eig_ratios(p: int, r):
    """Eigenvalues of Sigma_U with the zeros at r = +-1 cancelled exactly."""
    r = np.asarray(r, dtype=float)
    return tuple((1 - r) ** a * (1 + r) ** b * qn(r) / qd(r)
                 for a, b, qn, qd in _eig_factors(p))


def _inv_sym2(s1, s2):
    # inverse of a 2x2 matrix with eigenvectors [1,1], [1,-1]
    d = 0.5 * (1 / s1 + 1 / s2)
    o = 0.5 * (1 / s1 - 1 / s2)
    return np.array([[d, o], [o, d]])


@dataclass(frozen=True)
class CovarianceBundle:
    p: int
    r: float
    a: tuple
    b: tuple
    sigma_U: np.ndarray
    sigma_U_eigs: tuple
    sigma_U_inv: np.ndarray
    sigma_Z: np.ndarray
    sigma_Q: np.ndarray
    m1: float
    m2: float

    def m_coefficients(self):
        """Row vectors c1, c2 with m_i = c_i . (u1, u2)."""
        c1 = np.array(self.b[2:]) @ self.sigma_U_inv
        return c1, c1[::-1].copy()


def covariance_bundle(p: int, r: float, u1: float = 0.0, u2: float = 0.0) -> CovarianceBundle:
    p, r = _check(p, r)
    a1, a2, a3, a4, b1, b2, b3, b4 = coeff_bundle(p, r)
    sU = -np.array([[b1, b2], [b2, b1]]) / p
    s1, s2 = sigma_U_eigs(p, r)
    if not (s1 > 0 and s2 > 0):
        raise NumericalError(f"Sigma_U not positive definite at r={r}")
    inv = _inv_sym2(s1, s2)
    w = 1 - r * r
    bb = np.array([b3, b4])

    z11 = p * (p - 1) - a1 * p ** 2 * (p - 1) ** 2 * r ** (2 * p - 4) * w
    z12 = (p * (p - 1) ** 2 * r ** (p - 1) - _mono(p * (p - 1) * (p - 2), r, p - 3)
           + a3 * p ** 2 * (p - 1) ** 2 * r ** (2 * p - 4) * w)

    q11 = (2 * p * (p - 1)
           - a2 * w * (p * (p - 1) * r ** (p - 3) * (p * r * r - (p - 2))) ** 2
           - bb @ inv @ bb)
    c = np.array([b1 + b3, b2 + b4])
    d = np.array([b2 + b4, b1 + b3])
    q12 = (p ** 4 * r ** p
           - 2 * p * (p - 1) * (p * p - 2 * p + 2) * r ** (p - 2)
           + _mono(p * (p - 1) * (p - 2) * (p - 3), r, p - 4)
           + _mono(a4 * p ** 2, r, 2 * p - 6) * w * (p * p * r * r - (p - 1) * (p - 2)) ** 2
           - c @ inv @ d)

    coef = bb @ inv
    m1 = float(coef @ np.array([u1, u2]))
    m2 = float(coef @ np.array([u2, u1]))
    return CovarianceBundle(
        p=p, r=r, a=(a1, a2, a3, a4), b=(b1, b2, b3, b4),
        sigma_U=sU, sigma_U_eigs=(s1, s2), sigma_U_inv=inv,
        sigma_Z=np.array([[z11, z12], [z12, z11]]),
        sigma_Q=np.array([[q11, q12], [q12, q11]]),
        m1=m1, m2=m2,
    )


@dataclass(frozen=True)
class GeometryFactors:
    G: float
    F: float
    log_C_N: float
    log_omega_N: float


def log_G(p: int, r):
    """log of G(r) = ((1-r^2)/(1-r^{2p-2}))^{1/2}; accepts arrays."""
    r = np.asarray(r, dtype=float)
    return 0.5 * (np.log1p(-r * r) - np.log1p(-r ** (2 * p - 2)))


def F_factor(p: int, r: float) -> float:
    p, r = _check(p, r)
    G = math.exp(float(log_G(p, r)))
    rad = 1 - (p * r ** p - (p - 1) * r ** (p - 2)) ** 2
    if rad <= 0:
        raise NumericalError(f"F radicand non-positive at r={r}")
    return (1 - r ** (2 * p - 2)) / (G ** 3 * math.sqrt(rad))


def log_F(p: int, r: float, form: str = "derived") -> float:
    """log F(r).

    "printed" is F_factor.  "derived" is the factor that falls out of the
    gradient density when G^N is pulled out:
    (1 - r^{2p-2}) (1 - r^2)^{-3/2} (1 - c^2)^{-1/2}.
    The two agree to O(r^2) at r = 0.
    """
    if form == "printed":
        return math.log(F_factor(p, r))
    if form != "derived":
        raise DomainError(f"unknown F form {form!r}")
    p, r = _check(p, r)
    rad = 1 - (p * r ** p - (p - 1) * r ** (p - 2)) ** 2
    if rad <= 0:
        raise NumericalError(f"F radicand non-positive at r={r}")
    return math.log1p(-r ** (2 * p - 2)) - 1.5 * math.log1p(-r * r) - 0.5 * math.log(rad)


def log_C_N(p: int, N: int) -> float:
    return (N - 1) * math.log((N - 1) * (p - 1) / (2 * math.pi))


def log_omega(N: int) -> float:
    """log surface area of the unit sphere in R^N."""
    return math.log(2.0) + 0.5 * N * math.log(math.pi) - gammaln(0.5 * N)


def geometry_factors(p: int, r: float, N: int) -> GeometryFactors:
    p, r = _check(p, r)
    if N < 3:
        raise DomainError("N must be >= 3")
    return GeometryFactors(G=math.exp(float(log_G(p, r))), F=F_factor(p, r),
                           log_C_N=log_C_N(p, N), log_omega_N=log_omega(N))


def H_diag(p: int, r, u):
    """Closed-form diagonal quadratic form H^u(r); accepts arrays."""
    r = np.asarray(r, dtype=float)
    t = (p - 1) * r ** (p - 2) * (1 - r * r)
    return u * u * (1 - r ** p + t) / (1 - r ** (2 * p - 2) + t)


def g_func(p: int, r):
    r = np.asarray(r, dtype=float)
    t = (p - 1) * r ** (p - 2) * (1 - r * r)
    return (r ** p - r ** (2 * p - 2)) / (1 - r ** (2 * p - 2) + t)


def r_star(p: int, u: float) -> float:
    x = gamma_p(p) * abs(u)
    if x < 2:
        raise DomainError("r_star needs gamma_p |u| >= 2")
    return v_map(x) ** (-2.0 / (p - 2))


def quad_forms(p: int, r: float, u1: float, u2: float):
    """(H, H_diag at u1, g, r_star at u1)."""
    p, r = _check(p, r)
    s1, s2 = sigma_U_eigs(p, r)
    if not (s1 > 0 and s2 > 0):
        raise NumericalError(f"Sigma_U singular at r={r}")
    uu = np.array([u1, u2], dtype=float)
    H = 0.5 * float(uu @ _inv_sym2(s1, s2) @ uu)
    rs = r_star(p, u1) if gamma_p(p) * abs(u1) >= 2 else float("nan")
    return H, float(H_diag(p, r, u1)), float(g_func(p, r)), rs


def H_quadratic(p: int, r, u1, u2):
    """Vectorised H(r,u1,u2) through the eigenbasis of Sigma_U."""
    r = np.asarray(r, dtype=float)
    s1, s2 = _eig_ratios(p, r)
    return 0.25 * ((u1 + u2) ** 2 / s1 + (u1 - u2) ** 2 / s2)
