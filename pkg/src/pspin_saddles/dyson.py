"""Path-space rate of the top eigenvalue of symmetric Brownian motion.

Paths are stored on a time grid and interpolated linearly in tau = sqrt(t).
This makes the barrier 2 sqrt(t) exactly representable, and a path that sits
above the barrier at the knots sits above it everywhere.  On an interval where
phi = a + b tau the integrand, written in tau, is (sqrt(D) - a)^2 / (2 tau^3)
with D = phi^2 - 4 tau^2.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import INFINITE, DomainError
from .scalar import rate_I1, v_map

ADMISSIBLE_TOL = 1e-12


@dataclass(frozen=True)
class DiscretizedPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise DomainError("times and values must be 1-D of equal length >= 2")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] > 1.0 + 1e-15:
            raise DomainError("times must increase strictly from 0 within [0, 1]")
        if v[0] != 0.0:
            raise DomainError("values[0] must be 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.values >= 2 * np.sqrt(self.times) - ADMISSIBLE_TOL))

    def __call__(self, t):
        tau = np.sqrt(np.asarray(t, dtype=float))
        return np.interp(tau, np.sqrt(self.times), self.values)


def barrier_path(times) -> DiscretizedPath:
    t = np.asarray(times, dtype=float)
    return DiscretizedPath(t, 2 * np.sqrt(t))


def _interval_coeffs(path: DiscretizedPath):
    tau = np.sqrt(path.times)
    b = np.diff(path.values) / np.diff(tau)
    a = path.values[:-1] - b * tau[:-1]
    return tau, a, b


def _integrand_tau(a, b, tau):
    phi = a + b * tau
    D = np.clip(phi * phi - 4 * tau * tau, 0.0, None)
    return (np.sqrt(D) - a) ** 2 / (2 * tau ** 3)


def _segment_integrals(path: DiscretizedPath, order: int):
    tau, a, b = _interval_coeffs(path)
    xg, wg = np.polynomial.legendre.leggauss(order)
    out = np.empty(a.size)
    lo, hi = tau[:-1], tau[1:]
    for k in range(a.size):
        if lo[k] == 0.0:
            # phi = b tau on the first interval: cost (b^2-4)/2 * int dtau/tau,
            # finite only on the barrier
            out[k] = 0.0 if abs(b[k] - 2.0) <= 1e-12 else math.inf
            continue
        mid, half = 0.5 * (lo[k] + hi[k]), 0.5 * (hi[k] - lo[k])
        out[k] = half * np.sum(wg * _integrand_tau(a[k], b[k], mid + half * xg))
    return out


def path_rate(path: DiscretizedPath, ell: int = 1, order: int = 5, upto: float | None = None):
    """ell/4 * int (phi' - (phi - sqrt(phi^2-4s))/(2s))^2 ds.

    ``upto`` restricts the integral to [0, upto] (must be a knot).
    """
    if int(ell) != ell or ell < 1:
        raise DomainError("ell must be >= 1")
    if not path.admissible:
        return INFINITE
    seg = _segment_integrals(path, order)
    if upto is not None:
        k = int(np.searchsorted(path.times, upto))
        if k >= path.times.size or abs(path.times[k] - upto) > 1e-14:
            raise DomainError("upto must be a grid time")
        seg = seg[:k]
    total = float(np.sum(seg))
    if not math.isfinite(total):
        return INFINITE
    return ell * 0.25 * total


def path_rate_adaptive(path: DiscretizedPath, ell: int = 1):
    """Same functional with adaptive quadrature on every interval."""
    if not path.admissible:
        return INFINITE
    tau, a, b = _interval_coeffs(path)
    total = 0.0
    for k in range(a.size):
        if tau[k] == 0.0:
            if abs(b[k] - 2.0) > 1e-12:
                return INFINITE
            continue
        val, _ = integrate.quad(lambda t: _integrand_tau(a[k], b[k], t), tau[k], tau[k + 1],
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return ell * 0.25 * total


def optimal_drift(path: DiscretizedPath, order: int = 5):
    """k_phi at the Gauss nodes of each interval.

    Returns (s_nodes, weights_in_s, k_values) so that
    sum(w * k^2) = int k^2 ds = 4 I_1(phi).
    """
    if not path.admissible:
        raise DomainError("optimal_drift needs an admissible path")
    tau, a, b = _interval_coeffs(path)
    xg, wg = np.polynomial.legendre.leggauss(order)
    s_all, w_all, k_all = [], [], []
    for k in range(a.size):
        lo, hi = tau[k], tau[k + 1]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = mid + half * xg
        phi = a[k] + b[k] * t
        D = np.clip(phi * phi - 4 * t * t, 0.0, None)
        kv = (np.sqrt(D) - a[k]) / (2 * t * t)
        s_all.append(t * t)
        w_all.append(half * wg * 2 * t)  # ds = 2 tau dtau
        k_all.append(kv)
    return np.concatenate(s_all), np.concatenate(w_all), np.concatenate(k_all)


def drift_norm_sq(path: DiscretizedPath, order: int = 5) -> float:
    _, w, k = optimal_drift(path, order)
    return float(np.sum(w * k * k))


def barrier_segment(q: float, y: float, knots: int = 2000):
    """Cheapest way to reach y at time q: ride the barrier, then leave it
    tangentially.  Returns (rate, path on [0, q], t_star)."""
    if not 0 < q < 1:
        raise DomainError("q must lie in (0,1)")
    if y < 2 * math.sqrt(q) - 1e-15:
        raise DomainError("barrier_segment needs y >= 2 sqrt(q)")
    y = max(y, 2 * math.sqrt(q))
    rate = rate_I1(y / math.sqrt(q))
    rt = 0.5 * (y - math.sqrt(max(y * y - 4 * q, 0.0)))
    t_star = rt * rt
    n1 = max(2, knots // 2)
    t1 = np.linspace(0.0, t_star, n1)
    if t_star < q:
        t2 = np.linspace(math.sqrt(t_star), math.sqrt(q), knots - n1 + 1)[1:] ** 2
        t2[-1] = q
        times = np.concatenate([t1, t2])
    else:
        times = t1
        times[-1] = q
    vals = np.where(times <= t_star, 2 * np.sqrt(times), times / rt + rt)
    vals[0] = 0.0
    return rate, DiscretizedPath(times, vals), t_star


def _uq(g, s):
    return g + math.sqrt(max(g * g - 4 * s, 0.0))


def linear_segment(x: float, y: float, q: float):
    """Straight path from (q, y) to (1, x) and its rate on [q, 1].

    Returns (g, rate_closed, rate_quad) with g a callable.
    """
    if classify_segment(x, y, q) is not Segment.LINEAR:
        raise DomainError("(x, y, q) is not in the linear regime")
    alpha = (x - y) / (1 - q)
    beta = y - alpha * q
    g = lambda t: alpha * t + beta
    ua, ub = _uq(y, q), _uq(x, 1.0)
    closed = 0.25 * (0.5 * alpha * (ub - ua) - 2 * math.log(ub / ua) - 2 * beta * (1 / ub - 1 / ua))

    def f(s):
        gs = alpha * s + beta
        return (alpha - (gs - math.sqrt(max(gs * gs - 4 * s, 0.0))) / (2 * s)) ** 2

    quad, _ = integrate.quad(f, q, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return g, closed, 0.25 * quad


class Segment(enum.Enum):
    BARRIER_TOUCH = "barrier_touch"
    LINEAR = "linear"


def classify_segment(x: float, y: float, q: float) -> Segment:
    """Which shape the optimal path takes on [q, 1] (y is the value at q)."""
    if not 0 < q < 1:
        raise DomainError("q must lie in (0,1)")
    if x < 2:
        raise DomainError("x must be >= 2")
    rq = math.sqrt(q)
    if y < 2 * rq:
        raise DomainError("y below the barrier at time q")
    if y == 2 * rq:
        return Segment.BARRIER_TOUCH
    if y >= 1 + q:
        return Segment.LINEAR
    w = 0.5 * (y + math.sqrt(y * y - 4 * q))
    return Segment.LINEAR if x > w + 1 / w else Segment.BARRIER_TOUCH


def contracted_rate(x: float, y: float, q: float, ell: int = 1):
    """ell * Jbar(x, y; q), the joint rate of (lambda(1), lambda(q))."""
    if not 0 < q < 1:
        raise DomainError("q must lie in (0,1)")
    if x < 2 or y < 2 * math.sqrt(q):
        return INFINITE
    head = rate_I1(y / math.sqrt(q))
    if classify_segment(x, y, q) is Segment.BARRIER_TOUCH:
        tail = rate_I1(x)
    else:
        tail = linear_segment(x, y, q)[1]
    return ell * (head + tail)


def pair_rate_via_paths(p: int, r: float, ell: int, x: float, y: float):
    """GOE pair rate obtained from the two-time contraction, q = |r|^{2p-4}."""
    q = abs(r) ** (2 * p - 4)
    if x < 2 or y < 2:
        return INFINITE
    if q == 0:
        return ell * (rate_I1(x) + rate_I1(y))
    return contracted_rate(x, math.sqrt(q) * y, q, ell)


def vv_classify(x: float, y: float, q: float) -> Segment:
    """Same classification via v(x) v(y') against 1/sqrt(q), y' = y / sqrt(q)."""
    yy = y / math.sqrt(q)
    if yy <= 2:
        return Segment.BARRIER_TOUCH
    return Segment.LINEAR if v_map(x) * v_map(yy) > 1 / math.sqrt(q) else Segment.BARRIER_TOUCH


def knot_grid(q: float, knots: int = 50):
    """Knots on [0, 1] containing q, spread uniformly in sqrt(t) on each side."""
    n1 = max(3, int(round(knots * math.sqrt(q))))
    n2 = knots - n1 + 1
    a = np.linspace(0.0, math.sqrt(q), n1) ** 2
    b = np.linspace(math.sqrt(q), 1.0, n2)[1:] ** 2
    t = np.concatenate([a, b])
    t[n1 - 1] = q
    t[-1] = 1.0
    return t, n1 - 1


def discrete_path_minimum(x: float, y: float, q: float, ell: int = 1, knots: int = 50,
                          order: int = 5):
    """Minimise the path functional over paths on a fixed knot grid.

    The values at t = q and t = 1 are pinned to y and x; the first interior
    knot sits on the barrier (any other slope from 0 costs +inf).  Box
    constraints keep every knot above the barrier, so each iterate is an
    admissible path.  Returns (rate, path); the rate is re-evaluated with
    adaptive quadrature.
    """
    from scipy import optimize

    t, iq = knot_grid(q, knots)
    floor = 2 * np.sqrt(t)
    pinned = {0: 0.0, 1: floor[1], iq: y, t.size - 1: x}
    free = np.array([k for k in range(t.size) if k not in pinned])

    def assemble(z):
        v = np.empty(t.size)
        for k, val in pinned.items():
            v[k] = val
        v[free] = z
        return v

    # start from the closed-form optimiser shape: barrier, then straight lines
    rt = 0.5 * (y - math.sqrt(max(y * y - 4 * q, 0.0)))
    ts = rt * rt
    start = np.where(t <= ts, floor, t / rt + rt)
    tail = y + (x - y) * (t - q) / (1 - q)
    start = np.where(t > q, np.maximum(tail, floor), start)
    z0 = np.maximum(start[free], floor[free])

    def obj(z):
        val = path_rate(DiscretizedPath(t, assemble(z)), 1, order)
        return 1e6 if val is INFINITE else val

    bounds = [(floor[k], None) for k in free]
    res = optimize.minimize(obj, z0, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": 5000, "ftol": 1e-13, "gtol": 1e-10,
                                     "maxfun": 200000})
    path = DiscretizedPath(t, assemble(np.maximum(res.x, floor[free])))
    return ell * path_rate_adaptive(path, 1), path
