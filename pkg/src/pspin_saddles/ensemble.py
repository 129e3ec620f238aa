"""Monte Carlo engine: correlated GOE pairs, conditional Hessian pairs,
Dyson paths, index diagnostics, tail rates and Kac-Rice moment estimates.

Every random draw comes from a Philox stream keyed by
(master_seed, *key), so results do not depend on scheduling.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, hyp1f1, logsumexp

from .complexity import (ModelParams, c_coefficient, frak_S, sigma_derivative, sigma_ell,
                         threshold_E_ell)
from .covariance import covariance_bundle, log_C_N, log_F, log_G, log_omega
from .errors import DomainError, NumericalError, as_float
from .pair_rate import rect_min
from .scalar import stieltjes_arr, threshold_E_inf, v_map


# ---------------------------------------------------------------- streams

@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replica_count: int = 1

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if self.replica_count < 1:
            raise DomainError("replica_count must be positive")

    def stream(self, *key: int) -> np.random.Generator:
        return stream(self.master_seed, *key)


def stream(master_seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _gamma(p: int) -> float:
    # valid for p = 2 as well, which the normalisation tests use
    return math.sqrt(p / (p - 1))


# ---------------------------------------------------------------- GOE

def sample_goe(n: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Symmetric Gaussian matrix with entry variance (1 + delta_ij)/n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    shape = (n, n) if size is None else (int(size), n, n)
    a = rng.standard_normal(shape)
    return (a + np.swapaxes(a, -1, -2)) / math.sqrt(2 * n)


@dataclass
class GOEPairSample:
    n: int
    r: float
    G1: np.ndarray
    G2: np.ndarray
    shared_part: np.ndarray


def sample_goe_pair(p: int, r: float, n: int, rng: np.random.Generator, size=None,
                    scale: float = 1.0) -> GOEPairSample:
    """Two GOE_n matrices sharing a component of weight |r|^{p-2}.

    ``scale`` multiplies all three building blocks; pass
    sqrt(n/(n+1)) to get minors of GOE_{n+1}.
    """
    if not abs(r) < 1:
        raise DomainError("|r| must be < 1")
    s = abs(r) ** (p - 2)
    g0, g1, g2 = (scale * sample_goe(n, rng, size) for _ in range(3))
    sg = math.copysign(1.0, r) ** p if r != 0 else 1.0
    G1 = math.sqrt(1 - s) * g1 + sg * math.sqrt(s) * g0
    G2 = math.sqrt(1 - s) * g2 + math.sqrt(s) * g0
    return GOEPairSample(n, r, G1, G2, g0)


# ---------------------------------------------------------------- Hessian pairs

def _split_sqrt(S: np.ndarray, p: int, r: float, name: str):
    """Coefficients (a, b, sign) with a^2 + b^2 = S11/(p(p-1)), b^2 sign = S12/(p(p-1))."""
    d = S[0, 0] - abs(S[0, 1])
    if d < 0:
        if d < -1e-12 * max(1.0, abs(S[0, 0])):
            raise NumericalError(f"{name} not positive semidefinite at r={r}")
        warnings.warn(f"{name}: clipped eigenvalue {d:.3g} to 0 at r={r}")
        d = 0.0
    k = p * (p - 1)
    return math.sqrt(d / k), math.sqrt(abs(S[0, 1]) / k), (1.0 if S[0, 1] >= 0 else -1.0)


@dataclass
class HessianPairSample:
    N: int
    p: int
    r: float
    u1: float
    u2: float
    u_bar: tuple
    M1_shifted: np.ndarray
    M2_shifted: np.ndarray
    G1_shifted: np.ndarray
    G2_shifted: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    Q1: float
    Q2: float
    m_circ_1: float
    m_circ_2: float
    coupled_X: tuple | None = None
    M_unshifted: tuple | None = None

    def coupling_residual(self, i: int) -> float:
        """max |M_i - X_i - T_i| for the unshifted matrices (coupled mode only)."""
        if self.coupled_X is None:
            raise DomainError("sample was drawn without the coupling")
        X, T = self.coupled_X[i - 1]
        return float(np.max(np.abs(self.M_unshifted[i - 1] - (X + T))))

    def shifted(self, i: int):
        """(M, G, Z, Q, u_bar, m_circ) for matrix i in {1, 2}."""
        if i == 1:
            return (self.M1_shifted, self.G1_shifted, self.Z1, self.Q1, self.u_bar[0],
                    self.m_circ_1)
        return (self.M2_shifted, self.G2_shifted, self.Z2, self.Q2, self.u_bar[1],
                self.m_circ_2)


def _pair_blocks(p, r, N, rng, size=None):
    """Raw blocks (X_1, X_2, T_1, T_2) with M_i = X_i + T_i, batched if size given."""
    n = N - 1
    cb = covariance_bundle(p, r)
    s = abs(r) ** (p - 2)
    sg = math.copysign(1.0, r) if r != 0 else 1.0
    xs = [sample_goe(n, rng, size) for _ in range(3)]
    az, bz, sz = _split_sqrt(cb.sigma_Z, p, r, "Sigma_Z")
    aq, bq, sq = _split_sqrt(cb.sigma_Q, p, r, "Sigma_Q")
    # GOE diagonals have twice the off-diagonal variance, hence the 1/sqrt(2) on Q
    aq, bq = aq / math.sqrt(2), bq / math.sqrt(2)
    out = []
    for i in (1, 2):
        X = math.sqrt(1 - s) * xs[i] + (sg ** (i * p)) * math.sqrt(s) * xs[0]
        Z = az * xs[i][..., :-1, -1] + sz ** i * bz * xs[0][..., :-1, -1]
        Q = aq * xs[i][..., -1, -1] + sq ** i * bq * xs[0][..., -1, -1]
        T = np.zeros_like(X)
        T[..., :-1, -1] = Z - X[..., :-1, -1]
        T[..., -1, :-1] = Z - X[..., -1, :-1]
        T[..., -1, -1] = Q - X[..., -1, -1]
        out.append((X, T))
    return cb, out


def sample_hessian_pair(p: int, r: float, u1: float, u2: float, N: int,
                        rng: np.random.Generator, coupled: bool = False) -> HessianPairSample:
    """Normalised conditional Hessians at two critical points with overlap r.

    u1, u2 are energies per site (field values sqrt(N) u_i).  The shift is
    u_bar_i = gamma_p sqrt(N) u_i / sqrt(N-1) and the last diagonal entry
    carries m_i / sqrt((N-1) p (p-1)).
    """
    if not abs(r) < 1:
        raise DomainError("|r| must be < 1")
    if N < 4:
        raise DomainError("N must be >= 4")
    cb, blocks = _pair_blocks(p, r, N, rng)
    n = N - 1
    U = math.sqrt(N) * np.array([u1, u2], dtype=float)
    ub = _gamma(p) * U / math.sqrt(n)
    c1, c2 = cb.m_coefficients()
    norm = math.sqrt(n * p * (p - 1))
    mc = (float(c1 @ U) / norm, float(c2 @ U) / norm)
    mats = []
    for (X, T), b, m in zip(blocks, ub, mc):
        M = X + T
        Ms = M - b * np.eye(n)
        Ms[-1, -1] += m
        mats.append((M, Ms))
    coupled_X = tuple((X, T) for X, T in blocks) if coupled else None
    return HessianPairSample(
        N=N, p=p, r=r, u1=u1, u2=u2, u_bar=(float(ub[0]), float(ub[1])),
        M1_shifted=mats[0][1], M2_shifted=mats[1][1],
        G1_shifted=mats[0][1][:-1, :-1].copy(), G2_shifted=mats[1][1][:-1, :-1].copy(),
        Z1=mats[0][0][:-1, -1].copy(), Z2=mats[1][0][:-1, -1].copy(),
        Q1=float(mats[0][0][-1, -1]), Q2=float(mats[1][0][-1, -1]),
        m_circ_1=mc[0], m_circ_2=mc[1], coupled_X=coupled_X,
        M_unshifted=(mats[0][0], mats[1][0]) if coupled else None)


def signature(S: np.ndarray) -> int:
    ev = np.linalg.eigvalsh(np.asarray(S, dtype=float))
    return int(np.sum(ev > 0) - np.sum(ev < 0))


def interlaces(outer: np.ndarray, inner: np.ndarray, tol: float = 0.0) -> bool:
    """Cauchy interlacing mu_j <= lambda_j <= mu_{j+1} for sorted spectra."""
    mu, la = np.sort(outer), np.sort(inner)
    if mu.size != la.size + 1:
        raise DomainError("inner spectrum must have one fewer eigenvalue")
    return bool(np.all(mu[:-1] <= la + tol) and np.all(la <= mu[1:] + tol))


def index_diagnostics(sample: HessianPairSample):
    """Per-matrix index report; see the module docstring for the identities used."""
    rep = []
    for i in (1, 2):
        M, G, Z, Q, ub, mc = sample.shifted(i)
        mu = np.linalg.eigvalsh(M)
        lam, V = np.linalg.eigh(G)
        if np.min(np.abs(lam)) < 1e-12:
            raise NumericalError("singular minor, resample")
        w = (V.T @ Z) ** 2
        # the minor of M_shifted is G_shifted, so the Schur complement is
        X = Q - ub + mc - float(np.sum(w / lam))
        ind_M, ind_G = int(np.sum(mu < 0)), int(np.sum(lam < 0))
        tol = 1e-10 * max(1.0, float(np.max(np.abs(mu))))
        zn = float(np.linalg.norm(Z))
        dev = abs(float(np.sum(w / lam)) / zn ** 2 - float(stieltjes_arr(ub))) if zn else math.nan
        rep.append(dict(index_M=ind_M, index_G=ind_G, interlaced=interlaces(mu, lam, tol),
                        X=X, lazutkin=(ind_M == ind_G + (1 if X < 0 else 0)),
                        resolvent_deviation=dev))
    return rep


def index_transfer_fraction(p, r, u1, u2, N, replicas, seed, batch: int = 100):
    """Fraction of replicas with ind(M_i) = ind(G_i) for both i, plus exactness counts.

    Batched version of index_diagnostics used by the acceptance runs.
    """
    n = N - 1
    U = math.sqrt(N) * np.array([u1, u2])
    ub = _gamma(p) * U / math.sqrt(n)
    same = lazy = inter = 0
    xpos_agree = 0
    done = 0
    chunk = 0
    while done < replicas:
        k = min(batch, replicas - done)
        cb, blocks = _pair_blocks(p, r, N, stream(seed, 7, chunk), size=k)
        c1, c2 = cb.m_coefficients()
        norm = math.sqrt(n * p * (p - 1))
        ok_all = np.ones(k, bool)
        for (X, T), b, c in zip(blocks, ub, (c1, c2)):
            M = X + T
            M = M - b * np.eye(n)
            M[:, -1, -1] += float(c @ U) / norm
            mu = np.linalg.eigvalsh(M)
            lam, V = np.linalg.eigh(M[:, :-1, :-1])
            w = np.einsum("kji,kj->ki", V, M[:, :-1, -1]) ** 2
            Xs = M[:, -1, -1] - np.sum(w / lam, axis=1)
            iM, iG = np.sum(mu < 0, axis=1), np.sum(lam < 0, axis=1)
            tol = 1e-10 * np.maximum(1.0, np.max(np.abs(mu), axis=1))[:, None]
            inter += int(np.sum(np.all(mu[:, :-1] <= lam + tol, axis=1)
                                & np.all(lam <= mu[:, 1:] + tol, axis=1)))
            lazy += int(np.sum(iM == iG + (Xs < 0)))
            eq = iM == iG
            xpos_agree += int(np.sum(eq == (Xs > 0)))
            ok_all &= eq
        same += int(np.sum(ok_all))
        done += k
        chunk += 1
    return dict(fraction=same / replicas, interlace_ok=inter, lazutkin_ok=lazy,
                x_sign_agrees=xpos_agree, checks=2 * replicas)


# ---------------------------------------------------------------- Dyson / measures

def dyson_simulate(n: int, grid, rng: np.random.Generator) -> np.ndarray:
    """Sorted eigenvalues of the symmetric Brownian motion at the grid times.

    Increments over [t_k, t_{k+1}] are sqrt(dt) times GOE_n, so H(1) is GOE_n.
    """
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] <= 0 or t[-1] > 1 or np.any(np.diff(t) <= 0):
        raise DomainError("grid must be increasing inside (0, 1]")
    H = np.zeros((n, n))
    prev = 0.0
    out = np.empty((t.size, n))
    for k, tk in enumerate(t):
        H = H + math.sqrt(tk - prev) * sample_goe(n, rng)
        out[k] = np.linalg.eigvalsh(H)
        prev = tk
    return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray
    weights: np.ndarray = field(repr=False)

    @classmethod
    def from_atoms(cls, atoms):
        a = np.sort(np.asarray(atoms, dtype=float).ravel())
        if a.size == 0:
            raise DomainError("empty measure")
        return cls(a, np.full(a.size, 1.0 / a.size))


_KNOTS = np.linspace(-3.0, 3.0, 101)


def _test_functions(x):
    x = np.asarray(x, dtype=float)[..., None]
    hats = np.maximum(0.0, 1.0 - np.abs(x - _KNOTS))
    ident = np.clip(x, -1.0, 1.0)
    return np.concatenate([hats, ident], axis=-1)


_SC_CACHE: dict = {}


def _semicircle_moments():
    if "v" not in _SC_CACHE:
        # lambda = 2 cos(theta): smooth weight, kinks handled by dense Gauss nodes
        th, w = np.polynomial.legendre.leggauss(4000)
        th = 0.5 * math.pi * (th + 1)
        w = 0.5 * math.pi * w * (2 / math.pi) * np.sin(th) ** 2
        _SC_CACHE["v"] = w @ _test_functions(2 * np.cos(th))
    return _SC_CACHE["v"]


def empirical_measure_distance(mu: EmpiricalMeasure, reference: str = "semicircle") -> float:
    """Lower bound on the bounded-Lipschitz distance to the semicircle.

    The sup runs over 101 unit hats on [-3, 3] and the clipped identity,
    all 1-Lipschitz and bounded by 1.
    """
    if reference.lower() != "semicircle":
        raise DomainError("only the semicircle reference is available")
    emp = mu.weights @ _test_functions(mu.atoms)
    return float(np.max(np.abs(emp - _semicircle_moments())))


def semicircle_quantiles(n: int) -> np.ndarray:
    """Deterministic quantile atoms of the semicircle law."""
    def cdf(x):
        return 0.5 + (x * math.sqrt(max(4 - x * x, 0.0)) / 4 + math.asin(x / 2)) / math.pi

    qs = (np.arange(n) + 0.5) / n
    return np.array([optimize.brentq(lambda x: cdf(x) - q, -2, 2, xtol=1e-14) for q in qs])


# ---------------------------------------------------------------- tail rates

def log_spherical_integral(c) -> float:
    """log E_v exp(sum_i c_i v_i^2) for v uniform on the unit sphere.

    Bromwich integral Gamma(n/2)/(2 pi i) int e^z prod (z - c_i)^{-1/2} dz
    along the vertical line through the real saddle point.
    """
    c = np.sort(np.asarray(c, dtype=float))
    n = c.size
    if n < 3:
        raise DomainError("need dimension >= 3")
    top = c[-1]
    eps = 1e-14 * max(1.0, abs(top))
    g = optimize.brentq(lambda z: 0.5 * np.sum(1 / (z - c)) - 1, top + eps, top + n / 2 + 1,
                        xtol=1e-14, rtol=1e-15)
    d = g - c

    def f(k):
        return np.exp(-0.5 * np.sum(np.log1p(1j * k / d)))

    # Re(e^{ik} f) split into Fourier-weighted pieces; f decays only like k^{-n/2}
    cos_part, _ = integrate.quad(lambda k: f(k).real, 0, np.inf, weight="cos", wvar=1.0,
                                 limlst=200, epsabs=1e-12)
    sin_part, _ = integrate.quad(lambda k: f(k).imag, 0, np.inf, weight="sin", wvar=1.0,
                                 limlst=200, epsabs=1e-12)
    val = cos_part - sin_part
    if not val > 0:
        raise NumericalError("spherical integral quadrature failed")
    return float(gammaln(n / 2) + g - 0.5 * np.sum(np.log(d)) + math.log(val / math.pi))


def _spike_proposals(p, r, x, y, N, aim=1.0):
    """Mixture components for the spiked sampler.

    The shared GOE draws are X_0, X_1, X_2 with G_1 = a X_1 + sg b X_0 and
    G_2 = a X_2 + b X_0.  A component is a list of spike directions, each a
    map {matrix j: amplitude}.  Spikes aim ``aim/sqrt(N)`` past the
    thresholds so that finite-N outliers land in the rectangle about as often
    as not.
    """
    s = abs(r) ** (p - 2)
    a, b = math.sqrt(1 - s), math.sqrt(s)
    sg = math.copysign(1.0, r) ** p if r != 0 else 1.0
    px, py = v_map(x + aim / math.sqrt(N)), v_map(y + aim / math.sqrt(N))
    comps = [[{1: px / a}, {2: py / a}]]
    if b > 0:
        # one outlier per matrix, each carried by its own draw and X_0 in
        # proportion to their weights
        comps.append([{1: a * px, 0: sg * b * px}, {2: a * py, 0: b * py}])
    # a single direction shared by all three draws, least-norm amplitudes
    A = np.array([[sg * b, a, 0.0], [b, 0.0, a]])
    th = A.T @ np.linalg.solve(A @ A.T, np.array([px, py]))
    comps.append([{j: float(th[j]) for j in range(3) if th[j] != 0}])
    return comps, (a, b, sg)


def _overlap_tilt(dirs, N):
    """Tilt kappa on the squared overlap of two spike directions.

    Drawing the overlap t with density prop. to exp(kappa t^2)(1 - t^2)^{(m-3)/2}
    cancels the cross term of the Gaussian likelihood ratio.  None when the
    directions touch disjoint matrices.
    """
    if len(dirs) != 2:
        return None
    k = 0.5 * N * sum(th * dirs[1][j] for j, th in dirs[0].items() if j in dirs[1])
    return k or None


def _sample_overlap(kappa, m, size, rng, points=20001):
    # inverse CDF on a fine grid; the law can be bimodal when kappa is large
    t = np.linspace(-1, 1, points)[1:-1]
    logd = kappa * t * t + 0.5 * (m - 3) * np.log1p(-t * t)
    d = np.exp(logd - logd.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))])
    return np.interp(rng.random(size) * cdf[-1], cdf, t)


def _log_proposal_ratio(dirs, X, blocks, N):
    """log q/p of one mixture component for one replica."""
    out = -N * len(blocks) * sum(th * th for d in dirs for th in d.values()) / 4
    kappa = _overlap_tilt(dirs, N)
    for blk in blocks:
        if kappa is not None:
            out -= math.log(hyp1f1(0.5, blk.size / 2, kappa))
        for d in dirs:
            B = sum(th * X[j][np.ix_(blk, blk)] for j, th in d.items())
            out += log_spherical_integral(0.5 * N * np.linalg.eigvalsh(B))
    return out


def tail_rate_estimate(p: int, r: float, ell: int, x: float, y: float, N_list, replicas: int,
                       seed: int, min_count: int = 10, batch: int = 2000,
                       method: str = "direct"):
    """Empirical -(1/N) log P(eta_ell^1 >= x, eta_ell^2 >= y) for correlated GOE_N pairs.

    method "direct" counts tail events.  method "spike" plants rank-one spikes
    in random directions in the independent GOE pieces and reweights by the
    exact likelihood ratio.  Rows with fewer than ``min_count`` tail events
    are censored.
    """
    if not (x >= 2 and y >= 2):
        raise DomainError("x, y must be >= 2")
    if method not in ("direct", "spike"):
        raise DomainError(f"unknown method {method!r}")
    if method == "spike" and not (x > 2 and y > 2):
        raise DomainError("spike sampling needs x, y > 2")
    # the rectangle infimum is continuous at the x = 2 edge
    edge = 2 + 1e-12
    target = as_float(rect_min(p, r, ell, max(x, edge), max(y, edge))[1])
    rows = []
    for jN, N in enumerate(N_list):
        if method == "direct":
            w = _direct_tail(p, r, ell, x, y, N, replicas, seed, jN, batch)
        else:
            w = _spike_tail(p, r, ell, x, y, N, replicas, seed, jN, min(batch, 200))
        hits = int(np.count_nonzero(w))
        censored = hits < min_count
        ph = float(np.mean(w))
        est = -math.log(ph) / N if hits else math.inf
        se = float(np.std(w, ddof=1) / math.sqrt(replicas) / ph / N) if hits > 1 else math.inf
        rows.append(dict(N=N, hits=hits, replicas=replicas, method=method,
                         estimate=None if censored else est, se=None if censored else se,
                         censored=censored, target=float(target),
                         gap=None if censored else est - float(target)))
    return rows


def _direct_tail(p, r, ell, x, y, N, replicas, seed, jN, batch):
    out = []
    done = chunk = 0
    while done < replicas:
        k = min(batch, replicas - done)
        pr = sample_goe_pair(p, r, N, stream(seed, 11, jN, chunk), size=k)
        e1 = np.linalg.eigvalsh(pr.G1)[:, -ell]
        e2 = np.linalg.eigvalsh(pr.G2)[:, -ell]
        out.append(((e1 >= x) & (e2 >= y)).astype(float))
        done += k
        chunk += 1
    return np.concatenate(out)


def _spike_tail(p, r, ell, x, y, N, replicas, seed, jN, batch):
    # rank-ell spikes with one direction per coordinate block keep the
    # directions of different blocks orthogonal and the proposal density a
    # product of spherical integrals
    blocks = np.array_split(np.arange(N), ell)
    comps, (a, b, sg) = _spike_proposals(p, r, x, y, N)
    logw = -math.log(len(comps))
    out = []
    done = chunk = 0
    while done < replicas:
        k = min(batch, replicas - done)
        rng = stream(seed, 12, jN, chunk)
        X = [sample_goe(N, rng, k) for _ in range(3)]
        which = rng.integers(len(comps), size=k)
        for m, dirs in enumerate(comps):
            sel = np.flatnonzero(which == m)
            if not sel.size:
                continue
            kappa = _overlap_tilt(dirs, N)
            for blk in blocks:
                us = []
                for d in range(len(dirs)):
                    g = rng.standard_normal((sel.size, blk.size))
                    if d == 1 and kappa is not None:
                        u0 = us[0]
                        g -= np.sum(g * u0, axis=1, keepdims=True) * u0
                        g /= np.linalg.norm(g, axis=1, keepdims=True)
                        t = _sample_overlap(kappa, blk.size, sel.size, rng)[:, None]
                        g = t * u0 + np.sqrt(1 - t * t) * g
                    us.append(g / np.linalg.norm(g, axis=1, keepdims=True))
                for d, u in zip(dirs, us):
                    v = np.zeros((sel.size, N))
                    v[:, blk] = u
                    vv = v[:, :, None] * v[:, None, :]
                    for j, th in d.items():
                        X[j][sel] += th * vv
        e1 = np.linalg.eigvalsh(a * X[1] + sg * b * X[0])[:, -ell]
        e2 = np.linalg.eigvalsh(a * X[2] + b * X[0])[:, -ell]
        hit = (e1 >= x) & (e2 >= y)
        wts = np.zeros(k)
        for i in np.flatnonzero(hit):
            Xi = [M[i] for M in X]
            lq = logsumexp([logw + _log_proposal_ratio(c, Xi, blocks, N) for c in comps])
            wts[i] = math.exp(-lq)
        out.append(wts)
        done += k
        chunk += 1
    return np.concatenate(out)


def tail_trend_ok(rows, final_gap: float = 0.25, slack: float = 2.0):
    """Monotone-toward-target check on the uncensored rows.

    Successive gaps may not grow by more than ``slack`` standard errors.
    """
    good = [r for r in rows if not r["censored"]]
    if not good:
        return False
    for a, b in zip(good, good[1:]):
        if abs(b["gap"]) > abs(a["gap"]) + slack * math.hypot(a["se"], b["se"]):
            return False
    return abs(good[-1]["gap"]) <= final_gap


# ---------------------------------------------------------------- Kac-Rice moments

@dataclass
class KacRiceResult:
    N: int
    log_second_per_N: float
    log_first_per_N: float
    log_first_linearized_per_N: float
    target: float
    r_grid: np.ndarray
    r_profile: np.ndarray
    censored: bool
    diagnostics: dict


def _logdet_terms(lam, w, ub):
    """For sorted minor spectra lam[R, n], weights w[R, n] and shifts ub[K]:
    log|det(G - ub)|, index of G - ub, and sum w / (lam - ub); each [R, K]."""
    d = lam[:, None, :] - ub[None, :, None]
    return (np.sum(np.log(np.abs(d)), axis=2), np.sum(d < 0, axis=2),
            np.sum(w[:, None, :] / d, axis=2))


def _second_moment_node(p, ell, r, N, U, wU, replicas, seed, node, batch):
    """log of int phi_{Sigma_U}(U) E[prod |det M_i| 1{ind = ell}] dU at one r."""
    n = N - 1
    cb = covariance_bundle(p, r)
    s1, s2 = cb.sigma_U_eigs
    c1, c2 = cb.m_coefficients()
    norm = math.sqrt(n * p * (p - 1))
    ub = _gamma(p) * U / math.sqrt(n)
    U1, U2 = U[:, None], U[None, :]
    log_phi = (-0.25 * ((U1 + U2) ** 2 / s1 + (U1 - U2) ** 2 / s2)
               - math.log(2 * math.pi) - 0.5 * math.log(s1 * s2))
    m1 = (c1[0] * U1 + c1[1] * U2) / norm
    m2 = (c2[0] * U1 + c2[1] * U2) / norm
    acc = []
    hits = 0
    done = chunk = 0
    while done < replicas:
        k = min(batch, replicas - done)
        _, blocks = _pair_blocks(p, r, N, stream(seed, 21, node, chunk), size=k)
        parts = []
        for (X, T), m, axis in zip(blocks, (m1, m2), (2, 1)):
            M = X + T
            lam, V = np.linalg.eigh(M[:, :-1, :-1])
            w = np.einsum("kji,kj->ki", V, M[:, :-1, -1]) ** 2
            ld, ind, S = _logdet_terms(lam, w, ub)
            base = (M[:, -1, -1][:, None] - ub[None, :] - S)  # [k, K]
            # Schur variable on the (U1, U2) grid
            if axis == 2:
                Xs = base[:, :, None] + m[None]
                ldG, iG = ld[:, :, None], ind[:, :, None]
            else:
                Xs = base[:, None, :] + m[None]
                ldG, iG = ld[:, None, :], ind[:, None, :]
            ok = (iG + (Xs < 0)) == ell
            parts.append(np.where(ok, ldG + np.log(np.abs(Xs)), -np.inf))
        tot = parts[0] + parts[1]
        hits += int(np.sum(np.isfinite(tot)))
        acc.append(logsumexp(tot, axis=0))
        done += k
        chunk += 1
    inner = logsumexp(np.stack(acc), axis=0) - math.log(replicas)  # [K, K]
    logw = np.log(wU)[:, None] + np.log(wU)[None, :]
    val = logsumexp(inner + log_phi + logw)
    return float(val), hits


def _first_moment(p, ell, N, lo, hi, nodes, replicas, seed, batch):
    n = N - 1
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    wu = 0.5 * (hi - lo) * w
    # last entry is sup B itself, used by the linearised form
    ub = _gamma(p) * np.append(u, hi) * math.sqrt(N / n)
    acc, acc_signed = [], []
    done = chunk = 0
    while done < replicas:
        k = min(batch, replicas - done)
        lam = np.linalg.eigvalsh(sample_goe(n, stream(seed, 31, chunk), size=k))
        d = lam[:, None, :] - ub[None, :, None]
        ld = np.sum(np.log(np.abs(d)), axis=2)
        ind = np.sum(d < 0, axis=2)
        acc.append(logsumexp(np.where(ind == ell, ld, -np.inf), axis=0))
        sign = np.where(ind % 2 == 0, 1.0, -1.0)
        acc_signed.append(logsumexp(ld, b=sign, axis=0, return_sign=True))
        done += k
        chunk += 1
    Edet = logsumexp(np.stack(acc), axis=0) - math.log(replicas)
    pre = log_omega(N) + 0.5 * log_C_N(p, N) + 0.5 * math.log(N / (2 * math.pi))
    logE1 = pre + logsumexp(Edet[:-1] - 0.5 * N * u * u + np.log(wu))
    # signed E det(X - sqrt(N) u_bar) at sup B
    vals = np.stack([a[0][-1] for a in acc_signed])
    sgns = np.stack([a[1][-1] for a in acc_signed])
    lv, sg = logsumexp(vals, b=sgns, return_sign=True)
    return logE1, (float(lv - math.log(replicas)) if sg > 0 else -math.inf), pre


def kacrice_moment_estimate(params: ModelParams, B, N: int, r_grid, replicas: int, seed: int,
                            threads: int = 1, u_nodes: int = 12, first_replicas: int | None = None,
                            f_form: str = "derived", batch: int = 200) -> KacRiceResult:
    """(1/N) log of the Kac-Rice second and first moments for index-ell points in B.

    The second moment integrates over overlaps in r_grid (uniform, odd length,
    Simpson rule).  Energies use Gauss-Legendre nodes on B.
    """
    p, ell = params.p, params.ell
    lo, hi = map(float, B)
    e_inf, e_ell = threshold_E_inf(p), threshold_E_ell(params)
    if not (-e_ell <= lo < hi <= -e_inf):
        raise DomainError("B must lie inside (-E_ell, -E_inf)")
    if N > 200 or N < 4:
        raise DomainError("N must be in [4, 200]")
    r = np.asarray(r_grid, dtype=float)
    if r.size < 3 or r.size % 2 == 0 or np.any(np.abs(r) >= 1):
        raise DomainError("r_grid needs an odd number >= 3 of points inside (-1, 1)")
    if not np.allclose(np.diff(r), r[1] - r[0], rtol=1e-9, atol=1e-12):
        raise DomainError("r_grid must be uniform")

    x, w = np.polynomial.legendre.leggauss(u_nodes)
    uu = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    U = math.sqrt(N) * uu
    wU = math.sqrt(N) * 0.5 * (hi - lo) * w

    def node(j):
        return _second_moment_node(p, ell, float(r[j]), N, U, wU, replicas, seed, j, batch)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        res = list(ex.map(node, range(r.size)))
    inner = np.array([v for v, _ in res])
    hits = [h for _, h in res]
    logr = np.array([N * float(log_G(p, rr)) + log_F(p, rr, f_form) for rr in r]) + inner
    pre2 = log_omega(N) + log_omega(N - 1) + log_C_N(p, N)
    finite = np.isfinite(logr)
    censored = not finite.any()
    if censored:
        log2 = -math.inf
    else:
        shift = float(np.max(logr[finite]))
        log2 = pre2 + shift + math.log(integrate.simpson(np.exp(logr - shift), x=r))

    logE1, log_det_top, pre1 = _first_moment(p, ell, N, lo, hi, u_nodes,
                                             first_replicas or 20 * replicas, seed, 2 * batch)
    slope = sigma_derivative(params, hi)
    lin_int = math.log(-math.expm1(-N * slope * (hi - lo)) / (N * slope))
    log_lin = pre1 - 0.5 * N * hi * hi + log_det_top + lin_int

    return KacRiceResult(
        N=N, log_second_per_N=log2 / N, log_first_per_N=logE1 / N,
        log_first_linearized_per_N=log_lin / N, target=2 * sigma_ell(params, hi),
        r_grid=r, r_profile=(pre2 + logr) / N, censored=censored,
        diagnostics=dict(node_hits=hits, replicas=replicas,
                         c_coefficient=c_coefficient(params), frak_S=frak_S(params, hi)))


# ---------------------------------------------------------------- determinant correlation

def det_correlation_check(p: int, rho_grid, n: int, replicas: int, seed: int,
                          batch: int = 20000, r_max: float = 1 - 1e-4):
    """E[det W_1 det W_2] with W_i = sqrt(N-1) M_i, N - 1 = n, against the chord bound.

    rho = 1 is evaluated at overlap r_max, moved further from 1 while the
    conditional covariances are not positive semidefinite in floating point.
    """
    rho = np.asarray(rho_grid, dtype=float)
    if n > 12 or n < 1:
        raise DomainError("n must be in [1, 12]")
    if rho.min() < 0 or rho.max() > 1 or 0 not in rho or 1 not in rho:
        raise DomainError("rho_grid must lie in [0, 1] and contain 0 and 1")
    N = n + 1
    means, ses = [], []
    used = []
    for j, rh in enumerate(rho):
        r = min(rh ** (2.0 / (p - 2)), r_max)
        while True:
            # back off from 1 until the conditional covariances are usable
            try:
                _pair_blocks(p, r, N, stream(seed, 41, j, 0), size=1)
                break
            except NumericalError:
                if r < 0.9:
                    raise
                r = 1 - 2 * (1 - r)
        used.append(r)
        vals = []
        done = chunk = 0
        while done < replicas:
            k = min(batch, replicas - done)
            _, blocks = _pair_blocks(p, r, N, stream(seed, 41, j, chunk), size=k)
            d = [np.linalg.det(math.sqrt(n) * (X + T)) for X, T in blocks]
            vals.append(d[0] * d[1])
            done += k
            chunk += 1
        v = np.concatenate(vals)
        means.append(float(v.mean()))
        ses.append(float(v.std(ddof=1) / math.sqrt(v.size)))
    i0, i1 = int(np.argmin(rho)), int(np.argmax(rho))
    g0, g1 = means[i0], means[i1]
    rows = []
    for j, rh in enumerate(rho):
        lhs = means[j] - g0
        rhs = float(rh * (g1 - g0))
        # linear combination lhs - rhs of three independent estimates
        se = math.sqrt(ses[j] ** 2 * (j not in (i0, i1)) + ((1 - rh) * ses[i0]) ** 2 * (j != i0)
                       + (rh * ses[i1]) ** 2 * (j != i1))
        excess = lhs - rhs
        need = None
        if excess > 3 * se:
            status = "violated"
        elif 3 * se > abs(rhs) > 0:
            # the band is wider than the bound itself, so the check has no power
            status = "inconclusive"
            need = int(math.ceil(replicas * (3 * se / abs(rhs)) ** 2 * 4))
        else:
            status = "holds"
        rows.append(dict(rho=float(rh), r=used[j], g=means[j], se=ses[j], lhs=lhs, rhs=rhs,
                         band=3 * se, status=status, replicas_needed=need))
    return rows
