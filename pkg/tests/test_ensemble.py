import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import hyp1f1

from pspin_saddles import (DomainError, EmpiricalMeasure, ModelParams, SeedSpec,
                           det_correlation_check, dyson_simulate,
                           empirical_measure_distance, index_diagnostics,
                           kacrice_moment_estimate, sample_goe, sigma_ell, sample_hessian_pair,
                           tail_rate_estimate)
from pspin_saddles.ensemble import (_pair_blocks, index_transfer_fraction, interlaces,
                                    log_spherical_integral, sample_goe_pair,
                                    semicircle_quantiles, signature, stream, tail_trend_ok)
from pspin_saddles.scalar import gamma_p, rate_I1

pytestmark = pytest.mark.filterwarnings("ignore:Sigma_Q")


def within(est, samples, expect, k=3.0, atol=1e-12):
    # atol absorbs rounding where the target is zero up to cancellation
    se = np.std(samples, ddof=1) / math.sqrt(samples.size)
    return abs(est - expect) <= k * se + atol


class TestStreams:
    def test_same_key_same_draws(self):
        a = stream(11, 3, 4).standard_normal(5)
        b = stream(11, 3, 4).standard_normal(5)
        assert np.array_equal(a, b)

    def test_keys_differ(self):
        a = stream(11, 3, 4).standard_normal(5)
        assert not np.array_equal(a, stream(11, 3, 5).standard_normal(5))
        assert not np.array_equal(a, stream(12, 3, 4).standard_normal(5))

    def test_seed_spec(self):
        spec = SeedSpec(2 ** 64 - 1, 10)
        assert np.array_equal(spec.stream(1).random(3), stream(2 ** 64 - 1, 1).random(3))
        with pytest.raises(DomainError):
            SeedSpec(-1)
        with pytest.raises(DomainError):
            SeedSpec(1, 0)


class TestGOE:
    def test_variances(self):
        n = 10
        G = sample_goe(n, stream(1, 0), size=100_000)
        off = G[:, 0, 1]
        diag = G[:, 3, 3]
        assert within(np.mean(off ** 2), off ** 2, 1 / n)
        assert within(np.mean(diag ** 2), diag ** 2, 2 / n)
        assert np.array_equal(G, np.swapaxes(G, 1, 2))

    def test_pair_cross_covariance(self):
        n = 6
        pr = sample_goe_pair(3, 0.5, n, stream(1, 1), size=20_000)
        # 15 off-diagonal entry pairs per draw
        iu = np.triu_indices(n, 1)
        prod = (pr.G1[:, iu[0], iu[1]] * pr.G2[:, iu[0], iu[1]]).ravel()
        assert within(prod.mean(), prod, 0.5 / n)
        marg = (pr.G1[:, iu[0], iu[1]] ** 2).ravel()
        assert within(marg.mean(), marg, 1 / n)

    def test_pair_independent_at_zero(self):
        n = 6
        pr = sample_goe_pair(3, 0.0, n, stream(1, 2), size=20_000)
        iu = np.triu_indices(n, 1)
        prod = (pr.G1[:, iu[0], iu[1]] * pr.G2[:, iu[0], iu[1]]).ravel()
        assert within(prod.mean(), prod, 0.0)

    def test_odd_p_negative_r_flips_shared_part(self):
        pr = sample_goe_pair(3, -0.5, 5, stream(1, 3), size=20_000)
        prod = pr.G1[:, 0, 1] * pr.G2[:, 0, 1]
        assert within(prod.mean(), prod, -0.5 / 5)


class TestHessianPair:
    def test_shapes_and_minors(self):
        s = sample_hessian_pair(3, 0.4, -1.9, -2.0, 12, stream(2, 0))
        for i in (1, 2):
            M, G, Z, Q, ub, mc = s.shifted(i)
            assert M.shape == (11, 11) and G.shape == (10, 10)
            assert np.array_equal(M[:-1, :-1], G)
            assert np.array_equal(M, M.T)
            assert M[-1, -1] == pytest.approx(Q - ub + mc, abs=1e-14)
            assert np.allclose(M[:-1, -1], Z, atol=0)
        assert s.u_bar[0] == pytest.approx(gamma_p(3) * math.sqrt(12) * -1.9 / math.sqrt(11))

    def test_coupling_exact(self):
        s = sample_hessian_pair(3, 0.5, -1.9, -2.0, 30, stream(2, 1), coupled=True)
        assert s.coupling_residual(1) == 0.0
        assert s.coupling_residual(2) == 0.0
        X, T = s.coupled_X[0]
        assert np.array_equal(T[:-1, :-1], np.zeros((28, 28)))
        with pytest.raises(DomainError):
            sample_hessian_pair(3, 0.5, -1.9, -2.0, 30, stream(2, 1)).coupling_residual(1)

    @pytest.mark.parametrize("p", [3, 4])
    @pytest.mark.parametrize("r", [0.3, -0.3, 0.7, -0.7])
    def test_block_covariances(self, p, r):
        N = 8
        n = N - 1
        cb, ((X1, T1), (X2, T2)) = _pair_blocks(p, r, N, stream(3, p, int(10 * r) + 10),
                                                size=100_000)
        M1, M2 = X1 + T1, X2 + T2
        k = n * p * (p - 1)
        checks = [
            (M1[:, 0, -1] ** 2 * k, cb.sigma_Z[0, 0]),
            (M1[:, 0, -1] * M2[:, 0, -1] * k, cb.sigma_Z[0, 1]),
            (M1[:, -1, -1] ** 2 * k, cb.sigma_Q[0, 0]),
            (M1[:, -1, -1] * M2[:, -1, -1] * k, cb.sigma_Q[0, 1]),
            (M1[:, 0, 1] * M2[:, 0, 1] * n, math.copysign(1, r) ** p * abs(r) ** (p - 2)),
            (M1[:, 0, 0] * M2[:, 0, 0] * n / 2, math.copysign(1, r) ** p * abs(r) ** (p - 2)),
        ]
        for samples, expect in checks:
            assert within(samples.mean(), samples, expect), expect

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_hessian_pair(3, 1.0, -2, -2, 10, stream(0))
        with pytest.raises(DomainError):
            sample_hessian_pair(3, 0.1, -2, -2, 3, stream(0))


class TestIndexAlgebra:
    def test_lazutkin_two_by_two(self):
        S = np.array([[1.0, 2.0], [2.0, 1.0]])
        assert signature(S) == 0
        assert signature(S) == signature(S[:1, :1]) + np.sign(1 - 4)

    def test_interlacing_example(self):
        assert interlaces(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0]))
        assert not interlaces(np.array([1.0, 2.0, 3.0]), np.array([0.5, 2.0]))
        with pytest.raises(DomainError):
            interlaces(np.array([1.0, 2.0]), np.array([1.0, 2.0]))

    def test_diagnostics_exact_identities(self):
        fails = 0
        for k in range(200):
            s = sample_hessian_pair(3, 0.3, -1.9, -2.2, 40, stream(4, k))
            for d in index_diagnostics(s):
                fails += (not d["interlaced"]) + (not d["lazutkin"])
        assert fails == 0

    def test_batched_matches_single(self):
        out = index_transfer_fraction(4, -0.4, -1.95, -2.1, 60, 300, 9)
        assert out["interlace_ok"] == out["checks"] == 600
        assert out["lazutkin_ok"] == 600

    @pytest.mark.slow
    def test_transfer_fraction(self):
        u = -2.5 / gamma_p(3)
        out = index_transfer_fraction(3, 0.3, u, u, 200, 1000, 12)
        assert out["fraction"] >= 0.99
        assert out["x_sign_agrees"] == out["checks"]
        assert out["lazutkin_ok"] == out["interlace_ok"] == out["checks"]

    @pytest.mark.slow
    def test_local_law(self):
        N = 400
        u = -2.5 / gamma_p(3)
        devs = []
        for k in range(500):
            s = sample_hessian_pair(3, 0.3, u, u, N, stream(5, k))
            devs += [d["resolvent_deviation"] for d in index_diagnostics(s)]
        assert np.mean(np.array(devs) <= 5 * N ** (-0.4)) >= 0.99


class TestDyson:
    def test_edges(self):
        vals = np.array([dyson_simulate(200, [0.25, 1.0], stream(6, k)) for k in range(200)])
        assert abs(vals[:, 1, -1].mean() - 2.0) <= 0.1
        assert abs(vals[:, 0, -1].mean() - 1.0) <= 0.1
        assert np.all(np.diff(vals, axis=2) >= 0)

    def test_marginal_is_goe(self):
        # the trace of H(1) is N(0, 2) for any n
        tr = np.array([dyson_simulate(4, [0.3, 0.7, 1.0], stream(7, k))[-1].sum()
                       for k in range(4000)])
        assert within(np.mean(tr ** 2), tr ** 2, 2.0)

    @pytest.mark.parametrize("grid", [[0.0, 1.0], [0.5, 0.4], [0.5, 1.2], []])
    def test_bad_grid(self, grid):
        with pytest.raises(DomainError):
            dyson_simulate(5, grid, stream(0))


class TestMeasures:
    def test_quantiles_close(self):
        mu = EmpiricalMeasure.from_atoms(semicircle_quantiles(10_000))
        assert empirical_measure_distance(mu) <= 0.01

    def test_point_mass_far(self):
        assert empirical_measure_distance(EmpiricalMeasure.from_atoms([0.0])) >= 0.2
        # the clipped identity alone gives nothing at 0, the hats do the work
        sc_abs = integrate.quad(lambda x: abs(x) * math.sqrt(4 - x * x) / (2 * math.pi), -2, 2)[0]
        assert sc_abs == pytest.approx(8 / (3 * math.pi), abs=1e-10)

    def test_goe_spectra(self):
        d = [empirical_measure_distance(EmpiricalMeasure.from_atoms(
            np.linalg.eigvalsh(sample_goe(400, stream(8, k))))) for k in range(100)]
        assert np.mean(np.array(d) <= 0.05) >= 0.99

    def test_weights(self):
        mu = EmpiricalMeasure.from_atoms([3.0, 1.0, 2.0])
        assert list(mu.atoms) == [1.0, 2.0, 3.0]
        assert mu.weights.sum() == pytest.approx(1.0)
        with pytest.raises(DomainError):
            EmpiricalMeasure.from_atoms([])
        with pytest.raises(DomainError):
            empirical_measure_distance(mu, "marchenko-pastur")


class TestSphericalIntegral:
    @pytest.mark.parametrize("n,a", [(3, 1.5), (3, -4.0), (10, 7.0), (50, 20.0)])
    def test_single_direction(self, n, a):
        c = np.zeros(n)
        c[0] = a
        # v_1^2 ~ Beta(1/2, (n-1)/2)
        assert log_spherical_integral(c) == pytest.approx(math.log(hyp1f1(0.5, n / 2, a)),
                                                          abs=1e-9)

    def test_archimedes(self):
        a = 2.3
        oracle = integrate.quad(lambda t: math.exp(a * t * t), 0, 1)[0]
        assert log_spherical_integral([a, 0, 0]) == pytest.approx(math.log(oracle), abs=1e-10)

    def test_shift(self):
        c = np.array([0.3, -1.0, 2.0, 0.5])
        assert log_spherical_integral(c + 1.7) == pytest.approx(
            log_spherical_integral(c) + 1.7, abs=1e-9)

    def test_monte_carlo(self):
        c = np.array([3.0, 1.0, -2.0, 0.0, 0.5])
        v = stream(9).standard_normal((200_000, 5))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        w = np.exp((v * v) @ c)
        assert within(w.mean(), w, math.exp(log_spherical_integral(c)))


class TestTailRates:
    def test_rows_and_censoring(self):
        rows = tail_rate_estimate(3, 0.0, 1, 2.6, 2.6, (10, 20), 200, 1)
        assert [r["N"] for r in rows] == [10, 20]
        for r in rows:
            assert r["target"] == pytest.approx(2 * rate_I1(2.6), abs=1e-12)
            if r["censored"]:
                assert r["estimate"] is None and r["gap"] is None

    def test_spike_agrees_with_direct(self):
        d = tail_rate_estimate(3, 0.5, 1, 2.2, 2.2, (20,), 40_000, 3)[0]
        s = tail_rate_estimate(3, 0.5, 1, 2.2, 2.2, (20,), 400, 3, method="spike")[0]
        assert not d["censored"] and not s["censored"]
        assert abs(d["estimate"] - s["estimate"]) <= 3 * math.hypot(d["se"], s["se"])

    def test_deterministic(self):
        a = tail_rate_estimate(4, -0.5, 1, 2.2, 2.3, (12,), 100, 5, method="spike")
        b = tail_rate_estimate(4, -0.5, 1, 2.2, 2.3, (12,), 100, 5, method="spike")
        assert a == b

    def test_trend_helper(self):
        row = lambda g, se=0.01: dict(censored=False, gap=g, se=se)
        assert tail_trend_ok([row(0.3), row(0.2), row(0.1)])
        assert not tail_trend_ok([row(0.3), row(0.2), row(0.3)])
        assert not tail_trend_ok([row(0.5), row(0.4), row(0.3)])
        assert not tail_trend_ok([dict(censored=True)])

    def test_domain(self):
        with pytest.raises(DomainError):
            tail_rate_estimate(3, 0.0, 1, 1.9, 2.5, (10,), 10, 1)
        with pytest.raises(DomainError):
            tail_rate_estimate(3, 0.0, 1, 2.0, 2.5, (10,), 10, 1, method="spike")
        with pytest.raises(DomainError):
            tail_rate_estimate(3, 0.0, 1, 2.5, 2.5, (10,), 10, 1, method="other")

    @pytest.mark.slow
    def test_trend_uncoupled(self):
        rows = tail_rate_estimate(3, 0.0, 1, 2.2, 2.2, (30, 60, 90), 1000, 3, method="spike")
        assert tail_trend_ok(rows)

    @pytest.mark.slow
    def test_edge_rate_small(self):
        # known to fail at N = 60; the edge probability tends to P(TW_1 > 0), not 1/2
        row = tail_rate_estimate(3, 0.0, 1, 2.0, 2.0, (60,), 20_000, 4)[0]
        assert row["estimate"] <= 0.05

    @pytest.mark.slow
    def test_index_prefactor_ratio(self):
        # known to fail: the ell = 2 joint rate at N = 60 is far from twice ell = 1
        one = tail_rate_estimate(3, 0.0, 1, 2.2, 2.2, (60,), 1000, 6, method="spike")[0]
        two = tail_rate_estimate(3, 0.0, 2, 2.2, 2.2, (60,), 1000, 6, method="spike")[0]
        assert not two["censored"]
        assert 1.5 <= two["estimate"] / one["estimate"] <= 2.5


class TestKacRice:
    SMALL = dict(N=10, r_grid=np.linspace(-0.6, 0.6, 5), replicas=50, seed=3)

    def test_threads_identical(self):
        prm = ModelParams(3, 0)
        a = kacrice_moment_estimate(prm, (-1.65, -1.64), threads=1, **self.SMALL)
        b = kacrice_moment_estimate(prm, (-1.65, -1.64), threads=4, **self.SMALL)
        assert a.log_second_per_N == b.log_second_per_N
        assert np.array_equal(a.r_profile, b.r_profile)
        assert a.log_first_per_N == b.log_first_per_N

    def test_result_fields(self):
        prm = ModelParams(3, 1)
        res = kacrice_moment_estimate(prm, (-1.648, -1.64), **self.SMALL)
        assert not res.censored
        assert res.target == pytest.approx(2 * sigma_ell(prm, -1.64), abs=1e-14)
        assert math.isfinite(res.log_second_per_N)
        assert res.r_profile.shape == (5,)
        assert res.diagnostics["c_coefficient"] == 1.75

    @pytest.mark.parametrize("kw", [dict(B=(-1.7, -1.64)), dict(B=(-1.65, -1.6)),
                                    dict(N=201), dict(r_grid=np.linspace(-0.5, 0.5, 4)),
                                    dict(r_grid=np.array([-0.5, 0.1, 0.5]))])
    def test_domain(self, kw):
        args = dict(self.SMALL, B=(-1.65, -1.64)) | kw
        B = args.pop("B")
        with pytest.raises(DomainError):
            kacrice_moment_estimate(ModelParams(3, 0), B, **args)


class TestDetCorrelation:
    def test_trivial_endpoints(self):
        rows = det_correlation_check(3, [0.0, 0.5, 1.0], 4, 2000, 1)
        assert rows[0]["lhs"] == 0.0 and rows[0]["rhs"] == 0.0
        assert rows[2]["lhs"] == pytest.approx(rows[2]["rhs"], abs=1e-9)
        assert rows[0]["status"] == rows[2]["status"] == "holds"

    def test_domain(self):
        with pytest.raises(DomainError):
            det_correlation_check(3, [0.0, 0.5], 4, 10, 1)
        with pytest.raises(DomainError):
            det_correlation_check(3, [0.0, 1.0], 13, 10, 1)

    @pytest.mark.slow
    def test_chord_bound_mid(self):
        # known to fail: the chord bound is violated at rho = 0.5 for p = 3
        rows = det_correlation_check(3, [0.0, 0.5, 1.0], 8, 10 ** 6, 2024)
        assert rows[1]["status"] == "holds"
