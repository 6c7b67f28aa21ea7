import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minority_risk.errors import EmptyMinority, SingularSystem
from minority_risk.moments import IDENTITY, RELU
from minority_risk.sim import (
    GAUSSIAN,
    SPHERE,
    FitResult,
    RfModel,
    Streams,
    TwoGroupDataset,
    aggregate,
    linear_replicate,
    min_norm_ls,
    minority_risk_linear,
    minority_risk_rf_mc,
    rf_features,
    rf_fit_min_norm,
    ridge_weighted,
    run_replicates,
    sample_rf_model,
    sample_sphere,
    sample_two_group,
    signal_pair,
    subsample_majority,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestSphere:
    def test_norms(self):
        X = sample_sphere(50, 37, rng())
        assert np.allclose(np.linalg.norm(X, axis=1), math.sqrt(37), atol=1e-9)

    def test_one_dimensional(self):
        X = sample_sphere(100, 1, rng())
        assert set(np.unique(X)) <= {-1.0, 1.0}

    def test_mean_near_zero(self):
        X = sample_sphere(10**5, 10, rng(1))
        assert np.all(np.abs(X.mean(axis=0)) < 3 * math.sqrt(1 / 10**5))

    def test_isotropic_second_moment(self):
        X = sample_sphere(20000, 8, rng(2))
        assert np.allclose(X.T @ X / 20000, np.eye(8), atol=0.05)


class TestTwoGroup:
    def test_noiseless_shared_signal(self):
        b = rng(3).standard_normal(12)
        data = sample_two_group(40, 12, 0.7, b, b, 0.0, SPHERE, rng(4))
        assert np.allclose(data.y, data.X @ b)

    def test_all_majority(self):
        data = sample_two_group(100, 5, 1.0, np.zeros(5), np.ones(5), 0.1, GAUSSIAN, rng())
        assert np.all(data.g == 1)

    def test_group_fraction(self):
        n = 10**5
        data = sample_two_group(n, 2, 0.8, np.zeros(2), np.zeros(2), 0.0, GAUSSIAN, rng(5))
        assert abs(data.g.mean() - 0.8) < 3 * math.sqrt(0.16 / n)

    def test_responses_follow_group(self):
        b0, b1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        data = sample_two_group(200, 2, 0.5, b0, b1, 0.0, GAUSSIAN, rng(6))
        want = np.where(data.g == 1, data.X[:, 1], data.X[:, 0])
        assert np.allclose(data.y, want)

    def test_noise_level(self):
        b = np.zeros(3)
        data = sample_two_group(20000, 3, 0.5, b, b, 0.5, GAUSSIAN, rng(7))
        assert data.y.std() == pytest.approx(0.5, rel=0.03)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            sample_two_group(10, 3, 0.5, np.zeros(2), np.zeros(3), 0.0, GAUSSIAN, rng())

    def test_streams_are_role_separated(self):
        s = Streams(42, 0)
        a = sample_two_group(30, 4, 0.8, np.ones(4), np.ones(4), 1.0, GAUSSIAN, streams=s)
        b = sample_two_group(30, 4, 0.8, np.ones(4), -np.ones(4), 0.0, GAUSSIAN, streams=s)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.g, b.g)


class TestMinNorm:
    def test_identity(self):
        y = rng().standard_normal(6)
        assert np.allclose(min_norm_ls(np.eye(6), y).coeffs, y)

    def test_single_row(self):
        fit = min_norm_ls(np.array([[1.0, 0.0]]), np.array([2.0]))
        assert np.allclose(fit.coeffs, [2.0, 0.0])
        assert fit.rank == 1

    def test_minimal_among_interpolants(self):
        r = rng(8)
        X = r.standard_normal((30, 60))
        y = r.standard_normal(30)
        fit = min_norm_ls(X, y)
        assert np.allclose(X @ fit.coeffs, y, atol=1e-8)
        assert fit.train_residual <= 1e-8 * np.linalg.norm(y)
        null = np.linalg.svd(X)[2][30:]
        base = np.linalg.norm(fit.coeffs)
        for _ in range(100):
            other = fit.coeffs + null.T @ r.standard_normal(30)
            assert np.allclose(X @ other, y, atol=1e-8)
            assert base <= np.linalg.norm(other)

    def test_ols_when_underparameterized(self):
        r = rng(9)
        X = r.standard_normal((80, 10))
        y = r.standard_normal(80)
        ols = np.linalg.solve(X.T @ X, X.T @ y)
        assert np.allclose(min_norm_ls(X, y).coeffs, ols, atol=1e-10)

    @pytest.mark.parametrize("seed", range(50))
    def test_null_space_orthogonality(self, seed):
        r = rng(100 + seed)
        n, d, k = r.integers(5, 30), r.integers(5, 30), r.integers(1, 5)
        X = r.standard_normal((n, k)) @ r.standard_normal((k, d))
        fit = min_norm_ls(X, r.standard_normal(n))
        assert fit.rank == k
        null = np.linalg.svd(X)[2][k:]
        assert np.all(np.abs(null @ fit.coeffs) <= 1e-8)

    def test_zero_matrix(self):
        fit = min_norm_ls(np.zeros((3, 4)), np.ones(3))
        assert fit.rank == 0 and np.all(fit.coeffs == 0)

    def test_rf_fit_same_contract(self):
        r = rng(10)
        Z = r.standard_normal((20, 50))
        y = r.standard_normal(20)
        assert np.allclose(rf_fit_min_norm(Z, y).coeffs, min_norm_ls(Z, y).coeffs)
        assert np.allclose(rf_fit_min_norm(np.eye(5), y[:5]).coeffs, y[:5])


class TestRidgeWeighted:
    def test_ols_limit(self):
        r = rng(11)
        X = r.standard_normal((100, 8))
        y = r.standard_normal(100)
        g = r.integers(0, 2, 100)
        ols = np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.allclose(ridge_weighted(X, y, g, 0.5, 0.0).coeffs, ols, atol=1e-10)
        assert np.allclose(ridge_weighted(X, y, g, 0.5, 1e-10).coeffs, ols, atol=1e-7)

    @pytest.mark.parametrize("pi_hat", [0.5, 0.2, 0.05])
    def test_ridgeless_collapse(self, pi_hat):
        r = rng(12)
        X = r.standard_normal((40, 120))
        y = r.standard_normal(40)
        g = (r.random(40) < 0.8).astype(int)
        mn = min_norm_ls(X, y).coeffs
        gaps = [np.linalg.norm(ridge_weighted(X, y, g, pi_hat, lam).coeffs - mn) for lam in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert gaps[-1] <= 1e-4
        assert gaps == sorted(gaps, reverse=True)

    def test_heavy_shrinkage(self):
        r = rng(13)
        X = r.standard_normal((60, 10))
        y = r.standard_normal(60)
        g = r.integers(0, 2, 60)
        ols = np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.linalg.norm(ridge_weighted(X, y, g, 0.3, 1e6).coeffs) <= 1e-3 * np.linalg.norm(ols)

    def test_matches_weighted_normal_equations(self):
        """Primal and kernel routes agree with a direct solve."""
        r = rng(14)
        for n, d in ((30, 10), (10, 30)):
            X = r.standard_normal((n, d))
            y = r.standard_normal(n)
            g = r.integers(0, 2, n)
            w = np.where(g == 0, 1 / 0.25, 1 / 0.75)
            lam = 0.3
            want = np.linalg.solve(X.T @ (w[:, None] * X) / n + lam * np.eye(d), X.T @ (w * y) / n)
            assert np.allclose(ridge_weighted(X, y, g, 0.25, lam).coeffs, want, atol=1e-10)

    def test_minority_upweighted(self):
        """pi_hat = minority fraction puts more weight on group 0 rows."""
        r = rng(15)
        n = 200
        g = (r.random(n) < 0.9).astype(int)
        X = np.ones((n, 1))
        y = np.where(g == 0, 1.0, 0.0)
        coef = ridge_weighted(X, y, g, float(np.mean(g == 0)), 0.0).coeffs[0]
        assert coef == pytest.approx(0.5)

    def test_singular(self):
        X = np.zeros((10, 3))
        X[:, 0] = 1.0
        with pytest.raises(SingularSystem):
            ridge_weighted(X, np.ones(10), np.zeros(10, int), 0.5, 0.0)

    def test_rejects_bad_pi_hat(self):
        with pytest.raises(ValueError):
            ridge_weighted(np.eye(3), np.ones(3), np.zeros(3), 0.0, 1.0)


class TestRfFeatures:
    def test_identity_recovers_x(self):
        d = 7
        X = rng(16).standard_normal((5, d))
        model = RfModel(math.sqrt(d) * np.eye(d), IDENTITY)
        assert np.allclose(rf_features(X, model), X)

    def test_zero_row(self):
        model = sample_rf_model(12, 4, RELU, SPHERE, rng(17))
        assert np.all(rf_features(np.zeros((1, 4)), model) == 0)

    def test_scalar_spot_checks(self):
        r = rng(18)
        d = 9
        X = r.standard_normal((30, d))
        model = sample_rf_model(40, d, RELU, GAUSSIAN, r)
        Z = rf_features(X, model)
        for i, j in zip(r.integers(0, 30, 100), r.integers(0, 40, 100)):
            u = sum(model.Theta[j, k] * X[i, k] for k in range(d)) / math.sqrt(d)
            assert Z[i, j] == pytest.approx(max(u, 0.0), abs=1e-12)

    def test_head_nests(self):
        model = sample_rf_model(30, 5, RELU, SPHERE, rng(19))
        small = sample_rf_model(10, 5, RELU, SPHERE, rng(19))
        assert np.array_equal(model.head(10).Theta, small.Theta)


class TestSubsample:
    def _data(self, n0, n1):
        g = np.array([0] * n0 + [1] * n1)
        n = n0 + n1
        X = np.arange(n, dtype=float)[:, None]
        return TwoGroupDataset(X, X[:, 0].copy(), g, np.zeros(1), np.zeros(1), 0.0)

    def test_balanced_unchanged(self):
        data = self._data(5, 5)
        out = subsample_majority(data, rng())
        assert np.array_equal(out.X, data.X) and np.array_equal(out.g, data.g)

    def test_counts(self):
        out = subsample_majority(self._data(10, 90), rng())
        assert out.n == 20 and out.n0 == 10 and out.n1 == 10
        assert np.all(np.diff(out.y) > 0)  # order preserved

    def test_empty_minority(self):
        with pytest.raises(EmptyMinority):
            subsample_majority(self._data(0, 10), rng())

    def test_uniform_inclusion(self):
        data = self._data(10, 90)
        r = rng(20)
        draws = 10**4
        counts = np.zeros(100)
        for _ in range(draws):
            counts[subsample_majority(data, r).y.astype(int)] += 1
        p = 10 / 90
        freq = counts[10:] / draws
        assert np.all(np.abs(freq - p) < 4 * math.sqrt(p * (1 - p) / draws))
        assert np.all(counts[:10] == draws)


class TestRisk:
    def test_exact_linear(self):
        b = np.array([1.0, -2.0, 0.5])
        assert minority_risk_linear(b, b) == 0.0
        assert minority_risk_linear(np.zeros(3), b) == pytest.approx(5.25)

    def test_linear_vs_monte_carlo(self):
        r = rng(21)
        bh, b0 = r.standard_normal(6), r.standard_normal(6)
        x = r.standard_normal((10**6, 6))
        mc = np.mean((x @ (bh - b0)) ** 2)
        assert mc == pytest.approx(minority_risk_linear(bh, b0), rel=0.01)

    def test_zero_model(self):
        model = sample_rf_model(20, 5, RELU, SPHERE, rng())
        fit = FitResult(np.zeros(20), 0.0, 0)
        assert minority_risk_rf_mc(fit, model, np.zeros(5), 500, rng()) == (0.0, 0.0)

    @pytest.mark.parametrize("law", [SPHERE, GAUSSIAN])
    def test_signal_energy(self, law):
        d = 10
        b0 = rng(22).standard_normal(d)
        model = sample_rf_model(20, d, RELU, law, rng(23))
        mean, se = minority_risk_rf_mc(FitResult(np.zeros(20), 0.0, 0), model, b0, 20000, rng(24), law)
        assert abs(mean - b0 @ b0) < 3 * se

    def test_rejects_small_m_test(self):
        model = sample_rf_model(4, 3, RELU, SPHERE, rng())
        with pytest.raises(ValueError):
            minority_risk_rf_mc(FitResult(np.zeros(4), 0, 0), model, np.zeros(3), 50, rng())


class TestSignalPair:
    def test_angle(self):
        b0, b1 = signal_pair(5, 1.0, 2.0, math.pi / 3)
        assert np.linalg.norm(b0) == pytest.approx(1.0)
        assert np.linalg.norm(b1) == pytest.approx(2.0)
        assert b0 @ b1 == pytest.approx(2.0 * math.cos(math.pi / 3))


def linear_experiment(**kw):
    d, n = kw.pop("d"), kw.pop("n")
    theta = kw.pop("theta")
    b0, b1 = signal_pair(d, 1.0, 1.0, theta)
    return lambda s: linear_replicate(s, d=d, n=n, beta0=b0, beta1=b1, **kw)


class TestReplicates:
    def test_deterministic(self):
        exp = linear_experiment(d=60, n=30, pi=0.8, theta=math.pi, tau=0.3)
        a = run_replicates(exp, 4, 7)
        b = run_replicates(exp, 4, 7, threads=3)
        assert a == b

    def test_single(self):
        s = run_replicates(linear_experiment(d=20, n=10, pi=0.8, theta=0.0, tau=0.3), 1, 1)
        assert s.mean == s.records[0].value and s.stderr == 0.0

    def test_errors_recorded(self):
        def exp(streams):
            if streams.replicate == 1:
                raise RuntimeError("boom")
            return 1.0

        s = run_replicates(exp, 3, 0)
        assert s.n_ok == 2 and s.mean == 1.0
        assert "boom" in s.records[1].error

    def test_aggregate_order_independent(self):
        vals = list(np.random.default_rng(0).standard_normal(101) * 1e6)
        assert aggregate(vals) == aggregate(vals[::-1])

    @pytest.mark.slow
    def test_linear_vs_theory(self):
        from minority_risk.theory_linear import LinearRegime, minority_mspe_linear

        tau = 1 / math.sqrt(10)
        s = run_replicates(linear_experiment(d=600, n=300, pi=0.8, theta=math.pi, tau=tau), 20, 2024)
        theory = minority_mspe_linear(LinearRegime(2.0, 0.8), 1.0, 4.0, -2.0, tau).total
        assert s.mean == pytest.approx(theory, rel=0.05)

    @pytest.mark.slow
    def test_subsampling_beats_erm(self):
        """Paired over common streams at pi = 0.9, gamma = 2, theta = 180 deg."""
        tau = 1 / math.sqrt(10)
        kw = dict(d=600, n=300, pi=0.9, theta=math.pi, tau=tau)
        erm = run_replicates(linear_experiment(estimator="erm", **kw), 20, 5)
        ss = run_replicates(linear_experiment(estimator="subsample", **kw), 20, 5)
        diff = [a.value - b.value for a, b in zip(ss.records, erm.records)]
        mean, se = aggregate(diff)
        assert mean + 2 * se < 0

    @pytest.mark.slow
    def test_feature_law_equivalence(self):
        tau = 1 / math.sqrt(10)
        res = {}
        for law in (SPHERE, GAUSSIAN):
            res[law] = run_replicates(linear_experiment(d=800, n=400, pi=0.8, theta=math.pi, tau=tau, law=law), 10, 9)
        a, b = res[SPHERE], res[GAUSSIAN]
        assert abs(a.mean - b.mean) < 3 * math.hypot(a.stderr, b.stderr)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(13, 40), st.integers(0, 2**32 - 1))
def test_interpolation_property(n, d, seed):
    r = rng(seed)
    X = r.standard_normal((n, d))
    y = r.standard_normal(n)
    fit = min_norm_ls(X, y)
    assert fit.rank == n
    assert fit.train_residual <= 1e-8 * np.linalg.norm(y)
