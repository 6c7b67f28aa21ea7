import itertools
import math

import numpy as np
import pytest
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import nnls
from scipy.special import expit

from minority_risk.errors import NotSeparable
from minority_risk.moments import RELU
from minority_risk.sim import GAUSSIAN, RfModel, rf_features, sample_rf_model
from minority_risk.svm import (
    SvmFit,
    bayes_error,
    classification_errors,
    hard_margin_svm,
    predict_sign,
    sample_two_group_labels,
)


def nnls_oracle(Z, y):
    """Dual QP as a nonnegative least-squares problem: min ||L' a - L^{-1} 1||, a >= 0."""
    Q = np.outer(y, y) * (Z @ Z.T)
    L = cholesky(Q, lower=True)
    b = solve_triangular(L, np.ones(len(y)), lower=True)
    alpha, _ = nnls(L.T, b, maxiter=50 * len(y))
    return Z.T @ (alpha * y)


def brute_force_oracle(Z, y):
    """Enumerate support sets; keep the smallest-norm feasible candidate."""
    n = len(y)
    Q = np.outer(y, y) * (Z @ Z.T)
    best = None
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            try:
                aS = np.linalg.solve(Q[np.ix_(S, S)], np.ones(k))
            except np.linalg.LinAlgError:
                continue
            if aS.min() < 0:
                continue
            alpha = np.zeros(n)
            alpha[S] = aS
            a = Z.T @ (alpha * y)
            if np.min(y * (Z @ a)) >= 1 - 1e-9 and (best is None or a @ a < best @ best):
                best = a
    return best


def random_instance(seed, n=20, N=40):
    r = np.random.default_rng(seed)
    Z = r.standard_normal((n, N))
    y = np.where(r.random(n) < 0.5, 1.0, -1.0)
    return Z, y


def check_invariants(fit, Z, y):
    margins = y * (Z @ fit.a)
    assert np.all(margins >= 1 - 1e-6)
    assert np.allclose(fit.a, Z.T @ (fit.alpha * y), atol=1e-8)
    assert np.all(fit.alpha >= 0)
    assert np.all(fit.alpha * (margins - 1) <= 1e-6)
    assert fit.min_margin == pytest.approx(margins.min())


class TestSolver:
    def test_two_points(self):
        fit = hard_margin_svm(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1, -1]))
        assert np.allclose(fit.a, [1.0, 0.0])
        assert fit.min_margin == pytest.approx(1.0)

    def test_single_point(self):
        fit = hard_margin_svm(np.array([[3.0, 4.0]]), np.array([1]))
        assert np.allclose(fit.a, [0.12, 0.16])

    @pytest.mark.parametrize("seed", range(50))
    def test_invariants_random(self, seed):
        Z, y = random_instance(seed)
        fit = hard_margin_svm(Z, y)
        check_invariants(fit, Z, y)
        assert fit.kkt_residual <= 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_norm_matches_oracle(self, seed):
        Z, y = random_instance(1000 + seed)
        fit = hard_margin_svm(Z, y)
        assert np.linalg.norm(fit.a) == pytest.approx(np.linalg.norm(nnls_oracle(Z, y)), abs=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_small(self, seed):
        Z, y = random_instance(2000 + seed, n=7, N=4 + seed)
        try:
            fit = hard_margin_svm(Z, y)
        except NotSeparable:
            pytest.skip("instance not separable")
        best = brute_force_oracle(Z, y)
        assert np.linalg.norm(fit.a) == pytest.approx(np.linalg.norm(best), abs=1e-6)

    def test_many_inactive_constraints(self):
        """Points far beyond the margin must get alpha = 0."""
        r = np.random.default_rng(3)
        Z = np.vstack([r.standard_normal((5, 30)), 50 * r.standard_normal((15, 30))])
        y = np.sign(Z[:, 0] + 1e-12)
        Z[5:, 0] = 100 * y[5:]
        fit = hard_margin_svm(Z, y)
        check_invariants(fit, Z, y)

    @pytest.mark.parametrize("s", [0.1, 10.0])
    def test_scale_covariance(self, s):
        Z, y = random_instance(7)
        base = hard_margin_svm(Z, y)
        scaled = hard_margin_svm(s * Z, y)
        assert np.allclose(scaled.a, base.a / s, rtol=1e-7, atol=1e-10)
        Zt = np.random.default_rng(8).standard_normal((200, 40))
        assert np.array_equal(predict_sign(s * Zt @ scaled.a), predict_sign(Zt @ base.a))

    def test_permutation_invariance(self):
        Z, y = random_instance(9)
        perm = np.random.default_rng(10).permutation(len(y))
        a = hard_margin_svm(Z, y).a
        b = hard_margin_svm(Z[perm], y[perm]).a
        assert np.allclose(a, b, atol=1e-8)

    def test_not_separable(self):
        Z = np.array([[1.0], [1.0]])
        with pytest.raises(NotSeparable):
            hard_margin_svm(Z, np.array([1, -1]), max_iter=200)

    def test_zero_row(self):
        with pytest.raises(NotSeparable):
            hard_margin_svm(np.zeros((2, 3)), np.array([1, -1]))

    def test_label_check(self):
        with pytest.raises(ValueError):
            hard_margin_svm(np.eye(2), np.array([1, 0]))

    def test_random_feature_instance(self):
        r = np.random.default_rng(11)
        X = r.standard_normal((100, 50))
        model = sample_rf_model(200, 50, RELU, GAUSSIAN, r)
        Z = rf_features(X, model)
        y = np.where(r.random(100) < expit(X[:, 0] * 5), 1.0, -1.0)
        fit = hard_margin_svm(Z, y)
        check_invariants(fit, Z, y)
        assert np.linalg.norm(fit.a) == pytest.approx(np.linalg.norm(nnls_oracle(Z, y)), rel=1e-6)


class TestLabels:
    def test_fair_coin(self):
        r = np.random.default_rng(0)
        n = 10**5
        X = r.standard_normal((n, 3))
        y = sample_two_group_labels(X, np.zeros(n), np.zeros(3), np.zeros(3), r)
        assert abs(y.mean()) < 3 / math.sqrt(n)

    def test_saturation(self):
        r = np.random.default_rng(1)
        d = 50
        beta = np.zeros(d)
        beta[0] = 100.0
        X = r.standard_normal((20000, d))
        y = sample_two_group_labels(X, np.ones(20000), beta, beta, r)
        assert np.mean(y != np.sign(X @ beta)) <= 0.01

    def test_conditional_probability(self):
        r = np.random.default_rng(2)
        n = 400000
        X = r.standard_normal((n, 1))
        y = sample_two_group_labels(X, np.zeros(n), np.ones(1), np.ones(1), r)
        sel = np.abs(X[:, 0] - 2.0) < 0.02
        p = np.mean(y[sel] == 1)
        target = expit(2.0)
        assert target == pytest.approx(0.8808, abs=1e-4)
        assert abs(p - target) < 4 * math.sqrt(target * (1 - target) / sel.sum()) + 0.005

    def test_group_specific_signal(self):
        r = np.random.default_rng(3)
        n = 20000
        X = r.standard_normal((n, 2))
        g = np.arange(n) % 2
        b0, b1 = np.array([100.0, 0.0]), np.array([0.0, 100.0])
        y = sample_two_group_labels(X, g, b0, b1, r)
        assert np.mean(y[g == 0] == np.sign(X[g == 0, 0])) > 0.99
        assert np.mean(y[g == 1] == np.sign(X[g == 1, 1])) > 0.99


class TestClassificationErrors:
    def test_zero_weights(self):
        d = 10
        model = sample_rf_model(20, d, RELU, GAUSSIAN, np.random.default_rng(0))
        fit = SvmFit(np.zeros(20), np.zeros(1), 0.0, 0.0)
        b0, b1 = np.eye(d)[0], np.eye(d)[1]
        e = classification_errors(fit, model, b0, b1, 20000, np.random.default_rng(1))
        assert abs(e.err_minority - 0.5) < 3 * e.se_minority
        assert abs(e.err_majority - 0.5) < 3 * e.se_majority

    def test_bayes_error_oracle(self):
        # mpmath adaptive quadrature
        assert bayes_error(10.0) == pytest.approx(0.0546079744250530, rel=1e-10)
        assert bayes_error(0.0) == pytest.approx(0.5)

    def test_bayes_optimal_classifier(self):
        """A model that computes sign(x' beta) exactly attains the Bayes error."""
        d = 5
        beta = np.zeros(d)
        beta[0] = 100.0
        # relu(x_1) - relu(-x_1) = x_1
        model = RfModel(math.sqrt(d) * np.vstack([np.eye(d)[0], -np.eye(d)[0]]), RELU)
        fit = SvmFit(np.array([1.0, -1.0]), np.zeros(1), 0.0, 0.0)
        e = classification_errors(fit, model, beta, beta, 200000, np.random.default_rng(4))
        target = bayes_error(100.0)
        assert abs(e.err_minority - target) < 4 * math.sqrt(target / 200000)
        assert abs(e.err_majority - target) < 4 * math.sqrt(target / 200000)

    def test_sign_tie_break(self):
        assert list(predict_sign([0.0, -1e-300, 2.0])) == [1, -1, 1]
