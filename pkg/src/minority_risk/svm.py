"""Bias-free hard-margin SVM on random features and group-wise test errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import NoConvergence, NotSeparable
from .moments import gaussian_expectation
from .sim import (
    GAUSSIAN,
    RfModel,
    Streams,
    rf_features,
    sample_features,
    sample_rf_model,
    subsample_indices,
)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
POLISH_EVERY = 5
_ALPHA_BLOWUP = 1e12


@dataclass
class SvmFit:
    a: np.ndarray
    alpha: np.ndarray
    min_margin: float
    kkt_residual: float
    sweeps: int = 0

    def decision(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.a


def predict_sign(scores) -> np.ndarray:
    """``sign`` with the tie ``sign(0) = +1``."""
    return np.where(np.asarray(scores) >= 0, 1, -1)


def sample_two_group_labels(X, g, beta0, beta1, rng: np.random.Generator) -> np.ndarray:
    """Labels in {-1, +1} with ``P(y = 1 | x, g) = sigmoid(x' beta_g)``."""
    X = np.asarray(X, dtype=float)
    logits = np.where(np.asarray(g) == 1, X @ np.asarray(beta1), X @ np.asarray(beta0))
    return np.where(rng.random(X.shape[0]) < expit(logits), 1, -1).astype(np.int8)


def _kkt(alpha, grad):
    # grad = 1 - Q alpha; active coordinates need grad = 0, inactive grad <= 0
    return float(np.max(np.where(alpha > 0, np.abs(grad), np.maximum(grad, 0.0))))


def _polish(Q, alpha, tol):
    """Active-set Newton refinement of the nonnegative QP.

    Solves the equality system on the current support (plus violators),
    stepping back to the boundary and dropping the blocking coordinate while
    the solution leaves the nonnegative orthant.
    """
    n = alpha.size
    grad = 1.0 - Q @ alpha
    support = (alpha > 0) | (grad > tol)
    for _ in range(n):
        idx = np.flatnonzero(support)
        if idx.size == 0:
            return alpha
        try:
            sol = linalg.cho_solve(linalg.cho_factor(Q[np.ix_(idx, idx)]), np.ones(idx.size))
        except linalg.LinAlgError:
            return alpha
        if sol.min() > 0:
            out = np.zeros(n)
            out[idx] = sol
            return out
        cur = alpha[idx]
        neg = sol <= 0
        ratios = np.full(idx.size, np.inf)
        ratios[neg] = cur[neg] / (cur[neg] - sol[neg])
        block = int(np.argmin(ratios))
        step = ratios[block]
        new = np.maximum(cur + step * (sol - cur), 0.0)
        new[block] = 0.0
        alpha = np.zeros(n)
        alpha[idx] = new
        support = alpha > 0
    return alpha


def hard_margin_svm(
    Z, y, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, polish_every: int = POLISH_EVERY
) -> SvmFit:
    """Minimize ``||a||`` subject to ``y_i z_i' a >= 1`` (no intercept).

    Exact coordinate ascent on the dual ``max sum(alpha) - alpha' Q alpha / 2``,
    ``alpha >= 0``, ``Q = (y y') * (Z Z')``, stopping when the largest KKT
    violation is at most ``tol``.  Every ``polish_every`` sweeps an active-set
    Newton step is tried, which finishes in a handful of sweeps what plain
    coordinate ascent would approach only linearly.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    if y.shape != (n,) or not np.all(np.abs(y) == 1):
        raise ValueError("y must be a vector of +-1 labels matching the rows of Z")
    Q = np.outer(y, y) * (Z @ Z.T)
    diag = np.diag(Q).copy()
    if np.any(diag <= 0):
        raise NotSeparable("a zero feature row cannot satisfy y z'a >= 1")
    alpha = np.zeros(n)
    q_alpha = np.zeros(n)
    viol = math.inf
    sweep = 0
    for sweep in range(1, max_iter + 1):
        for i in range(n):
            new = alpha[i] + (1.0 - q_alpha[i]) / diag[i]
            if new < 0.0:
                new = 0.0
            step = new - alpha[i]
            if step != 0.0:
                alpha[i] = new
                q_alpha += step * Q[:, i]
        viol = _kkt(alpha, 1.0 - q_alpha)
        if viol <= tol:
            break
        if sweep % polish_every == 0:
            polished = _polish(Q, alpha, tol)
            q_pol = Q @ polished
            v_pol = _kkt(polished, 1.0 - q_pol)
            if v_pol < viol:
                alpha, q_alpha, viol = polished, q_pol, v_pol
                if viol <= tol:
                    break
        if alpha.max() > _ALPHA_BLOWUP:
            raise NotSeparable(f"dual variables diverge (max alpha {alpha.max():.3g})")
    a = Z.T @ (alpha * y)
    margins = y * (Z @ a)
    min_margin = float(margins.min())
    if viol > tol:
        if min_margin < 0.5:
            raise NotSeparable(f"min margin {min_margin:.3g} after {max_iter} sweeps")
        raise NoConvergence(f"KKT violation {viol:.3g} > tol after {max_iter} sweeps")
    return SvmFit(a, alpha, min_margin, viol, sweep)


@dataclass(frozen=True)
class GroupErrors:
    err_minority: float
    err_majority: float
    se_minority: float
    se_majority: float


def classification_errors(
    fit: SvmFit,
    model: RfModel,
    beta0,
    beta1,
    m_test: int,
    rng: np.random.Generator,
    law: str = GAUSSIAN,
) -> GroupErrors:
    """Per-group misclassification rates on fresh draws, with binomial standard errors."""
    if m_test < 1000:
        raise ValueError("m_test must be >= 1000")
    beta0 = np.asarray(beta0, dtype=float)
    beta1 = np.asarray(beta1, dtype=float)
    d = beta0.shape[0]
    rates = []
    for beta in (beta0, beta1):
        Xt = sample_features(m_test, d, law, rng)
        yt = np.where(rng.random(m_test) < expit(Xt @ beta), 1, -1)
        pred = predict_sign(rf_features(Xt, model) @ fit.a)
        rates.append(float(np.mean(pred != yt)))
    se = [math.sqrt(p * (1.0 - p) / m_test) for p in rates]
    return GroupErrors(rates[0], rates[1], se[0], se[1])


def bayes_error(norm_beta: float) -> float:
    """``E min(f, 1 - f)`` with ``f = sigmoid(x' beta)`` and ``x' beta ~ N(0, |beta|^2)``."""
    s = float(norm_beta)
    return gaussian_expectation(lambda u: expit(-np.abs(s * u)), breakpoints=(0.0,))


def classification_replicate(
    streams: Streams,
    *,
    d: int,
    n: int,
    N: int,
    pi: float,
    beta0,
    beta1,
    activation,
    m_test: int = 10_000,
    law: str = GAUSSIAN,
    theta_law: str = GAUSSIAN,
    estimator: str = "erm",
    tol: float = DEFAULT_TOL,
) -> tuple[float, float, float, float]:
    """(minority error, majority error, minority se, majority se) for one replicate."""
    rng_x = streams.rng("features")
    X = sample_features(n, d, law, rng_x)
    g = (streams.rng("groups").random(n) < pi).astype(np.int8)
    y = sample_two_group_labels(X, g, beta0, beta1, streams.rng("labels"))
    if estimator == "subsample":
        keep = subsample_indices(g, streams.rng("subsample"))
        X, y = X[keep], y[keep]
    elif estimator != "erm":
        raise ValueError(f"estimator {estimator!r} is not available for classification")
    model = sample_rf_model(N, d, activation, theta_law, streams.rng("theta"))
    fit = hard_margin_svm(rf_features(X, model), y, tol=tol)
    e = classification_errors(fit, model, beta0, beta1, m_test, streams.rng("test"), law)
    return e.err_minority, e.err_majority, e.se_minority, e.se_majority
