"""Finite-sample two-group simulators, estimators and replicate harness."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import EmptyMinority, SingularSystem
from .moments import Activation

GAUSSIAN = "gaussian"
SPHERE = "sphere"
FEATURE_LAWS = (GAUSSIAN, SPHERE)

DEFAULT_RTOL = 1e-10
DEFAULT_M_TEST = 20_000
_TEST_CHUNK = 4000

# stream roles; the integer is part of the seed derivation, so never renumber
ROLES = {
    "features": 0,
    "groups": 1,
    "noise": 2,
    "theta": 3,
    "subsample": 4,
    "test": 5,
    "labels": 6,
}


@dataclass(frozen=True)
class Streams:
    """Independent RNG streams for one replicate, keyed by role."""

    master_seed: int
    replicate: int

    def rng(self, role: str) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.replicate, ROLES[role]))
        return np.random.Generator(np.random.PCG64(ss))


def sample_sphere(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Rows uniform on the sphere of radius sqrt(d)."""
    if count < 1 or d < 1:
        raise ValueError("count and d must be >= 1")
    g = rng.standard_normal((count, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian row has probability zero; redraw-free guard
    norms[norms == 0] = 1.0
    return (g / norms) * math.sqrt(d)


def sample_features(count: int, d: int, law: str, rng: np.random.Generator) -> np.ndarray:
    if law == SPHERE:
        return sample_sphere(count, d, rng)
    if law == GAUSSIAN:
        return rng.standard_normal((count, d))
    raise ValueError(f"unknown feature law {law!r}; expected one of {FEATURE_LAWS}")


@dataclass
class TwoGroupDataset:
    X: np.ndarray
    y: np.ndarray
    g: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    tau: float
    feature_law: str = SPHERE

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n0(self) -> int:
        return int(np.count_nonzero(self.g == 0))

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.g == 1))

    def subset(self, idx) -> "TwoGroupDataset":
        return TwoGroupDataset(
            self.X[idx], self.y[idx], self.g[idx], self.beta0, self.beta1, self.tau, self.feature_law
        )


def sample_two_group(
    n: int,
    d: int,
    pi: float,
    beta0,
    beta1,
    tau: float,
    law: str,
    rng: np.random.Generator | None = None,
    *,
    streams: Streams | None = None,
) -> TwoGroupDataset:
    """Mixture of ``P0`` (g = 0, minority) and ``P1`` (g = 1, prob. ``pi``).

    Pass either one generator (draws are sequential) or ``streams`` so that
    features, groups and noise come from separate role streams.
    """
    beta0 = np.asarray(beta0, dtype=float)
    beta1 = np.asarray(beta1, dtype=float)
    if beta0.shape != (d,) or beta1.shape != (d,):
        raise ValueError(f"beta0 and beta1 must have shape ({d},)")
    if not 0.0 <= pi <= 1.0:
        raise ValueError(f"pi must lie in [0, 1], got {pi}")
    if streams is not None:
        r_x, r_g, r_e = streams.rng("features"), streams.rng("groups"), streams.rng("noise")
    elif rng is not None:
        r_x = r_g = r_e = rng
    else:
        raise ValueError("need rng or streams")
    X = sample_features(n, d, law, r_x)
    g = (r_g.random(n) < pi).astype(np.int8)
    y = np.where(g == 1, X @ beta1, X @ beta0)
    y = y + tau * r_e.standard_normal(n)
    return TwoGroupDataset(X, y, g, beta0, beta1, float(tau), law)


@dataclass
class FitResult:
    coeffs: np.ndarray
    train_residual: float
    rank: int


def min_norm_ls(X, y, rtol: float = DEFAULT_RTOL) -> FitResult:
    """Minimum-norm least squares via truncated SVD (``X^+ y``)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return FitResult(np.zeros(X.shape[1]), float(np.linalg.norm(y)), 0)
    keep = s > rtol * s[0]
    rank = int(np.count_nonzero(keep))
    coeffs = Vt[:rank].T @ ((U[:, :rank].T @ y) / s[:rank])
    return FitResult(coeffs, float(np.linalg.norm(y - X @ coeffs)), rank)


def ridge_weighted(X, y, g, pi_hat: float, lam: float) -> FitResult:
    """Minimize the group-reweighted squared loss plus ``(lam/2)||beta||^2``.

    The loss is ``(1/n) sum_i w_i (y_i - x_i' beta)^2 / 2`` with ``w_i = 1/pi_hat``
    for ``g_i = 0`` and ``w_i = 1/(1 - pi_hat)`` for ``g_i = 1``.  Pass the
    group-0 sample fraction as ``pi_hat`` to upweight the minority.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.asarray(g)
    n, d = X.shape
    if not 0.0 < pi_hat < 1.0:
        raise ValueError(f"pi_hat must lie in (0, 1), got {pi_hat}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    w = np.where(g == 0, 1.0 / pi_hat, 1.0 / (1.0 - pi_hat))
    c = n * lam
    if lam > 0 and n < d:
        # kernel form: beta = X' S (S X X' S + c I)^{-1} S y with S = W^{1/2}
        s = np.sqrt(w)
        K = (s[:, None] * (X @ X.T)) * s[None, :]
        K[np.diag_indices(n)] += c
        alpha = linalg.cho_solve(linalg.cho_factor(K, lower=True), s * y)
        coeffs = X.T @ (s * alpha)
    else:
        G = X.T @ (w[:, None] * X)
        G[np.diag_indices(d)] += c
        evals = np.linalg.eigvalsh(G)
        if evals[0] <= 1e-12 * max(evals[-1], np.finfo(float).tiny):
            raise SingularSystem(
                f"weighted normal equations are singular (lam={lam}, "
                f"eigenvalue ratio {evals[0] / evals[-1]:.3g})"
            )
        coeffs = linalg.cho_solve(linalg.cho_factor(G, lower=True), X.T @ (w * y))
    return FitResult(coeffs, float(np.linalg.norm(y - X @ coeffs)), min(n, d))


@dataclass
class RfModel:
    Theta: np.ndarray
    activation: Activation

    @property
    def N(self) -> int:
        return self.Theta.shape[0]

    def head(self, N: int) -> "RfModel":
        """The model restricted to its first ``N`` features."""
        return RfModel(self.Theta[:N], self.activation)


def sample_rf_model(
    N: int, d: int, activation: Activation, law: str, rng: np.random.Generator
) -> RfModel:
    return RfModel(sample_features(N, d, law, rng), activation)


def rf_features(X, model: RfModel) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if model.Theta.shape[1] != d:
        raise ValueError(f"Theta has {model.Theta.shape[1]} columns, X has {d}")
    return model.activation(X @ model.Theta.T / math.sqrt(d))


def rf_fit_min_norm(Z, y, rtol: float = DEFAULT_RTOL) -> FitResult:
    return min_norm_ls(Z, y, rtol)


def subsample_indices(g, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of all group-0 rows plus as many random group-1 rows."""
    g = np.asarray(g)
    idx0 = np.flatnonzero(g == 0)
    idx1 = np.flatnonzero(g == 1)
    if idx0.size == 0:
        raise EmptyMinority("no minority (g = 0) rows to match")
    if idx1.size <= idx0.size:
        return np.arange(g.size)
    keep1 = rng.choice(idx1, size=idx0.size, replace=False)
    return np.sort(np.concatenate([idx0, keep1]))


def subsample_majority(data: TwoGroupDataset, rng: np.random.Generator) -> TwoGroupDataset:
    """Keep every minority row and an equal number of random majority rows.

    Row order of the survivors is preserved.  If the majority is already no
    larger than the minority the data are returned as is.
    """
    return data.subset(subsample_indices(data.g, rng))


def minority_risk_linear(coeffs, beta0) -> float:
    """Exact minority MSPE ``||beta_hat - beta0||^2`` under isotropic features."""
    diff = np.asarray(coeffs, dtype=float) - np.asarray(beta0, dtype=float)
    return float(diff @ diff)


def minority_risk_rf_mc(
    fit: FitResult,
    model: RfModel,
    beta0,
    m_test: int,
    rng: np.random.Generator,
    law: str = SPHERE,
) -> tuple[float, float]:
    """Mean and standard error of the squared minority prediction error."""
    if m_test < 100:
        raise ValueError("m_test must be >= 100")
    beta0 = np.asarray(beta0, dtype=float)
    d = beta0.shape[0]
    errs = np.empty(m_test)
    for start in range(0, m_test, _TEST_CHUNK):
        stop = min(start + _TEST_CHUNK, m_test)
        Xt = sample_features(stop - start, d, law, rng)
        errs[start:stop] = (rf_features(Xt, model) @ fit.coeffs - Xt @ beta0) ** 2
    return float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(m_test))


def signal_pair(d: int, norm_b0: float, norm_b1: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """``beta0 = |b0| e1`` and ``beta1`` at angle ``theta`` (radians) in the (e1, e2) plane."""
    if d < 2 and math.sin(theta) != 0.0:
        raise ValueError("need d >= 2 for a non-collinear pair")
    beta0 = np.zeros(d)
    beta1 = np.zeros(d)
    beta0[0] = norm_b0
    beta1[0] = norm_b1 * math.cos(theta)
    if d > 1:
        beta1[1] = norm_b1 * math.sin(theta)
    return beta0, beta1


# --- experiments -----------------------------------------------------------

ESTIMATORS = ("erm", "subsample", "reweighted_ridge")


def _training_set(data, estimator, streams):
    if estimator == "subsample":
        return subsample_majority(data, streams.rng("subsample"))
    return data


def linear_replicate(
    streams: Streams,
    *,
    d: int,
    n: int,
    pi: float,
    beta0,
    beta1,
    tau: float,
    estimator: str = "erm",
    lam: float | None = None,
    law: str = SPHERE,
    rtol: float = DEFAULT_RTOL,
) -> float:
    """Minority risk of one replicate of the linear experiment."""
    data = sample_two_group(n, d, pi, beta0, beta1, tau, law, streams=streams)
    if estimator == "reweighted_ridge":
        n0 = data.n0
        if n0 == 0 or n0 == data.n:
            raise EmptyMinority("reweighting needs both groups in the sample")
        fit = ridge_weighted(data.X, data.y, data.g, n0 / data.n, lam)
    else:
        train = _training_set(data, estimator, streams)
        fit = min_norm_ls(train.X, train.y, rtol)
    return minority_risk_linear(fit.coeffs, data.beta0)


def rf_regression_replicate(
    streams: Streams,
    *,
    d: int,
    n: int,
    N: int,
    pi: float,
    beta0,
    beta1,
    tau: float,
    activation: Activation,
    estimator: str = "erm",
    lam: float | None = None,
    law: str = SPHERE,
    theta_law: str = SPHERE,
    m_test: int = DEFAULT_M_TEST,
    rtol: float = DEFAULT_RTOL,
) -> tuple[float, float]:
    """(mean, stderr) of the minority MC risk for one replicate.

    Theta is drawn as the first ``N`` rows of a stream, so experiments that
    differ only in ``N`` share their leading features.
    """
    data = sample_two_group(n, d, pi, beta0, beta1, tau, law, streams=streams)
    model = sample_rf_model(N, d, activation, theta_law, streams.rng("theta"))
    if estimator == "reweighted_ridge":
        n0 = data.n0
        if n0 == 0 or n0 == data.n:
            raise EmptyMinority("reweighting needs both groups in the sample")
        fit = ridge_weighted(rf_features(data.X, model), data.y, data.g, n0 / data.n, lam)
    else:
        train = _training_set(data, estimator, streams)
        fit = rf_fit_min_norm(rf_features(train.X, model), train.y, rtol)
    return minority_risk_rf_mc(fit, model, data.beta0, m_test, streams.rng("test"), law)


# --- replicate harness -----------------------------------------------------


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    value: float | None
    extras: tuple = ()
    error: str | None = None


@dataclass(frozen=True)
class ReplicateSummary:
    records: list = field(default_factory=list)
    mean: float = math.nan
    stderr: float = math.nan
    n_ok: int = 0


def aggregate(values) -> tuple[float, float]:
    """Order-independent mean and standard error (``fsum`` is exactly rounded)."""
    vals = [float(v) for v in values]
    k = len(vals)
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(vals) / k
    if k == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (k - 1)
    return mean, math.sqrt(var / k)


def _run_one(experiment, master_seed, r):
    try:
        out = experiment(Streams(master_seed, r))
    except Exception as exc:  # recorded per replicate, never fatal
        return ReplicateRecord(r, None, (), f"{type(exc).__name__}: {exc}")
    if isinstance(out, tuple):
        return ReplicateRecord(r, float(out[0]), tuple(float(v) for v in out[1:]))
    return ReplicateRecord(r, float(out))


def run_replicates(
    experiment: Callable[[Streams], float | tuple],
    replicates: int,
    master_seed: int,
    threads: int = 1,
) -> ReplicateSummary:
    """Run ``experiment`` once per replicate with streams derived from ``(master_seed, r)``.

    ``experiment`` returns a risk or a tuple whose first entry is the risk.
    Failures are recorded in the replicate's ``error`` field.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda r: _run_one(experiment, master_seed, r), range(replicates)))
    else:
        records = [_run_one(experiment, master_seed, r) for r in range(replicates)]
    ok = [rec.value for rec in records if rec.error is None]
    mean, se = aggregate(ok)
    return ReplicateSummary(records, mean, se, len(ok))
