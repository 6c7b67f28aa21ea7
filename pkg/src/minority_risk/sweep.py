"""Parameter sweeps: theory evaluation, replicate dispatch and aggregation."""

from __future__ import annotations

import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

from . import theory_linear as tl
from . import theory_rf as trf
from .config import Estimator, SweepConfig
from .errors import MinorityRiskError
from .moments import Activation, activation_moments
from .sim import Streams, aggregate, linear_replicate, rf_regression_replicate, signal_pair
from .svm import classification_replicate

DIFF_LABEL = "subsample_minus_erm"


@dataclass
class RunRecord:
    experiment: str
    estimator: str
    row_type: str
    gamma: float
    pi: float
    theta_deg: float
    psi1: float | None = None
    psi2: float | None = None
    n: int | None = None
    d: int | None = None
    N: int | None = None
    seed: int | None = None
    replicate: int | None = None
    risk_empirical: float | None = None
    stderr: float | None = None
    risk_majority: float | None = None
    stderr_majority: float | None = None
    risk_theory: float | None = None
    b_star: float | None = None
    v_star: float | None = None
    psi2_star: float | None = None
    m1_star: float | None = None
    m2_star: float | None = None
    inductive_bias: float | None = None
    approx_quadratic: float | None = None
    approx_cross: float | None = None
    variance: float | None = None
    theory_note: str | None = None
    error: str | None = None
    wall_time_ms: float | None = None


COLUMNS = tuple(f.name for f in fields(RunRecord))
THEORY_COLUMNS = (
    "b_star",
    "v_star",
    "psi2_star",
    "m1_star",
    "m2_star",
    "inductive_bias",
    "approx_quadratic",
    "approx_cross",
    "variance",
)


@dataclass(frozen=True)
class GridPoint:
    index: int
    gamma: float
    pi: float
    theta_deg: float
    n: int
    d: int
    N: int | None
    psi1: float | None
    psi2: float | None


def grid_points(cfg: SweepConfig) -> list[GridPoint]:
    """Grid in (pi, theta, gamma) order, gamma varying fastest."""
    pts = []
    n = cfg.dims.n
    for pi in cfg.grids.pi:
        for theta in cfg.grids.theta_deg:
            for gamma in cfg.grids.gamma:
                if cfg.experiment == "linear_regression":
                    d = max(1, round(gamma * n))
                    pts.append(GridPoint(len(pts), gamma, pi, theta, n, d, None, None, None))
                else:
                    d = cfg.dims.d
                    N = max(1, round(gamma * n))
                    pts.append(GridPoint(len(pts), gamma, pi, theta, n, d, N, N / d, n / d))
    return pts


@dataclass(frozen=True)
class TheoryValue:
    risk: float | None = None
    terms: tuple = ()
    note: str | None = None


def theory_for(cfg: SweepConfig, pt: GridPoint, est: Estimator, xi: float | None) -> TheoryValue:
    """Limiting minority risk for one grid point; ``None`` where no formula exists."""
    if cfg.experiment == "rf_classification" or est.name == "reweighted_ridge":
        return TheoryValue()
    sig = trf.angle_to_signal(
        cfg.signal.norm_b0, cfg.signal.norm_b1, math.radians(pt.theta_deg), cfg.signal.tau
    )
    try:
        if cfg.experiment == "rf_regression":
            regime = trf.RfRegime(pt.psi1, pt.psi2, pt.pi)
            if est.name == "subsample":
                regime = trf.subsample_regime(regime)
            br = trf.minority_risk_rf(regime, sig, xi)
            terms = (
                ("b_star", br.b_star),
                ("v_star", br.v_star),
                ("psi2_star", br.psi2_star),
                ("m1_star", br.m1_star),
                ("m2_star", br.m2_star),
            )
            return TheoryValue(br.total, terms)
        gamma, pi = pt.d / pt.n, pt.pi
        if est.name == "subsample":
            gamma, pi = tl.subsample_gamma(gamma, pi)
        lb = tl.minority_mspe_linear(
            tl.LinearRegime(gamma, pi), sig.f_beta**2, sig.f_delta**2, sig.f_beta_delta, sig.tau
        )
        terms = (
            ("inductive_bias", lb.inductive_bias),
            ("approx_quadratic", lb.approx_quadratic),
            ("approx_cross", lb.approx_cross),
            ("variance", lb.variance),
        )
        return TheoryValue(lb.total, terms)
    except MinorityRiskError as exc:
        return TheoryValue(note=f"{type(exc).__name__}: {exc}")


def _replicate_task(task):
    """Worker entry point; module level so process pools can pickle it."""
    cfg, pt, est, r = task
    beta0, beta1 = signal_pair(
        pt.d, cfg.signal.norm_b0, cfg.signal.norm_b1, math.radians(pt.theta_deg)
    )
    streams = Streams(cfg.master_seed, r)
    t0 = time.perf_counter()
    try:
        if cfg.experiment == "linear_regression":
            out = (
                linear_replicate(
                    streams, d=pt.d, n=pt.n, pi=pt.pi, beta0=beta0, beta1=beta1,
                    tau=cfg.signal.tau, estimator=est.name, lam=est.lam, law=cfg.feature_law,
                ),
            )
        elif cfg.experiment == "rf_regression":
            out = rf_regression_replicate(
                streams, d=pt.d, n=pt.n, N=pt.N, pi=pt.pi, beta0=beta0, beta1=beta1,
                tau=cfg.signal.tau, activation=Activation.from_name(cfg.activation),
                estimator=est.name, lam=est.lam, law=cfg.feature_law,
                theta_law=cfg.theta_law, m_test=cfg.m_test,
            )
        else:
            out = classification_replicate(
                streams, d=pt.d, n=pt.n, N=pt.N, pi=pt.pi, beta0=beta0, beta1=beta1,
                activation=Activation.from_name(cfg.activation), m_test=cfg.m_test,
                law=cfg.feature_law, theta_law=cfg.theta_law, estimator=est.name,
            )
        err = None
    except Exception as exc:  # recorded per replicate; the sweep continues
        out, err = None, f"{type(exc).__name__}: {exc}"
    ms = (time.perf_counter() - t0) * 1e3
    return pt.index, est, r, (tuple(float(v) for v in out) if out else None), err, ms


@dataclass
class SweepResult:
    records: list
    failures: int


def _replicate_row(cfg, pt, label, theory, r, out, err, ms, timings):
    rec = _base(cfg, pt, label, "replicate", theory)
    rec.replicate = r
    rec.error = err
    rec.wall_time_ms = ms if timings else None
    if out is not None:
        rec.risk_empirical = out[0]
        if cfg.experiment == "rf_regression":
            rec.stderr = out[1]
        elif cfg.experiment == "rf_classification":
            rec.risk_majority, rec.stderr, rec.stderr_majority = out[1], out[2], out[3]
    return rec


def _base(cfg, pt, label, row_type, theory):
    rec = RunRecord(
        experiment=cfg.experiment, estimator=label, row_type=row_type, gamma=pt.gamma,
        pi=pt.pi, theta_deg=pt.theta_deg, psi1=pt.psi1, psi2=pt.psi2, n=pt.n, d=pt.d,
        N=pt.N, seed=cfg.master_seed, risk_theory=theory.risk, theory_note=theory.note,
    )
    for k, v in theory.terms:
        setattr(rec, k, v)
    return rec


def _aggregate_row(cfg, pt, label, theory, reps, timings):
    rec = _base(cfg, pt, label, "aggregate", theory)
    ok = [x for x in reps if x.error is None]
    if ok:
        rec.risk_empirical, rec.stderr = aggregate(x.risk_empirical for x in ok)
        if cfg.experiment == "rf_classification":
            rec.risk_majority, rec.stderr_majority = aggregate(x.risk_majority for x in ok)
    failed = len(reps) - len(ok)
    if failed:
        first = next(x.error for x in reps if x.error is not None)
        rec.error = f"{failed}/{len(reps)} replicates failed; first: {first}"
    if timings:
        rec.wall_time_ms = math.fsum(x.wall_time_ms for x in reps)
    return rec


def _difference_rows(cfg, pt, ss_rows, erm_rows, ss_theory, erm_theory):
    if ss_theory.risk is not None and erm_theory.risk is not None:
        theory = TheoryValue(ss_theory.risk - erm_theory.risk)
    else:
        theory = TheoryValue(note=ss_theory.note or erm_theory.note)
    rows = []
    for a, b in zip(ss_rows, erm_rows):
        rec = _base(cfg, pt, DIFF_LABEL, "replicate", theory)
        rec.replicate = a.replicate
        if a.error is None and b.error is None:
            rec.risk_empirical = a.risk_empirical - b.risk_empirical
            if cfg.experiment == "rf_classification":
                rec.risk_majority = a.risk_majority - b.risk_majority
        else:
            rec.error = a.error or b.error
        rows.append(rec)
    return rows + [_aggregate_row(cfg, pt, DIFF_LABEL, theory, rows, False)]


def run_sweep(cfg: SweepConfig, threads: int = 1, timings: bool = False) -> SweepResult:
    """Every (grid point, estimator, replicate) plus aggregates, sorted deterministically.

    All grid points share the replicate streams (common random numbers), so
    paired differences across estimators and grid values have low variance.
    ``threads`` affects scheduling only.
    """
    xi = None
    if cfg.experiment == "rf_regression":
        xi = activation_moments(Activation.from_name(cfg.activation)).xi
    points = grid_points(cfg)
    tasks = [(cfg, pt, est, r) for pt in points for est in cfg.estimators for r in range(cfg.replicates)]
    if threads > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_replicate_task(t) for t in tasks]
    by_key = {(i, est, r): (out, err, ms) for i, est, r, out, err, ms in results}

    records, failures = [], 0
    for pt in points:
        per_est = {}
        for est in cfg.estimators:
            theory = theory_for(cfg, pt, est, xi)
            reps = []
            for r in range(cfg.replicates):
                out, err, ms = by_key[(pt.index, est, r)]
                failures += err is not None
                reps.append(_replicate_row(cfg, pt, est.label, theory, r, out, err, ms, timings))
            records.extend(reps)
            records.append(_aggregate_row(cfg, pt, est.label, theory, reps, timings))
            per_est[est.name if est.lam is None else est.label] = (reps, theory)
        if "erm" in per_est and "subsample" in per_est:
            (ss, ss_t), (erm, erm_t) = per_est["subsample"], per_est["erm"]
            records.extend(_difference_rows(cfg, pt, ss, erm, ss_t, erm_t))
    return SweepResult(records, failures)


def record_dict(rec: RunRecord) -> dict:
    return asdict(rec)
