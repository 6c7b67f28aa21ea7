"""Command line entry point.

Exit codes: 0 success, 1 some replicates failed (recorded in the CSV),
2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import theory_linear as tl
from . import theory_rf as trf
from .config import Estimator, Grids, Output, parse_config
from .errors import ConfigParseError, ConfigValidationError, MinorityRiskError
from .moments import Activation, activation_moments
from .output import emit_csv, emit_svg, read_csv
from .sweep import DIFF_LABEL, run_sweep

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p, config_required=False):
    p.add_argument("--config", type=Path, required=config_required, help="YAML sweep config")
    p.add_argument("--seed", type=_u64, help="override master_seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker processes (scheduling only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minority-risk",
        description="Asymptotic and simulated minority-group risk under overparameterization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    theory = sub.add_parser("theory", help="evaluate limiting risk formulas")
    tsub = theory.add_subparsers(dest="model", required=True)
    rf = tsub.add_parser("rf", help="ridgeless random-feature regression")
    rf.add_argument("--psi1", type=float, help="N/d")
    rf.add_argument("--psi2", type=float, default=2.0, help="n/d")
    rf.add_argument("--gamma", type=float, help="N/n; sets psi1 = gamma * psi2")
    rf.add_argument("--activation", default="relu")
    lin = tsub.add_parser("linear", help="ridgeless linear regression")
    lin.add_argument("--gamma", type=float, help="d/n")
    for p in (rf, lin):
        p.add_argument("--pi", type=float, default=0.8)
        p.add_argument("--theta-deg", type=float, default=180.0)
        p.add_argument("--norm-b0", type=float, default=1.0)
        p.add_argument("--norm-b1", type=float, default=1.0)
        p.add_argument("--snr", type=float, default=10.0)
        p.add_argument("--subsample", action="store_true", help="evaluate at the subsampled regime")
        _common(p)

    sim = sub.add_parser("simulate", help="Monte Carlo at a single grid point (or the config grid)")
    sim.add_argument("--experiment", choices=("rf_regression", "linear_regression", "rf_classification"))
    sim.add_argument("--gamma", type=float)
    sim.add_argument("--pi", type=float)
    sim.add_argument("--theta-deg", type=float)
    sim.add_argument("--estimator", choices=("erm", "subsample"))
    sim.add_argument("--replicates", type=_positive_int)
    _common(sim)
    sim.add_argument("--timings", action="store_true", help="record wall_time_ms")

    sw = sub.add_parser("sweep", help="run a configured sweep and write CSV + SVG")
    _common(sw, config_required=True)
    sw.add_argument("--timings", action="store_true", help="record wall_time_ms (breaks byte determinism)")

    pl = sub.add_parser("plot", help="redraw an SVG from a sweep CSV")
    pl.add_argument("csv", type=Path)
    pl.add_argument("--out", type=Path, default=None, help="SVG path (default: CSV path with .svg)")
    pl.add_argument("--x-axis", default="gamma", choices=("gamma", "pi", "theta_deg"))
    pl.add_argument("--series-key", default="theta_deg", choices=("theta_deg", "pi", "gamma", "estimator"))
    pl.add_argument("--estimator", default=None)
    return parser


def _load(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _print_rows(rows, stream):
    keys = list(rows[0])
    print("\t".join(keys), file=stream)
    for r in rows:
        print("\t".join("" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else str(r[k])) for k in keys), file=stream)


def _theory_rows(args):
    """(gamma, pi, theta) points from the config grid or from the flags."""
    if args.config is not None:
        cfg = _load(args)
        sig = cfg.signal
        pts = [(g, p, t) for p in cfg.grids.pi for t in cfg.grids.theta_deg for g in cfg.grids.gamma]
        return pts, sig.norm_b0, sig.norm_b1, sig.tau, cfg.activation, cfg.dims
    tau = args.norm_b0 / math.sqrt(args.snr)
    return None, args.norm_b0, args.norm_b1, tau, getattr(args, "activation", "relu"), None


def cmd_theory(args) -> int:
    pts, b0, b1, tau, act, dims = _theory_rows(args)
    rows = []
    if args.model == "rf":
        xi = activation_moments(Activation.from_name(act)).xi
        if pts is None:
            psi1 = args.psi1 if args.psi1 is not None else (args.gamma or 2.0) * args.psi2
            pts = [(psi1 / args.psi2, args.pi, args.theta_deg)]
            psi2 = args.psi2
        else:
            psi2 = dims.n / dims.d
        for gamma, pi, theta in pts:
            regime = trf.RfRegime(gamma * psi2, psi2, pi)
            if args.subsample:
                regime = trf.subsample_regime(regime)
            sig = trf.angle_to_signal(b0, b1, math.radians(theta), tau)
            row = {"gamma": gamma, "pi": pi, "theta_deg": theta, "psi1": regime.psi1, "psi2": regime.psi2}
            try:
                br = trf.minority_risk_rf(regime, sig, xi)
                row.update(total=br.total, b_star=br.b_star, v_star=br.v_star,
                           psi2_star=br.psi2_star, m1_star=br.m1_star, m2_star=br.m2_star, note=None)
            except MinorityRiskError as exc:
                row.update(total=None, b_star=None, v_star=None, psi2_star=None,
                           m1_star=None, m2_star=None, note=type(exc).__name__)
            rows.append(row)
    else:
        if pts is None:
            pts = [(args.gamma if args.gamma is not None else 2.0, args.pi, args.theta_deg)]
        for gamma, pi, theta in pts:
            sig = trf.angle_to_signal(b0, b1, math.radians(theta), tau)
            row = {"gamma": gamma, "pi": pi, "theta_deg": theta}
            try:
                g_eff, p_eff = tl.subsample_gamma(gamma, pi) if args.subsample else (gamma, pi)
                lb = tl.minority_mspe_linear(
                    tl.LinearRegime(g_eff, p_eff), sig.f_beta**2, sig.f_delta**2, sig.f_beta_delta, tau
                )
                row.update(total=lb.total, inductive_bias=lb.inductive_bias,
                           approx_quadratic=lb.approx_quadratic, approx_cross=lb.approx_cross,
                           variance=lb.variance, note=None)
            except MinorityRiskError as exc:
                row.update(total=None, inductive_bias=None, approx_quadratic=None,
                           approx_cross=None, variance=None, note=type(exc).__name__)
            rows.append(row)
    _print_rows(rows, sys.stdout)
    return EXIT_OK


def _write_outputs(cfg, result, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = emit_csv(result.records, out_dir / cfg.output.csv)
    svg = Path(cfg.output.svg)
    labels = [e.label for e in cfg.estimators]
    if any(r.estimator == DIFF_LABEL for r in result.records):
        labels.append(DIFF_LABEL)
    written = [csv_path]
    if cfg.output.series_key == "estimator" or len(labels) == 1:
        written.append(emit_svg(result.records, out_dir / svg, cfg.output.x_axis, cfg.output.series_key,
                                title=cfg.experiment))
    else:
        for label in labels:
            path = out_dir / f"{svg.stem}-{label}{svg.suffix or '.svg'}"
            written.append(emit_svg(result.records, path, cfg.output.x_axis, cfg.output.series_key,
                                    estimator=label, title=f"{cfg.experiment}: {label}"))
    return written


def cmd_sweep(args) -> int:
    cfg = _load(args)
    result = run_sweep(cfg, threads=args.threads, timings=args.timings)
    for path in _write_outputs(cfg, result, args.out):
        print(path)
    if result.failures:
        print(f"{result.failures} replicate(s) failed; see the error column", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config is not None:
        cfg = _load(args)
    else:
        from .config import config_from_dict

        exp = args.experiment or "linear_regression"
        cfg = config_from_dict({"experiment": exp, "grids": {"gamma": [args.gamma or 2.0]}})
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    grids = cfg.grids
    cfg = replace(
        cfg,
        grids=Grids(
            (args.gamma,) if args.gamma is not None else grids.gamma,
            (args.theta_deg,) if args.theta_deg is not None else grids.theta_deg,
            (args.pi,) if args.pi is not None else grids.pi,
        ),
        estimators=(Estimator(args.estimator),) if args.estimator else cfg.estimators,
        replicates=args.replicates or cfg.replicates,
        output=Output("simulate.csv", "simulate.svg", cfg.output.x_axis, cfg.output.series_key),
    )
    result = run_sweep(cfg, threads=args.threads, timings=args.timings)
    rows = [
        {k: getattr(r, k) for k in ("estimator", "gamma", "pi", "theta_deg", "risk_empirical",
                                     "stderr", "risk_majority", "risk_theory", "error")}
        for r in result.records if r.row_type == "aggregate"
    ]
    _print_rows(rows, sys.stdout)
    emit_csv(result.records, args.out / cfg.output.csv)
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_plot(args) -> int:
    records = read_csv(args.csv)
    out = args.out or args.csv.with_suffix(".svg")
    print(emit_svg(records, out, args.x_axis, args.series_key, estimator=args.estimator))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "theory":
            return cmd_theory(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_plot(args)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
