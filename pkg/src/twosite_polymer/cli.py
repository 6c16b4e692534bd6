"""Command-line interface.

Subcommands:
    analytic   closed-form table (a, alpha_minus, alpha_plus, p, lambda) per beta
    simulate   run one ensemble; write curve.csv and report.json
    verify     run the acceptance-criteria suite (quick or full scale)
    sweep      run simulate over a beta grid plus a combined summary table

Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
All floating-point output is serialized with 17 significant digits so that
re-reading a file reproduces the in-memory doubles exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .acceptance import format_table, run_all
from .analytic import Beta, solve_alpha
from .ensemble import (
    EnsembleCurve,
    ModelParams,
    SimulationError,
    fit_convergence,
    run_ensemble,
)
from .sde import StepScheme

CURVE_HEADER = "t,mean_overlap,se_overlap,mean_z,se_z,mean_log_z,se_log_z,mean_n,mean_z2"


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def curve_to_csv(curve: EnsembleCurve) -> str:
    rows = [CURVE_HEADER]
    for j in range(len(curve.times)):
        rows.append(",".join(_g17(v) for v in (
            curve.times[j],
            curve.mean_overlap[j], curve.se_overlap[j],
            curve.mean_z[j], curve.se_z[j],
            curve.mean_log_z[j], curve.se_log_z[j],
            curve.mean_n[j], curve.mean_z2[j],
        )))
    return "\n".join(rows) + "\n"


def _report_json(params: ModelParams, curve: EnsembleCurve, report) -> str:
    payload = {
        "params": {
            "beta": params.beta.value,
            "dt": params.dt,
            "horizon": params.horizon,
            "n_paths": params.n_paths,
            "scheme": params.scheme.value,
            "output_stride": params.output_stride,
            "master_seed": params.master_seed,
        },
        "clamp_events": curve.clamp_events,
        "fe_gap_mean": curve.fe_gap_mean,
        "fe_gap_se": curve.fe_gap_se,
        "report": report.to_dict(),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, default=1e-3, help="integrator step")
    p.add_argument("--horizon", type=float, default=10.0, help="final time T")
    p.add_argument("--paths", type=int, default=10_000, help="number of Monte Carlo paths")
    p.add_argument("--scheme", choices=[s.value for s in StepScheme],
                   default=StepScheme.SPLITTING.value)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--stride", type=float, default=0.1, help="output record stride")
    p.add_argument("--out", required=True, help="existing output directory")
    p.add_argument("--workers", type=int, default=1, help="worker thread hint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twosite-polymer",
        description="Simulation and verification of the two-site directed polymer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analytic", help="print the closed-form table")
    p_an.add_argument("--beta", type=float, action="append", required=True,
                      help="inverse temperature (repeatable)")

    p_sim = sub.add_parser("simulate", help="run one ensemble")
    p_sim.add_argument("--beta", type=float, required=True)
    _add_run_flags(p_sim)

    p_ver = sub.add_parser("verify", help="run the acceptance criteria")
    p_ver.add_argument("--level", choices=["quick", "full"], default="quick")

    p_sw = sub.add_parser("sweep", help="simulate over a beta grid")
    p_sw.add_argument("--betas", required=True,
                      help="comma-separated inverse temperatures")
    _add_run_flags(p_sw)
    return parser


def _cmd_analytic(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    betas = args.beta
    for b in betas:
        if b < 0.0:
            parser.error(f"beta must be >= 0, got {b}")
    header = f"{'beta':>10} {'a':>14} {'alpha_minus':>14} {'alpha_plus':>14} " \
             f"{'free_energy':>14} {'rate_lambda':>12}"
    print(header)
    for b in betas:
        sol = solve_alpha(Beta(b))
        flag = "  (b->0 limit)" if sol.is_limit else ""
        print(
            f"{b:>10.6g} {sol.a:>14.8g} {sol.alpha_minus:>14.10g} "
            f"{sol.alpha_plus:>14.8g} {sol.free_energy:>14.10g} "
            f"{sol.rate_lambda:>12.8g}{flag}"
        )
    return 0


def _make_params(args: argparse.Namespace, beta: float,
                 parser: argparse.ArgumentParser) -> ModelParams:
    if beta < 0.0:
        parser.error(f"beta must be >= 0, got {beta}")
    try:
        return ModelParams(
            beta=Beta(beta),
            dt=args.dt,
            horizon=args.horizon,
            n_paths=args.paths,
            scheme=StepScheme(args.scheme),
            output_stride=args.stride,
            master_seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))
        raise AssertionError("unreachable")  # pragma: no cover


def _run_one(params: ModelParams, out_dir: Path, workers: int) -> tuple[int, str]:
    """Run, write curve.csv + report.json into out_dir, return (rc, summary)."""
    try:
        curve = run_ensemble(params, workers=workers)
    except SimulationError as exc:
        return 1, f"simulation aborted: {exc}"
    sol = solve_alpha(params.beta)
    report = fit_convergence(curve, sol)
    try:
        (out_dir / "curve.csv").write_text(curve_to_csv(curve))
        (out_dir / "report.json").write_text(_report_json(params, curve, report))
    except OSError as exc:
        return 1, f"cannot write outputs: {exc}"
    summary = (
        f"beta={params.beta.value:g} "
        f"alpha_minus_hat={report.overlap_limit_hat:.6f} "
        f"alpha_minus={report.alpha_minus_ref:.6f} "
        f"abs_error={report.abs_error:.2e} "
        f"p_hat={report.fe_hat_extrapolated:.6f} "
        f"p_ref={report.fe_ref:.6f}"
    )
    return 0, summary


def _cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    params = _make_params(args, args.beta, parser)
    out_dir = Path(args.out)
    if not out_dir.is_dir():
        print(f"error: output directory {out_dir} does not exist", file=sys.stderr)
        return 1
    rc, summary = _run_one(params, out_dir, args.workers)
    print(summary if rc == 0 else f"error: {summary}",
          file=sys.stdout if rc == 0 else sys.stderr)
    return rc


def _cmd_sweep(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        betas = [float(tok) for tok in args.betas.split(",") if tok.strip() != ""]
    except ValueError:
        parser.error(f"cannot parse beta grid {args.betas!r}")
    if not betas:
        parser.error("beta grid is empty")
    out_dir = Path(args.out)
    if not out_dir.is_dir():
        print(f"error: output directory {out_dir} does not exist", file=sys.stderr)
        return 1
    rows = ["beta,alpha_minus_hat,alpha_minus_ref,abs_error,p_hat,p_ref"]
    for b in betas:
        params = _make_params(args, b, parser)
        sub = out_dir / f"beta_{b:g}"
        sub.mkdir(exist_ok=True)
        rc, summary = _run_one(params, sub, args.workers)
        if rc != 0:
            print(f"error: {summary}", file=sys.stderr)
            return rc
        print(summary)
        report = json.loads((sub / "report.json").read_text())["report"]
        rows.append(",".join(_g17(report[k]) for k in (
            "beta", "overlap_limit_hat", "alpha_minus_ref", "abs_error",
            "fe_hat_extrapolated", "fe_ref",
        )))
    try:
        (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    except OSError as exc:
        print(f"error: cannot write sweep.csv: {exc}", file=sys.stderr)
        return 1
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    results = run_all(scale=args.level)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analytic":
        return _cmd_analytic(args, parser)
    if args.command == "simulate":
        return _cmd_simulate(args, parser)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "sweep":
        return _cmd_sweep(args, parser)
    raise AssertionError(f"unhandled command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
