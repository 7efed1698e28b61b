"""Command-line entry point: ``spaco {converge,basin,ablate,check}``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from spaco.benchmarks import make_problem
from spaco.diagnostics import kkt_residual
from spaco.experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentKind,
    RUNNERS,
    config_from_flat,
    parse_config_text,
    table1_variants,
)
from spaco.problem import check_oracle_consistency
from spaco.schedules import Schedule, params_at, validate

OUT_DIR_ENV = "SPACO_OUT_DIR"

CONFIG_HELP = """\
config file format: one 'section.key = value' per line, '#' starts a comment.

  experiment.kind         convergence | basin | ablation (set by the subcommand)
  experiment.repetitions  independent seeded runs (default 10; basin 1)
  experiment.seed         base seed; run r uses seed + r (default 0)
  experiment.output       output directory (default results)
  experiment.init         uniform | zero (default uniform; basin zero, i.e. y0 = 0)
  problem.name            toy2d | nonlinear | linear (default nonlinear; basin toy2d)
  problem.n               dimension for nonlinear/linear (default 100)
  problem.delta           noise level (default 1; toy2d 0)
  problem.seed            data seed of the linear problem (default 0)
  solver.name             spaco | gda_fp | minminmax (default spaco)
  solver.<param>          spaco: rho0 sigma0 alpha0 beta0 eta0 t s lipschitz_guard
                          gda_fp: rho alpha beta
                          minminmax: alpha beta gamma inner_steps lambda0 lambda_cap
                          defaults are the tuned values per problem
  stop.max_iters          iteration budget (default 10000; ablation 30000)
  stop.target_eps         stop when max(eps_x, eps_y) <= value (ablation default 1e-4)
  stop.residual_tol       stop when the residual measure <= value (basin default 1e-6)
  stop.residual_measure   gap | kkt (default gap; basin kkt)
  diag.stride             trace row every N iterations (default 1; basin 10)
  diag.kkt diag.merit diag.gap  toggle trace columns (true/false)
  diag.gap_samples        samples for the gap estimate (default 1000)
  diag.inner_tol          inner tolerance for merit rows (default 1e-4)
  diag.phi_lower          lower bound used in the merit value (default: from observed values)
  grid.low grid.high      basin grid bounds for both coordinates (default -0.75, 0.75)
  grid.resolution         points per axis (default 25; the acceptance grid uses 9)
  grid.radius             classification radius (default 0.1)
  variant.<label>         ablation variant, e.g. 'variant.fast = alpha0=0.2, beta0=0.05'
                          (no variants given: the standard one-factor set)
"""

KIND_OF = {"converge": ExperimentKind.CONVERGENCE, "basin": ExperimentKind.BASIN_GRID,
           "ablate": ExperimentKind.ABLATION}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file")
    common.add_argument("--seed", type=int, help="base seed (overrides experiment.seed)")
    common.add_argument("--out-dir", type=Path,
                        help=f"output directory (overrides ${OUT_DIR_ENV} and experiment.output)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent runs (default 1)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry, e.g. --set stop.max_iters=500")
    parser = argparse.ArgumentParser(
        prog="spaco", description="Run SPACO experiments on synthetic constrained minimax problems.",
        epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("converge", "seeded convergence traces plus a median/IQR aggregate"),
                       ("basin", "basin-of-attraction grid on a two-dimensional problem"),
                       ("ablate", "iterations to tolerance for hyperparameter variants"),
                       ("check", "oracle consistency and reference checks for every benchmark")):
        sub.add_parser(name, help=text, description=text, parents=[common], epilog=CONFIG_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    flat = parse_config_text(args.config.read_text()) if args.config else {}
    for item in args.overrides:
        flat.update(parse_config_text(item))
    kind = KIND_OF[args.command]
    given = flat.get("experiment.kind")
    if given is not None and given != kind.value:
        raise ConfigError(f"config declares experiment.kind = {given} but the subcommand is {args.command!r}")
    flat["experiment.kind"] = kind.value
    if args.seed is not None:
        flat["experiment.seed"] = args.seed
    cfg = config_from_flat(flat)
    if kind is ExperimentKind.ABLATION and not cfg.variants:
        cfg = cfg.with_overrides(variants=table1_variants())
    return cfg


def output_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    if args.out_dir is not None:
        return args.out_dir
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path(cfg.output)


def run_checks(out=None) -> bool:
    out = out or sys.stdout
    ok = True

    def report(label: str, passed: bool, detail: str) -> None:
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}", file=out)

    for name, n in (("toy2d", None), ("nonlinear", 5), ("linear", 5)):
        problem = make_problem(name, n, delta=0.0 if name == "toy2d" else 1.0, seed=0)
        rep = check_oracle_consistency(problem)
        worst = max(rep.max_errors.values())
        report(f"{name} oracle", rep.passed, f"max relative error {worst:.2e}" + "".join(f"; {f}" for f in rep.failures))
        ref = problem.reference
        points = [(ref.x_star, ref.y_star, ref.lambda_star, "solution")]
        points += [(p.x, p.y, p.lam, p.label) for p in ref.spurious_points]
        for x, y, lam, label in points:
            r = kkt_residual(problem, x, y, lam)
            report(f"{name} KKT at {label}", r <= 1e-9, f"residual {r:.2e}")
    sched = Schedule()
    res = validate(sched)
    report("default schedule", res.ok, "; ".join(res.violations + res.warnings) or "conditions hold")
    prods = [params_at(sched, k).rho * params_at(sched, k).sigma for k in (1, 10, 100, 1000)]
    report("rho_k sigma_k constant", bool(np.allclose(prods, prods[0], rtol=1e-12, atol=0.0)),
           f"{prods[0]:.6g}")
    return ok


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command == "check":
        return 0 if run_checks() else 1
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"spaco: config error: {exc}", file=sys.stderr)
        return 2
    out_dir = output_dir(args, cfg)
    try:
        result = RUNNERS[cfg.kind](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"spaco: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"spaco: cannot write outputs: {exc}", file=sys.stderr)
        return 1
    for path in result.paths:
        print(path)
    for msg in result.failures:
        print(f"spaco: run failed: {msg}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
