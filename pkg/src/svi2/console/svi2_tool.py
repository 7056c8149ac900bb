#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.


"""Command line tool to generate, certify and solve two-stage stochastic
box-constrained VIs and to run the SAA convergence experiment.
This also demonstrates using the svi2 pkg.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from tqdm import tqdm

from svi2 import __version__, phm_fn, saa_fn
from svi2.console import helper
from svi2.generator_fn import ConstructionError, GeneratorConfig
from svi2.model import mcore
from svi2.model.mcore import ExitCode
from svi2.model_fn import InvalidArgumentError, NumericalError
from svi2.svi_problem import FAIL, SviProblem


def build_parser():
    """Return the argparse parser of the svi2 command"""

    parser = argparse.ArgumentParser(
        prog="svi2",
        description="This program generates, certifies and solves two-stage \
                     stochastic box-constrained variational inequalities by \
                     the Progressive Hedging Method and runs the sample \
                     average approximation convergence experiment. Results \
                     are written as JSON or CSV files.",
    )
    parser.add_argument("--version", action="version", version=f"svi2 {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    group_solver = common.add_argument_group("solver options")
    group_output = common.add_argument_group("output options")
    group_debug = common.add_argument_group("debug options")
    common.add_argument(
        "--seed",
        type=int,
        help="random seed (generate: instance seed, experiment: root seed)",
    )
    group_solver.add_argument(
        "--tol",
        type=float,
        help=f"PHM stopping threshold on res, default={mcore.OUTER_TOL}",
    )
    group_solver.add_argument(
        "--max-iter",
        type=int,
        help=f"PHM iteration budget, default={mcore.OUTER_MAX_ITER}",
    )
    group_solver.add_argument(
        "--r",
        type=float,
        help=f"PHM penalty parameter, default={mcore.DEFAULT_R}",
    )
    group_solver.add_argument(
        "--threads",
        type=int,
        help="worker threads, default=SVI2_THREADS environment variable or cpu count",
    )
    group_output.add_argument(
        "--out",
        type=str,
        help="output file (or directory for experiment)",
    )
    group_output.add_argument(
        "--format",
        type=str,
        choices=["json", "csv"],
        default="json",
        help="format of the report file (experiment: of the metadata file), default=json",
    )
    group_debug.add_argument(
        "--verbose",
        action="store_true",
        help="displays debug information",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="generate an instance")
    group_dims = gen.add_argument_group("instance options")
    group_dims.add_argument("--n1", type=int, default=3, help="player 1 first-stage size")
    group_dims.add_argument("--n2", type=int, default=3, help="player 2 first-stage size")
    group_dims.add_argument("--m1", type=int, default=5, help="player 1 recourse size")
    group_dims.add_argument("--m2", type=int, default=5, help="player 2 recourse size")
    group_dims.add_argument("--alpha", type=float, default=1.0, help="Hessian shift")
    group_dims.add_argument("--scenarios", type=int, default=10, help="number of scenarios N")
    gen.set_defaults(handler=cmd_generate)

    solve = sub.add_parser("solve", parents=[common], help="solve an instance by PHM")
    solve.add_argument("instance", type=str, help="instance JSON file")
    solve.add_argument(
        "--res-every", type=int, default=1, help="residual check frequency, default=1"
    )
    solve.set_defaults(handler=cmd_solve)

    cert = sub.add_parser("certify", parents=[common], help="certify strong monotonicity")
    cert.add_argument("instance", type=str, help="instance JSON file")
    cert.set_defaults(handler=cmd_certify)

    exp = sub.add_parser("experiment", parents=[common], help="run the SAA experiment")
    exp.add_argument("config", type=str, nargs="?", help="JSON config overriding the profile")
    exp.add_argument(
        "--profile",
        type=str,
        default="default",
        help="experiment profile: default, scaled, smoke",
    )
    exp.set_defaults(handler=cmd_experiment)

    oracle = sub.add_parser("oracle-check", parents=[common], help="check solvers against oracles")
    oracle.add_argument("instance", type=str, help="instance JSON file")
    oracle.set_defaults(handler=cmd_oracle_check)
    return parser


def resolve_threads(args):
    """--threads, else SVI2_THREADS, else the cpu count"""

    if args.threads is not None:
        threads = args.threads
    else:
        env = os.environ.get("SVI2_THREADS")
        try:
            threads = int(env) if env else (os.cpu_count() or 1)
        except ValueError as err:
            raise InvalidArgumentError(f"** SVI2_THREADS is not an integer: {env!r}") from err
    if threads < 1:
        raise InvalidArgumentError(f"** thread count must be >= 1: {threads}")
    return threads


def _phm_settings(args):
    return {
        "r": mcore.DEFAULT_R if args.r is None else args.r,
        "tol": mcore.OUTER_TOL if args.tol is None else args.tol,
        "max_iter": mcore.OUTER_MAX_ITER if args.max_iter is None else args.max_iter,
    }


def cmd_generate(args):
    """Generate an instance and write its JSON document"""

    cfg = GeneratorConfig(
        n1=args.n1,
        n2=args.n2,
        m1=args.m1,
        m2=args.m2,
        alpha=args.alpha,
        n_scenarios=args.scenarios,
        seed=0 if args.seed is None else args.seed,
    )
    problem = SviProblem.from_generator(cfg, verbose=args.verbose)
    out = args.out or "instance.json"
    problem.save(out)
    helper.OutputHelper.print_status(problem.info, {"written": out})
    return ExitCode.OK


def cmd_solve(args):
    """Run PHM on an instance, write the report and the history CSV"""

    problem = SviProblem.from_file(args.instance, verbose=args.verbose)
    settings = _phm_settings(args)
    settings["res_every"] = args.res_every
    out = Path(args.out or "report.json")
    history_path = out.with_name(f"{out.stem}_history.csv")

    config = dict(settings, instance=args.instance)
    log = helper.OutputHelper(config=config)
    log.set_writer(to=history_path)
    log.write_header(["nu", "res", "step"] + [f"x_{i}" for i in range(problem.info["n"])])
    # progress indicator unless debug lines go to stdout
    bar = None if args.verbose else tqdm(total=settings["max_iter"], desc="PHM")

    def sink(row):
        log.write_history_row(row)
        if bar is not None:
            bar.update(1)

    cert = problem.certify()
    try:
        report = problem.solve(history_sink=sink, verbose=args.verbose, **settings)
    except phm_fn.PhmStepError as err:
        print(f"** PHM aborted: {err}")
        log.write_document(
            {
                "error": str(err),
                "scenario": err.j,
                "iterations": len(err.history),
                "history_csv": str(history_path),
            },
            out,
            fmt=args.format,
        )
        return ExitCode.NUMERIC
    finally:
        if bar is not None:
            bar.close()
        log.set_writer(to=None)

    doc = {
        "report": report.as_dict(),
        "certificate": cert.as_dict(),
        "history_csv": str(history_path),
    }
    costs = problem.player_costs(report.x, report.y)
    if costs is not None:
        doc["player_costs"] = list(costs)
    log.write_document(doc, out, fmt=args.format)
    log.print_status(problem.info, problem.status)
    return ExitCode.OK if report.converged else ExitCode.BUDGET


def cmd_certify(args):
    """Write the monotonicity certificate and, with block metadata, the Schur report"""

    problem = SviProblem.from_file(args.instance, verbose=args.verbose)
    cert = problem.certify(verbose=args.verbose)
    schur = problem.schur_check(verbose=args.verbose)
    doc = {"certificate": cert.as_dict(), "schur": schur.as_dict() if schur else None}
    log = helper.OutputHelper(config={"instance": args.instance})
    log.write_document(doc, args.out or "certificate.json", fmt=args.format)
    rows = [["kappa", cert.kappa, "certified" if cert.certified else "not certified"]]
    if schur is not None:
        rows.append(["first margin", schur.first_margin, ""])
        rows.append(["min second margin", schur.min_second_margin, ""])
    log.print_table(rows, headers=["quantity", "value", "verdict"])
    return ExitCode.OK if cert.certified else ExitCode.UNCERTIFIED


def cmd_experiment(args):
    """Run the SAA experiment and write stats.csv, trajectories.csv and the metadata

    The metadata file is metadata.json or, with --format csv, metadata.csv.
    """

    cfg = saa_fn.load_profile(args.profile)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as err:
                raise InvalidArgumentError(f"** {args.config} is not valid JSON") from err
        cfg = saa_fn.config_from_dict(doc, base=None if "profile" in doc else cfg)
    phm = cfg.phm
    if args.r is not None or args.tol is not None or args.max_iter is not None:
        phm = saa_fn.PhmSettings(
            r=phm.r if args.r is None else args.r,
            tol=phm.tol if args.tol is None else args.tol,
            max_iter=phm.max_iter if args.max_iter is None else args.max_iter,
            res_every=phm.res_every,
        )
    cfg = dataclasses.replace(
        cfg,
        phm=phm,
        seed=cfg.seed if args.seed is None else args.seed,
        threads=resolve_threads(args),
    )
    if args.verbose:
        print("experiment config: ", cfg.as_dict())

    out_dir = Path(args.out or "experiment")
    out_dir.mkdir(parents=True, exist_ok=True)
    result = saa_fn.run(cfg, verbose=args.verbose, progress=not args.verbose)
    saa_fn.write_stats_csv(result, out_dir / "stats.csv")
    saa_fn.write_trajectories_csv(result, out_dir / "trajectories.csv")
    saa_fn.write_metadata(result, out_dir / f"metadata.{args.format}", fmt=args.format)

    helper.OutputHelper.print_table(
        [[s.n, s.mean, s.variance, s.ci_lo, s.ci_hi, s.failures] for s in result.stats],
        headers=["N", "mean", "variance", "ci_lo", "ci_hi", "failures"],
    )
    print(f"Spearman(N, mean res) = {saa_fn.spearman_trend(result.stats):+.3f}")
    return ExitCode.OK


def cmd_oracle_check(args):
    """Compare Newton, Jacobian and PHM results against their oracles"""

    problem = SviProblem.from_file(args.instance, verbose=args.verbose)
    rows = problem.oracle_check(verbose=args.verbose)
    log = helper.OutputHelper(config={"instance": args.instance})
    log.print_table(
        [[row.check, row.error, row.tolerance, row.verdict, row.detail] for row in rows],
        headers=["check", "error", "tolerance", "verdict", "detail"],
    )
    if args.out:
        log.write_document({"checks": [row._asdict() for row in rows]}, args.out, fmt=args.format)
    return ExitCode.NUMERIC if any(row.verdict == FAIL for row in rows) else ExitCode.OK


def main(argv=None):
    """Entry point of the svi2 command, returns the exit code"""

    args = build_parser().parse_args(argv)
    if args.verbose:
        print(args)
    try:
        return int(args.handler(args))
    except (InvalidArgumentError, OSError) as err:
        print(f"** {err}")
        return int(ExitCode.INPUT)
    except (NumericalError, ConstructionError) as err:
        print(f"** {err}")
        return int(ExitCode.NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
