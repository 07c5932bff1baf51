"""``scqp`` command line: solve, grad, bench and learn-demo."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, io, learn
from .diff import backward
from .errors import NotSolved, ScqpError
from .solver import DUAL_INFEASIBLE, MAX_ITERS_REACHED, PRIMAL_INFEASIBLE, SOLVED, solve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_MAX_ITERS = 3

EXIT_CODES = {
    SOLVED: EXIT_OK,
    PRIMAL_INFEASIBLE: EXIT_INFEASIBLE,
    DUAL_INFEASIBLE: EXIT_INFEASIBLE,
    MAX_ITERS_REACHED: EXIT_MAX_ITERS,
}

OVERRIDES = ("eps_abs", "eps_rel", "max_iters", "rho", "alpha", "sigma")


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-", "stdout"):
        sys.stdout.write(text + "\n")
    else:
        Path(output).write_text(text + "\n")


def _settings_with_overrides(settings, args):
    changes = {key: getattr(args, key) for key in OVERRIDES
               if getattr(args, key, None) is not None}
    if getattr(args, "no_scale", False):
        changes["scale"] = False
    return settings.replace(**changes) if changes else settings


def cmd_solve(args) -> int:
    problem, settings, _ = io.load_problem(args.input)
    settings = _settings_with_overrides(settings, args)
    result = solve(problem, settings)
    _emit(io.dumps(io.result_to_dict(result)), args.output)
    return EXIT_CODES[result.status]


def cmd_grad(args) -> int:
    problem, settings, doc = io.load_problem(args.input)
    if "grad_x" not in doc:
        raise io.ProblemFileError("missing key: grad_x")
    grad_x = np.array(doc["grad_x"], dtype=float)
    if grad_x.shape != (problem.n,):
        raise io.ProblemFileError(f"grad_x must have length {problem.n}")
    settings = _settings_with_overrides(settings, args)
    result = solve(problem, settings)
    try:
        grads = backward(result, problem, grad_x)
    except NotSolved:
        _emit(io.dumps({"status": result.status}), args.output)
        return EXIT_INFEASIBLE
    payload = {"status": result.status, **io.gradients_to_dict(grads)}
    _emit(io.dumps(payload), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench.run_bench(args.family, args.n, m_ratio=args.m_ratio, tol=args.tol,
                           trials=args.trials, batch=args.batch, seed=args.seed,
                           threads=args.threads)
    if args.csv:
        bench.write_csv(rows, args.csv)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=bench.CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def cmd_learn_demo(args) -> int:
    run = learn.run_learn_demo(n=args.n, m=args.m, epochs=args.epochs, batch=args.batch,
                               lr=args.lr, seed=args.seed, n_samples=args.samples)
    if args.csv:
        learn.write_loss_csv(run.losses, args.csv)
    else:
        sys.stdout.write("epoch,loss\n")
        for i, loss in enumerate(run.losses):
            sys.stdout.write(f"{i},{loss!r}\n")
    return EXIT_OK


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps-abs", type=float)
    p.add_argument("--eps-rel", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--no-scale", action="store_true", help="disable equilibration")
    p.add_argument("--output", "-o", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scqp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("input")
    _add_overrides(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("grad", help="solve and back-propagate grad_x from the problem file")
    p.add_argument("input")
    _add_overrides(p)
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("bench", help="runtime benchmark on random problems")
    p.add_argument("--family", choices=("box", "general"), default="box")
    p.add_argument("--n", type=int, nargs="+", default=[10, 100, 500])
    p.add_argument("--m-ratio", type=int, choices=(1, 2, 5), default=1)
    p.add_argument("--tol", choices=tuple(bench.TOLERANCES), default="low")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $SCQP_THREADS or CPU count)")
    p.add_argument("--csv", help="append rows to this CSV file (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("learn-demo", help="learn p = w'theta by gradient descent")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--lr", type=float, default=learn.DEFAULT_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the loss curve here (default: stdout)")
    p.set_defaults(func=cmd_learn_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScqpError, ValueError, OSError) as exc:
        print(f"scqp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
