"""``blockmps`` command-line driver.

Exit codes: 0 success, 2 validation failure, 3 parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from ._validation import ValidationError
from .coefficients import CoefficientParseError

EXIT_OK, EXIT_VALIDATION, EXIT_PARSE = 0, 2, 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockmps", description="Block-sparse MPS experiments and utilities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ranks", help="MPO rank profiles, constructed and compressed")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--banded", type=int, metavar="d", help="one-body bandwidth")
    p.add_argument("--local", type=int, metavar="d", help="two-body index spread")
    _add_output(p)

    p = sub.add_parser("rounding", help="particle-number drift after rank truncation")
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--N", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-exponent", type=int, default=50, help="eps runs over 2^0 .. 2^-max")
    _add_output(p)

    p = sub.add_parser("apply", help="output ranks after applying an MPO to a rank-1 MPS")
    p.add_argument("--K", type=int, default=32)
    p.add_argument("--op", choices=("one", "two"), default="one")
    p.add_argument("--eps", type=float, nargs="+", default=list(ex.APPLY_EPS))
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("groundstate", help="ground state in a fixed particle-number sector")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--file", type=Path, help="coefficient file")
    src.add_argument("--preset", choices=("hopping-chain",))
    p.add_argument("--K", type=int, default=8, help="orbitals for presets")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--solver", choices=ex.SOLVERS, default="als")
    p.add_argument("--check", action="store_true", help="compare with an exact reference")
    p.add_argument("--max-iter", type=_positive_int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("convert", help="convert between full and block containers")
    p.add_argument("--in", dest="src", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--to", choices=("block", "full"), required=True)
    p.add_argument("--N", type=int, help="particle number (inferred when omitted)")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    return parser


def _emit(report: ex.ExperimentReport, out: Path | None, as_json: bool) -> None:
    text = report.to_json() + "\n" if as_json else report.to_csv()
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
    print(f"# {report.name}: seed={report.seed} rng={ex.RNG_ALGORITHM} wall={report.wall_time:.2f}s", file=sys.stderr)


def run(args) -> int:
    if args.command == "ranks":
        report = ex.run_ranks(args.K, args.seed, args.banded, args.local)
    elif args.command == "rounding":
        report = ex.run_rounding(args.K, args.N, args.seed, tuple(range(args.max_exponent + 1)))
    elif args.command == "apply":
        report = ex.run_apply(args.K, args.op, args.eps, args.seed)
    elif args.command == "groundstate":
        T, V = ex.load_problem(args.file, args.preset, args.K)
        report = ex.run_groundstate(T, V, args.N, args.solver, args.seed, args.check, args.max_iter, args.tol)
    else:
        report = ex.run_convert(args.src, args.out, args.to, args.N)
        _emit(report, None, args.json)
        return EXIT_OK
    _emit(report, args.out, args.json)
    if report.summary.get("passed") is False:
        print(f"error: energy differs from the reference by {report.summary['error']:.3e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except CoefficientParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
