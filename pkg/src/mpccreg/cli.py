"""Command-line interface: ``mpccreg solve|bench|profile|check|oracle``.

Exit codes: 0 success, 1 not converged or check failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import emit_report, failure_table, metric_matrix, performance_profile, profile_csv, read_csv, run_bench
from .driver import DriverConfig, outer_solve
from .expr import DomainError
from .model import MpccProblem, ProblemError, load_problem
from .regularize import Scheme
from .stationarity import MpccMultipliers, check_strong_stationarity, estimate_multipliers
from .suite import builtin_suite, enumerate_branches

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_file(path: str) -> MpccProblem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return load_problem(text, name=Path(path).stem)
    except (ProblemError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _schemes(text: str) -> list[Scheme]:
    if text.strip() == "all":
        return list(Scheme)
    try:
        out = [Scheme.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not out:
        raise UsageError("no schemes given")
    return out


def _config(args) -> DriverConfig:
    try:
        return DriverConfig(t0=args.t0, rho2=args.rho2, t_min=args.tmin, k_max=args.kmax, eps1=args.eps1, eps2=args.eps2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fmt_vec(x) -> str:
    return "[" + ", ".join(f"{v:.6g}" for v in x) + "]"


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- commands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    problem = _load_file(args.file)
    scheme = _schemes(args.scheme)[0]
    res = outer_solve(problem, scheme, _config(args))
    if args.json:
        print(json.dumps(res.to_dict(), indent=2))
    else:
        print(f"problem      {problem.name}")
        print(f"scheme       {scheme.label}")
        print(f"status       {res.status}")
        print(f"f*           {res.f:.6E}")
        print(f"x*           {_fmt_vec(res.x)}")
        print(f"it_int       {res.it_int}")
        print(f"it_ext       {res.it_ext}")
        print(f"stop reason  {res.stop_reason.value}")
        if args.trace:
            print()
            print(f"{'k':>3} {'t_k':>10} {'inner':>6} {'rel_step':>11} {'grad_norm':>11}  status")
            for r in res.trace:
                print(f"{r.k:>3} {r.t:>10.3e} {r.inner_iterations:>6} {r.relative_step:>11.4e} {r.grad_norm:>11.4e}  {r.inner_status}")
    return EXIT_OK if res.converged else EXIT_FAIL


def _collect(args) -> list[MpccProblem]:
    if args.dir:
        problems = []
        for path in sorted(Path(args.dir).glob("*.mpcc")):
            try:
                problems.append(_load_file(str(path)))
            except UsageError as exc:
                print(f"skipping {exc}", file=sys.stderr)
        return problems
    return [sp.problem for sp in builtin_suite()]


def cmd_bench(args) -> int:
    schemes = _schemes(args.schemes)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    problems = _collect(args)
    if not problems:
        raise UsageError("empty problem set")
    report = run_bench(problems, schemes, _config(args), workers=args.workers, timestamp=not args.deterministic)
    _write(emit_report(report, args.format), args.out)
    if args.out:
        print(failure_table(report))
    return EXIT_OK


def cmd_profile(args) -> int:
    try:
        rows = read_csv(Path(args.results).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {args.results}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{args.results}: {exc}") from None
    try:
        _, schemes, t = metric_matrix(rows, args.metric)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip("'\"")) from None
    if t.size == 0:
        raise UsageError("no result rows")
    _write(profile_csv(performance_profile(t, schemes)), args.out)
    return EXIT_OK


def _parse_point(text: str, n: int) -> np.ndarray:
    try:
        x = np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"malformed point {text!r}") from None
    if x.size != n:
        raise UsageError(f"point has {x.size} entries, problem has {n} variables")
    return x


def cmd_check(args) -> int:
    problem = _load_file(args.file)
    x = _parse_point(args.point, problem.nvars)
    if args.multipliers:
        try:
            data = json.loads(Path(args.multipliers).read_text())
            mult = MpccMultipliers.from_dict(problem, data)
        except (OSError, ValueError) as exc:
            raise UsageError(f"bad multipliers file: {exc}") from None
    else:
        mult = estimate_multipliers(problem, x)
    try:
        report = check_strong_stationarity(problem, x, mult, tol=args.tol)
    except DomainError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.format())
    return EXIT_OK if report.is_strongly_stationary else EXIT_FAIL


def cmd_oracle(args) -> int:
    problem = _load_file(args.file)
    if problem.q > 12:
        raise UsageError("branch enumeration supports at most 12 pairs")
    res = enumerate_branches(problem)
    for br in res.branches:
        label = "".join(str(v) for v in br.mask) or "-"
        status = br.status.value if br.status is not None else "domain_error"
        value = f"{br.f:.6E}" if br.converged else "NC"
        print(f"branch {label:>12}  {status:<20} {value}")
    if not res.available:
        print("oracle unavailable: no branch converged")
        return EXIT_FAIL
    print(f"best f*      {res.best_f:.6E}")
    print(f"best x*      {_fmt_vec(res.best_x)}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    defaults = DriverConfig()
    parser = _Parser(prog="mpccreg", description="Regularization methods for MPCCs.")
    parser.add_argument("--deterministic", action="store_true", help="suppress timestamps in output and logs")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS, help="suppress timestamps")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def driver_flags(p):
        p.add_argument("--t0", type=float, default=defaults.t0)
        p.add_argument("--rho2", type=float, default=defaults.rho2)
        p.add_argument("--tmin", type=float, default=defaults.t_min)
        p.add_argument("--kmax", type=int, default=defaults.k_max)
        p.add_argument("--eps1", type=float, default=defaults.eps1)
        p.add_argument("--eps2", type=float, default=defaults.eps2)

    p = sub.add_parser("solve", parents=[common], help="solve one problem file")
    p.add_argument("file")
    p.add_argument("--scheme", default="reg", help="reg, reg-one, reg-eq or reg-eq-one")
    driver_flags(p)
    p.add_argument("--trace", action="store_true", help="print one row per outer iteration")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", parents=[common], help="run schemes over a problem set")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--suite", choices=["builtin"], default="builtin")
    src.add_argument("--dir")
    p.add_argument("--schemes", default="all", help="comma list or 'all'")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=["csv", "text"], default="csv")
    driver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("profile", parents=[common], help="performance profile from a bench CSV")
    p.add_argument("results")
    p.add_argument("--metric", default="it_int")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("check", parents=[common], help="strong stationarity check at a point")
    p.add_argument("file")
    p.add_argument("point", help="comma separated values")
    p.add_argument("--multipliers", help="JSON file with lam_eq, lam_in, z_lower, z_upper, nu1, nu2")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", parents=[common], help="branch enumeration for one problem file")
    p.add_argument("file")
    p.set_defaults(func=cmd_oracle)
    return parser


def _setup_logging(deterministic: bool) -> None:
    level = os.environ.get("MPCC_LOG", "WARNING").upper()
    fmt = "%(levelname)s %(name)s: %(message)s" if deterministic else "%(asctime)s %(levelname)s %(name)s: %(message)s"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=fmt, stream=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging(args.deterministic)
        return args.func(args)
    except UsageError as exc:
        print(f"mpccreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
