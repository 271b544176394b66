"""Command-line front end.

Exit codes: 0 on success or a certified point, 1 when a check fails or a
status other than CERTIFIED_MODULO_SAMPLING is reached, 2 on usage and
input errors.  With ``--json`` exactly one JSON document goes to stdout.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable, Optional, Sequence

from . import __version__
from .certify import (
    CertifyConfig,
    certify_global,
    convexity_falsify,
    fritz_john_probe,
    lagrangian_probe,
    nondegeneracy_check,
    recover_multipliers,
    slater_search,
)
from .expr import ExprDomainError, ExprError, evaluate
from .geometry import InfeasiblePointError
from .model import (
    RNG_NAME,
    Problem,
    ProblemFormatError,
    SlaterCertificate,
    Tolerances,
    Vector,
    dumps,
    read_problem,
)
from .solver import barrier_solve, brute_force_oracle

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

# every certificate status has a documented exit code
STATUS_EXIT = {
    "CERTIFIED_MODULO_SAMPLING": EXIT_OK,
    "REFUTED_CONVEXITY": EXIT_FAILED,
    "DEGENERATE_FJ": EXIT_FAILED,
    "NO_SLATER": EXIT_FAILED,
    "KKT_RESIDUAL_TOO_LARGE": EXIT_FAILED,
}

POINT_COMMANDS = ("recover-multipliers", "fritz-john", "probe-lagrangian")


class UsageError(Exception):
    pass


def parse_point(text: str, n: int) -> Vector:
    try:
        x = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"malformed point {text!r}: expected comma-separated reals") from None
    if len(x) != n:
        raise UsageError(f"point {text!r} has {len(x)} coordinates, the problem has n = {n}")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", help="problem file")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--samples", type=int, default=1000, help="sample count (pairs, probe points, boundary points)")
    common.add_argument("--at", metavar="X1,X2,...", help="point for point-based commands")
    common.add_argument("--json", action="store_true", help="emit one JSON document")
    defaults = Tolerances()
    for name in ("eps_active", "eps_grad", "eps_kkt", "eps_feas"):
        common.add_argument("--" + name.replace("_", "-"), type=float, default=getattr(defaults, name))

    parser = argparse.ArgumentParser(prog="kktcert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kktcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("solve", parents=[common], help="log-barrier solve from a Slater point")
    p.add_argument("--trace", metavar="PATH", help="write one JSON line per barrier stage")
    sub.add_parser("certify", parents=[common], help="global-optimality certificate at --at (default: solver point)")
    sub.add_parser("check-slater", parents=[common], help="search for a strictly feasible point")
    sub.add_parser("check-nondegeneracy", parents=[common], help="sampled nonvanishing of active gradients")
    sub.add_parser("falsify-convexity", parents=[common], help="search for boundary convexity violations")
    sub.add_parser("recover-multipliers", parents=[common], help="NNLS multipliers at --at")
    sub.add_parser("fritz-john", parents=[common], help="Fritz-John multipliers at --at")
    p = sub.add_parser("oracle", parents=[common], help="brute-force grid minimum (n <= 4)")
    p.add_argument("--grid", type=int, default=201, help="grid points per axis")
    p.add_argument("--rounds", type=int, default=6, help="refinement rounds")
    sub.add_parser("probe-lagrangian", parents=[common], help="sample the Lagrangian built at the KKT point --at")
    return parser


class _Run:
    def __init__(self, args: argparse.Namespace, p: Problem, tol: Tolerances):
        self.args = args
        self.p = p
        self.tol = tol
        self.point: Optional[Vector] = parse_point(args.at, p.n) if args.at is not None else None

    def require_point(self) -> Vector:
        if self.point is None:
            raise UsageError(f"{self.args.command} needs --at")
        return self.point

    def slater(self):
        return slater_search(self.p, self.args.seed, self.tol)

    # each handler returns (exit code, result record, human-readable lines)

    def solve(self):
        s = self.slater()
        if not isinstance(s, SlaterCertificate):
            return EXIT_FAILED, s, [f"no strictly feasible start found (best max g = {s.best_value:.6g})"]
        if self.args.trace:
            with open(self.args.trace, "w", encoding="utf-8") as fh:
                r = barrier_solve(self.p, s, tol=self.tol, trace=fh)
        else:
            r = barrier_solve(self.p, s, tol=self.tol)
        lines = [f"x = {_fmt(r.x)}", f"f* = {r.fstar:.12g}", f"converged = {r.converged}"]
        if r.kkt is not None:
            lines += [
                f"lambda = {_fmt(r.kkt.lambda_)}",
                f"stationarity = {r.kkt.stationarity_residual:.3g}, complementarity = {r.kkt.complementarity_residual:.3g}",
            ]
        return (EXIT_OK if r.converged else EXIT_FAILED), r, lines

    def certify(self):
        x = self.point
        if x is None:
            s = self.slater()
            if isinstance(s, SlaterCertificate):
                x = barrier_solve(self.p, s, tol=self.tol).x
            else:
                x = s.best_point
        cfg = CertifyConfig(seed=self.args.seed, pairs=self.args.samples)
        c = certify_global(self.p, x, cfg, self.tol)
        lines = [f"status = {c.status}", f"x = {_fmt(c.x)}"]
        if c.kkt is not None:
            lines.append(f"lambda = {_fmt(c.kkt.lambda_)}")
        if c.convexity_violations:
            lines += _violation_lines(c.convexity_violations[:1])
        return STATUS_EXIT[c.status], c, lines

    def check_slater(self):
        s = self.slater()
        if isinstance(s, SlaterCertificate):
            return EXIT_OK, s, [f"x0 = {_fmt(s.x0)}", f"margin = {s.margin:.12g}"]
        return EXIT_FAILED, s, [f"no strictly feasible point; best max g = {s.best_value:.6g} at {_fmt(s.best_point)}"]

    def check_nondegeneracy(self):
        s = self.slater()
        extra = [self.point] if self.point is not None else []
        r = nondegeneracy_check(self.p, s, self.args.samples, self.args.seed, self.tol, extra_points=extra)
        lines = []
        for c in r.constraints:
            mn = "n/a" if c.min_gradient_norm is None else f"{c.min_gradient_norm:.6g}"
            lines.append(f"g{c.j}: {c.samples_tested} samples, min |grad| = {mn}, {len(c.failures)} failures")
            lines += [f"  failure at {_fmt(f.point)}: |grad| = {f.gradient_norm:.3g}" for f in c.failures[:3]]
        return (EXIT_OK if r.ok else EXIT_FAILED), r, lines

    def falsify_convexity(self):
        s = self.slater()
        if not isinstance(s, SlaterCertificate):
            return EXIT_FAILED, s, ["no Slater point; cannot shoot boundary rays"]
        r = convexity_falsify(self.p, s, self.args.samples, self.args.seed, self.tol)
        lines = [
            f"{r.pairs_tested} (boundary point, constraint) pairs tested",
            f"{len(r.violations)} confirmed violations, {len(r.unconfirmed)} unconfirmed",
        ]
        lines += _violation_lines(r.violations[:1])
        return (EXIT_FAILED if r.violations else EXIT_OK), r, lines

    def recover_multipliers(self):
        k = recover_multipliers(self.p, self.require_point(), self.tol)
        ok = k.stationarity_residual <= self.tol.eps_kkt and k.complementarity_residual <= self.tol.eps_kkt
        lines = [
            f"lambda = {_fmt(k.lambda_)}",
            f"stationarity = {k.stationarity_residual:.3g}, complementarity = {k.complementarity_residual:.3g}",
        ]
        return (EXIT_OK if ok else EXIT_FAILED), k, lines

    def fritz_john(self):
        c = fritz_john_probe(self.p, self.require_point(), self.tol)
        lines = [f"status = {c.status}", f"lambda0 = {c.lambda0:.12g}", f"lambda = {_fmt(c.lambda_)}", f"residual = {c.residual:.3g}"]
        return (EXIT_OK if c.status == "KKT" else EXIT_FAILED), c, lines

    def oracle(self):
        try:
            r = brute_force_oracle(self.p, self.args.grid, self.args.rounds, self.tol)
        except ValueError as exc:
            raise _Failed(str(exc)) from None
        return EXIT_OK, r, [f"x = {_fmt(r.x)}", f"value = {r.value:.12g}", f"grid resolution = {r.grid_resolution:.3g}"]

    def probe_lagrangian(self):
        x = self.require_point()
        k = recover_multipliers(self.p, x, self.tol)
        if k.stationarity_residual > self.tol.eps_kkt or k.complementarity_residual > self.tol.eps_kkt:
            raise _Failed(f"{_fmt(x)} is not a KKT point (stationarity {k.stationarity_residual:.3g})")
        fstar = evaluate(self.p.objective, x)
        r = lagrangian_probe(self.p, k, fstar, self.args.samples, self.args.seed, self.tol)
        lines = [
            f"lambda = {_fmt(r.lambda_)}",
            f"min Hessian eigenvalue seen = {r.min_hessian_eigenvalue_seen:.9g}",
            f"convex evidence = {r.convex_evidence}",
            f"{len(r.nonneg_violations)} nonnegativity violations in {r.samples_evaluated} samples",
        ]
        return EXIT_OK, r, lines


class _Failed(Exception):
    pass


def _fmt(x: Sequence[float]) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in x) + ")"


def _violation_lines(violations) -> list[str]:
    return [
        f"g{v.j}: x = {_fmt(v.x)}, y = {_fmt(v.y)}, <grad g, y - x> = {v.inner_product:.6g}; "
        f"witness t = {v.witness_t:g} at {_fmt(v.witness_point)} with g = {v.witness_gval:.6g}"
        for v in violations
    ]


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    """Run one command; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    try:
        tol = Tolerances(args.eps_active, args.eps_grad, args.eps_kkt, args.eps_feas)
        if args.samples < 1:
            raise UsageError("--samples must be positive")
        p = read_problem(args.problem)
        runner = _Run(args, p, tol)
        handler: Callable = getattr(runner, args.command.replace("-", "_"))
        code, result, lines = handler()
    except (OSError, ProblemFormatError, UsageError, ValueError) as exc:
        if isinstance(exc, InfeasiblePointError):
            return _fail(args, stdout, stderr, str(exc))
        print(f"kktcert: error: {exc}", file=stderr)
        return EXIT_USAGE
    except (_Failed, ExprDomainError) as exc:
        return _fail(args, stdout, stderr, str(exc))
    except ExprError as exc:
        print(f"kktcert: error: {exc}", file=stderr)
        return EXIT_USAGE

    if args.json:
        stdout.write(dumps(_envelope(args, tol, code, result)) + "\n")
    else:
        for line in lines:
            print(line, file=stdout)
    return code


def _envelope(args, tol: Tolerances, code: int, result) -> dict:
    return {
        "version": f"kktcert {__version__}",
        "command": args.command,
        "problem": args.problem,
        "seed": args.seed,
        "samples": args.samples,
        "rng": RNG_NAME,
        "tolerances": tol,
        "exit_code": code,
        "result": result,
    }


def _fail(args, stdout, stderr, message: str) -> int:
    print(f"kktcert: {message}", file=stderr)
    if args.json:
        tol = Tolerances(args.eps_active, args.eps_grad, args.eps_kkt, args.eps_feas)
        stdout.write(dumps(_envelope(args, tol, EXIT_FAILED, {"error": message})) + "\n")
    return EXIT_FAILED


def main() -> None:
    sys.exit(run())
