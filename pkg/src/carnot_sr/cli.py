"""Command-line entry point.

Exit codes: 0 success, 1 failed check (validation, classification, solve),
2 malformed input.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import io
from .algebra import construct_standard, validate
from .classify import classify_curve
from .curves import ControlGrid, horizontality_residual, lift
from .endpoint import endpoint_jacobian
from .extremals import hamiltonian_flow, legendre_matrices
from .solver import SolveOptions, solve_geodesic


class UsageError(ValueError):
    pass


def _vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()], dtype=float)
    except ValueError as exc:
        raise UsageError(f"bad {what} {text!r}") from exc


def _algebra(args):
    if args.spec:
        a = io.read_algebra(args.spec, check=False)
    elif args.std:
        params = {k: v for k, v in (("m", args.m), ("k", args.k), ("r", args.step)) if v is not None}
        a = construct_standard(args.std, **params)
    else:
        raise UsageError("give --std NAME or --spec FILE")
    return a


def _curve(args, a) -> ControlGrid:
    if not args.curve:
        raise UsageError("--curve is required")
    if args.curve.startswith("line:"):
        v = _vector(args.curve[5:], "line vector")
        if v.size != a.n1:
            raise UsageError(f"line vector needs {a.n1} components")
        return ControlGrid.line(a, v, args.N)
    return io.read_curve_csv(args.curve, a)


def _emit(args, name: str, text: str, stdout: bool = True):
    if args.out:
        io.write_atomic(os.path.join(args.out, name), text)
    if stdout:
        sys.stdout.write(text)


def cmd_algebra(args) -> int:
    a = _algebra(args)
    report = validate(a)
    out = {"name": a.name, "step": a.step, "layer_dims": list(a.layer_dims), "n": a.n,
           "valid": report.ok, "validation": report.to_dict()}
    _emit(args, "algebra.json", io.dumps(out))
    if args.out:
        io.write_atomic(os.path.join(args.out, "algebra.txt"), io.algebra_to_text(a))
    return 0 if report.ok else 1


def _checked_algebra(args):
    a = _algebra(args)
    report = validate(a)
    if not report.ok:
        sys.stdout.write(io.dumps({"valid": False, "validation": report.to_dict()}))
        return None
    return a


def cmd_lift(args) -> int:
    a = _checked_algebra(args)
    if a is None:
        return 1
    grid = _curve(args, a)
    path = lift(grid)
    res = horizontality_residual(path)
    _emit(args, "lifted.csv", io.curve_csv_text(grid, path), stdout=not args.out)
    if args.out:
        summary = {"N": grid.N, "end": path.end, "horizontality_residual": res}
        _emit(args, "lift.json", io.dumps(summary))
    return 0 if res <= 1e-10 else 1


def cmd_endpoint(args) -> int:
    a = _checked_algebra(args)
    if a is None:
        return 1
    grid = _curve(args, a)
    jet = endpoint_jacobian(grid)
    _emit(args, "endpoint.json", io.dumps(jet.summary()))
    return 0


def cmd_geodesic(args) -> int:
    a = _checked_algebra(args)
    if a is None:
        return 1
    if not args.target:
        raise UsageError("--target is required")
    target = _vector(args.target, "target")
    if target.size != a.n:
        raise UsageError(f"target needs {a.n} coordinates")
    opts = SolveOptions(N=args.N, seed=args.seed, multistart=args.multistart,
                        constraint_tol=args.tol or 1e-8)
    result = solve_geodesic(a, target, opts)
    _emit(args, "geodesic.json", io.dumps(result.to_dict()))
    if args.out:
        io.write_atomic(os.path.join(args.out, "solution.csv"), io.curve_csv_text(result.grid))
    return 0 if result.converged else 1


def cmd_classify(args) -> int:
    a = _checked_algebra(args)
    if a is None:
        return 1
    grid = _curve(args, a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report, chain = classify_curve(a, grid)
    out = {"verdict": chain.verdict, "singular": chain.singular, "report": report.to_dict(),
           "chain": chain.to_dict()}
    _emit(args, "classify.json", io.dumps(out))
    if args.out and report.abnormal_basis:
        cs = chain.stages[0].grid
        Q = legendre_matrices(cs, report.abnormal_basis[0])
        mins = np.linalg.eigvalsh(Q)[:, 0]
        tmid = (cs.times[1:] + cs.times[:-1]) / 2
        io.write_atomic(os.path.join(args.out, "legendre.csv"),
                        io.table_csv_text(["t", "min_eig"], zip(tmid, mins)))
    return 0 if chain.verdict == "normal" else 1


def cmd_flow(args) -> int:
    a = _checked_algebra(args)
    if a is None:
        return 1
    if not args.covector:
        raise UsageError("--covector is required")
    lam0 = _vector(args.covector, "covector")
    if lam0.size != a.n:
        raise UsageError(f"covector needs {a.n} coordinates")
    p = np.zeros(a.n) if not args.basepoint else _vector(args.basepoint, "basepoint")
    if p.size != a.n:
        raise UsageError(f"basepoint needs {a.n} coordinates")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    flow = hamiltonian_flow(a, p, lam0, args.T, args.steps)
    t = np.linspace(0.0, 1.0, args.steps + 1)
    header = (["t"] + [f"x{i}" for i in range(1, a.n + 1)]
              + [f"lam{i}" for i in range(1, a.n + 1)] + ["H"])
    rows = [[ti, *x, *lam, H] for ti, x, lam, H in
            zip(t, flow.path.points, flow.covectors, flow.hamiltonian)]
    _emit(args, "flow.csv", io.table_csv_text(header, rows), stdout=not args.out)
    if args.out:
        _emit(args, "flow.json", io.dumps({"steps": args.steps, "end": flow.path.end,
                                           "hamiltonian": float(flow.hamiltonian[0]),
                                           "energy_drift": flow.energy_drift}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnot-sr", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--std", help="heisenberg, engel, free or abelian")
    common.add_argument("--m", type=int, help="Heisenberg dimension parameter")
    common.add_argument("--k", type=int, help="number of generators")
    common.add_argument("--step", type=int, help="step of a free algebra")
    common.add_argument("--spec", help="algebra description file")
    common.add_argument("--curve", help="curve CSV or line:v1,v2,...")
    common.add_argument("--N", type=int, default=256, help="grid intervals (default 256)")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("algebra", parents=[common], help="construct and validate an algebra")
    sub.add_parser("lift", parents=[common], help="lift a first-layer curve")
    sub.add_parser("endpoint", parents=[common], help="end-point map summary")
    g = sub.add_parser("geodesic", parents=[common], help="minimise energy to a target")
    g.add_argument("--target", help="exponential coordinates of the target")
    g.add_argument("--multistart", type=int, default=8)
    sub.add_parser("classify", parents=[common], help="classify a curve")
    f = sub.add_parser("flow", parents=[common], help="normal Hamiltonian flow")
    f.add_argument("--covector", help="initial covector")
    f.add_argument("--basepoint", help="starting point (default identity)")
    f.add_argument("--T", type=float, default=1.0)
    f.add_argument("--steps", type=int, default=1024)
    return parser


COMMANDS = {"algebra": cmd_algebra, "lift": cmd_lift, "endpoint": cmd_endpoint,
            "geodesic": cmd_geodesic, "classify": cmd_classify, "flow": cmd_flow}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.N < 1:
        parser.error("--N must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:  # FormatError, AlgebraError, UsageError included
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
