"""Command-line convergence study.

Example::

    polyvem --mesh voronoi --n0 8 --levels 5 --degree 1 --solver both --out table.csv
"""
from __future__ import annotations

import argparse
import logging
import sys

from .assembly import AssemblyError
from .convergence import NonConvergenceError, StudyConfig, run_convergence, write_csv
from .mesh import MeshError
from .solver import NonlinearSolverError

MESH_KINDS = ("squares", "triangles", "quads", "voronoi")


def _mesh_arg(value: str) -> str:
    if value in MESH_KINDS or (value.startswith("file=") and len(value) > 5):
        return value
    raise argparse.ArgumentTypeError(
        f"expected one of {', '.join(MESH_KINDS)} or file=PATH, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polyvem",
        description="Virtual element convergence study for -div(kappa(u) grad u) = f "
                    "on the unit square.")
    p.add_argument("--mesh", type=_mesh_arg, default="voronoi",
                   help="squares, triangles, quads, voronoi or file=PATH (default voronoi)")
    p.add_argument("--n0", type=int, default=8, help="subdivisions of the coarsest mesh")
    p.add_argument("--levels", type=int, default=5, help="number of refinement levels")
    p.add_argument("--degree", type=int, default=1, help="polynomial order k")
    p.add_argument("--solver", choices=("fp", "newton", "both"), default="both")
    p.add_argument("--tol", type=float, default=1e-10, help="nonlinear increment tolerance")
    p.add_argument("--max-iter", type=int, default=50, help="nonlinear iteration cap")
    p.add_argument("--seed", type=int, default=0, help="seed of the random mesh families")
    p.add_argument("--problem", default="paper", help="paper, linear or patch:<degree>")
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    p.add_argument("--dump-matrices", nargs="?", const="dumps", default=None, metavar="DIR",
                   help="write assembled matrices (i j value) and projector CSVs to DIR")
    p.add_argument("--absolute-errors", action="store_true",
                   help="report absolute instead of relative errors")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(name)s: %(message)s", stream=sys.stderr)
    config = StudyConfig(mesh=args.mesh, n0=args.n0, levels=args.levels, degree=args.degree,
                         solver=args.solver, tol=args.tol, max_iter=args.max_iter,
                         seed=args.seed, problem=args.problem, out=args.out,
                         dump_matrices=args.dump_matrices,
                         absolute_errors=args.absolute_errors)
    if args.degree < 1 or args.tol <= 0 or args.max_iter < 1:
        print("error: degree and max-iter must be >= 1 and tol positive", file=sys.stderr)
        return 1
    try:
        records = run_convergence(config)
    except NonConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        _emit(err.records, args.out)
        return 2
    except NonlinearSolverError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError, MeshError, AssemblyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    _emit(records, args.out)
    return 0


def _emit(records, out) -> None:
    if out is None:
        write_csv(records, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
