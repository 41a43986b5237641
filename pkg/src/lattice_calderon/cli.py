"""Command-line entry point: ``lattice-calderon <command> ...``.

Exit codes: 0 success, 1 validation failure, 2 I/O or schema failure.
"""

from __future__ import annotations

import argparse
import logging
import sys


from . import io
from .forward import assemble_dtn, random_conductivity
from .lattice import build_lattice
from .reconstruction import ReconstructionOptions, reconstruct
from .verification import (
    compare,
    error_growth_study,
    growth_decades,
    run_property_suite,
    trend_is_monotone,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


def _dist(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    if not (lo > 0 and hi >= lo):
        raise argparse.ArgumentTypeError("need 0 < LO <= HI")
    return lo, hi


def _n_list(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def cmd_generate(args) -> int:
    lat = build_lattice(args.dim, args.n)
    lo, hi = args.dist
    g = random_conductivity(lat, lo, hi, seed=args.seed)
    io.write_problem(args.output, lat, g, {"seed": args.seed, "distribution": [lo, hi]})
    print(f"wrote {lat.n_edges} edges to {args.output}")
    return EXIT_OK


def cmd_dtn(args) -> int:
    lat, g, _ = io.read_problem(args.input)
    dtn = assemble_dtn(lat, g)
    io.write_dtn(args.output, lat, dtn)
    print(f"wrote {lat.n_boundary}x{lat.n_boundary} DtN matrix to {args.output} "
          f"(asymmetry {dtn.asymmetry:.2e})")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    lat, dtn = io.read_dtn(args.input)
    opts = ReconstructionOptions(kernel_tol=args.tol, corners=args.corners, t_max=args.t_max)
    report = reconstruct(lat, dtn, opts)
    io.write_reconstruction(args.output, lat, report,
                            {"corners": args.corners, "kernel_tol": args.tol, "t_max": args.t_max})
    print(f"reconstructed {lat.n_edges} edges; {len(report.degraded_slices)} degraded slices")
    for line in report.diagnostics:
        print(f"  {line}")
    return EXIT_OK


def cmd_verify(args) -> int:
    lat, g, _ = io.read_problem(args.input)
    rlat, report, _ = io.read_reconstruction(args.recon)
    if (rlat.dim, rlat.size) != (lat.dim, lat.size):
        print(f"error: lattice mismatch: problem d={lat.dim} n={lat.size}, "
              f"reconstruction d={rlat.dim} n={rlat.size}", file=sys.stderr)
        return EXIT_IO
    er = compare(lat, g, report)
    io.write_error_csv(args.output, er)
    print(f"max abs error {er.max_abs_error:.3e}, median {er.median_abs_error:.3e}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    res = run_property_suite(args.dim, args.n, args.seed)
    for c in res.checks:
        print(c.line())
    print("all checks passed" if res.passed else f"{len(res.failures)} checks failed")
    return EXIT_OK if res.passed else EXIT_VALIDATION


def cmd_study(args) -> int:
    lo, hi = args.dist
    rows = error_growth_study(args.n_list, d=args.dim, lo=lo, hi=hi, seed=args.seed)
    if args.output:
        io.write_study_csv(args.output, rows)
    for r in rows:
        print(f"n={r.n:3d}  max_err={r.max_err:.3e}  median_err={r.median_err:.3e}")
    ok = trend_is_monotone(rows)
    print(f"growth {growth_decades(rows):.2f} decades; monotone trend: {'yes' if ok else 'no'}")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lattice-calderon", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random conductivity problem")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", type=_dist, default=(1.0, 2.0), help="LO,HI with LO > 0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("dtn", help="compute the DtN matrix of a problem file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_dtn)

    p = sub.add_parser("reconstruct", help="recover conductivities from a DtN file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--corners", choices=["all", "origin"], default="all")
    p.add_argument("--tol", type=float, default=1e-10, help="relative kernel tolerance")
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", help="per-edge error report as CSV")
    p.add_argument("-i", "--input", required=True, help="problem file")
    p.add_argument("--recon", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("selftest", help="run the structural property suite")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("study", help="error growth over lattice sizes")
    p.add_argument("--n-list", type=_n_list, required=True, help="e.g. 8..13 or 8,10,12")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--dist", type=_dist, default=(1.0, 2.0))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR)
    try:
        return args.func(args)
    except (io.SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
