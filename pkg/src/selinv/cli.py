"""Command-line interface.

  selinv verify     -- run selected inversion and check it against a dense oracle
  selinv experiment -- run the scheme comparison and export CSV/JSON/PNG reports

Exit codes: 0 success, 1 verification failure, 2 bad input, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import analysis, comm, plots
from .comm import build_grid
from .runtime import DeadlockError, prepare, run_parallel_selinv
from .seqinv import (ORACLE_MAX_N, dense_inverse_oracle, extract_selected,
                     selected_inversion)
from .sparse import (MatrixFormatError, gen_arrow, gen_laplacian_2d,
                     gen_random_diag_dominant, gen_tridiagonal,
                     read_matrix_market)

VERIFY_RTOL = 1e-10


def _parse_grid(text):
    try:
        pr, pc = text.lower().split("x")
        return build_grid(int(pr), int(pc))
    except Exception:
        raise argparse.ArgumentTypeError(f"bad grid spec: {text!r} (want PRxPC)")


def _load_matrix(args):
    if args.matrix:
        return read_matrix_market(args.matrix)
    spec = args.gen
    name, _, params = spec.partition(":")
    if name == "lap2d":
        nx, _, ny = params.partition("x")
        return gen_laplacian_2d(int(nx), int(ny))
    if name == "tridiag":
        return gen_tridiagonal(int(params))
    if name == "arrow":
        return gen_arrow(int(params))
    if name == "randdd":
        n, _, seed = params.partition(":")
        return gen_random_diag_dominant(int(n), int(seed or 0))
    raise MatrixFormatError(f"unknown generator: {spec!r}")


def _add_matrix_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--matrix", help="Matrix Market file to read")
    g.add_argument("--gen", help="generator spec: lap2d:NXxNY, tridiag:N, "
                                 "arrow:N, randdd:N[:SEED]")
    p.add_argument("--max-supernode", type=int, default=48,
                   help="supernode size cap (default 48)")


def cmd_verify(args):
    A = _load_matrix(args)
    f = prepare(A, args.max_supernode)
    if args.grid.p > 1:
        res, ledger = run_parallel_selinv(A, args.grid, args.tree, args.seed,
                                          prepared=f)
        print(f"parallel run: {ledger.message_count()} messages, "
              f"{ledger.total('sent')} payload bytes")
    else:
        res = selected_inversion(f)
    if A.n > ORACLE_MAX_N:
        print(f"matrix too large for the dense oracle (n={A.n}); "
              f"skipping the check", file=sys.stderr)
        return 2
    dense = dense_inverse_oracle(A)
    ref = extract_selected(dense, None, f.part, f=f)
    err = res.rel_error_vs(ref)
    ok = err <= VERIFY_RTOL
    print(f"selected inversion vs dense oracle: rel error {err:.3e} "
          f"({'OK' if ok else 'FAIL'}, tol {VERIFY_RTOL:.0e})")
    return 0 if ok else 1


def cmd_experiment(args):
    A = _load_matrix(args)
    os.makedirs(args.out, exist_ok=True)
    seeds = args.seeds
    report, ledgers = analysis.compare_schemes(
        A, args.grid, seeds, max_size=args.max_supernode,
        direction=args.direction)
    path = os.path.join(args.out, "comparison.json")
    analysis.write_comparison_json(path, report)
    written = [path]
    for kind, ledger in ledgers.items():
        base = os.path.join(args.out, f"{kind}_{args.direction}")
        analysis.write_heatmap_csv(base + ".csv", ledger, args.grid,
                                   args.direction)
        analysis.write_histogram_csv(base + "_hist.csv", ledger,
                                     args.direction, bins=args.bins)
        plots.render_heatmap(base + ".png", ledger, args.grid, args.direction,
                             title=f"{kind}: {args.direction} volume per rank")
        plots.render_histogram(base + "_hist.png", ledger, args.direction,
                               bins=args.bins,
                               title=f"{kind}: {args.direction} distribution")
        written += [base + ".csv", base + "_hist.csv",
                    base + ".png", base + "_hist.png"]
    for kind in report["schemes"]:
        agg = report["schemes"][kind]["aggregate"]
        print(f"{kind:8s} mean {agg['mean']:.4f} MB  max {agg['max']:.4f} MB  "
              f"stddev {agg['stddev']:.4f} MB")
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="selinv",
                                 description="sparse selected inversion with an "
                                             "emulated distributed runtime")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check selected inversion against a dense oracle")
    _add_matrix_args(v)
    v.add_argument("--grid", type=_parse_grid, default=build_grid(1, 1),
                   help="process grid PRxPC (default 1x1 = sequential)")
    v.add_argument("--tree", choices=comm.TREE_KINDS, default=comm.FLAT)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("experiment", help="compare collective schemes and export reports")
    _add_matrix_args(e)
    e.add_argument("--grid", type=_parse_grid, required=True)
    e.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2],
                   help="seeds for the shifted scheme (default: 0 1 2)")
    e.add_argument("--direction", choices=["sent", "received"], default="sent")
    e.add_argument("--bins", type=int, default=10)
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MatrixFormatError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DeadlockError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
