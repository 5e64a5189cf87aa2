"""Command line entry point: ``blocksvd <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 iteration did not converge (partial
output written), 3 input/format error, 4 memory budget exceeded.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .driver import (
    RunConfig,
    compare,
    load_input,
    run_baseline,
    run_decompose,
    stats,
    write_outputs,
)
from .errors import (
    BlockSVDError,
    DegenerateCutError,
    DimensionError,
    MemoryBudgetError,
    ParseError,
    UsageError,
)
from .matrix import col_norms_sq, write_triplets, format_triplets
from .synthetic import gen_synthetic

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_IO, EXIT_BUDGET = 0, 1, 2, 3, 4

log = logging.getLogger("blocksvd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, out=True):
    p.add_argument("--input", required=True, help="triplet file: row,col,value per line")
    p.add_argument("--one-based", action="store_true", help="indices in the file start at 1")
    p.add_argument("--budget-bytes", type=int, default=None, help="largest dense block allowed")
    p.add_argument("--rank", type=int, default=None, help="keep only the leading values")
    if out:
        p.add_argument("--out-dir", default=None, help="directory for values, factors, tables, figures")


def _iteration_opts(p):
    p.add_argument("--fraction", type=float, default=2.0 / 3.0,
                   help="share of the square norm the first column block must hold")
    p.add_argument("--ratio-tol", type=float, default=1e-4,
                   help="stop when nondiag/trace11 falls to this times its start value")
    p.add_argument("--max-iters", type=int, default=500)


def build_parser():
    parser = _Parser(prog="blocksvd", description="Blockwise economy SVD of large sparse matrices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="blockwise SVD of the dominant block")
    _common(p)
    _iteration_opts(p)
    p.add_argument("--full", action="store_true",
                   help="also block-diagonalize the dense matrix for the whole spectrum (small inputs)")

    p = sub.add_parser("baseline", help="dense Gram-route SVD (oracle)")
    _common(p)

    p = sub.add_parser("stats", help="partition and Gram block tables")
    _common(p)
    p.add_argument("--fraction", type=float, default=2.0 / 3.0)

    p = sub.add_parser("compare", help="blockwise run against the oracle")
    _common(p)
    _iteration_opts(p)
    p.add_argument("--k", type=int, default=None, help="number of leading values to compare")

    p = sub.add_parser("gen-synthetic", help="write a seeded Zipfian count matrix")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--cols", type=int, default=400)
    p.add_argument("--density", type=float, default=0.005)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--output", default=None, help="file to write (stdout if omitted)")
    return parser


def _config(args):
    return RunConfig(
        input=args.input,
        one_based=args.one_based,
        fraction=getattr(args, "fraction", 2.0 / 3.0),
        ratio_tol=getattr(args, "ratio_tol", 1e-4),
        max_iters=getattr(args, "max_iters", 500),
        budget_bytes=args.budget_bytes,
        out_dir=args.out_dir,
        full=getattr(args, "full", False),
        rank=args.rank,
    )


def _print_values(values, out):
    for x in values:
        out.write(f"{x:.17g}\n")


def _decompose(args, out):
    cfg = _config(args)
    result = run_decompose(cfg)
    if cfg.out_dir:
        write_outputs(result, cfg.out_dir)
    _print_values(result.singular_values, out)
    if "notice" in result.provenance:
        log.warning(result.provenance["notice"])
    if not result.converged:
        log.error("trace iteration stopped at max-iters; output is partial")
        return EXIT_CONVERGENCE
    return EXIT_OK


def _baseline(args, out):
    cfg = _config(args)
    result = run_baseline(cfg)
    if cfg.out_dir:
        write_outputs(result, cfg.out_dir)
    _print_values(result.singular_values, out)
    return EXIT_OK


def _stats(args, out):
    cfg = _config(args)
    s, part, report, greport = stats(load_input(cfg), cfg.fraction)
    out.write(report.to_tsv())
    out.write("\n")
    out.write(greport.to_tsv())
    if cfg.out_dir:
        from .plotting import plot_column_norms

        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "partition.tsv"), "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv())
        with open(os.path.join(cfg.out_dir, "gram.tsv"), "w", encoding="utf-8") as fh:
            fh.write(greport.to_tsv())
        plot_column_norms(col_norms_sq(s), part.col_cut, os.path.join(cfg.out_dir, "column_norms.png"))
    return EXIT_OK


def _compare(args, out):
    cfg = _config(args)
    m = load_input(cfg)
    from .driver import baseline, decompose

    block = decompose(m, cfg)
    oracle = baseline(m, RunConfig(input=cfg.input, budget_bytes=cfg.budget_bytes))
    report = compare(block, oracle, args.k, angles=True)
    out.write(report.to_tsv())
    if cfg.out_dir:
        from .plotting import plot_singular_values

        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "compare.tsv"), "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv())
        plot_singular_values(
            block.singular_values, os.path.join(cfg.out_dir, "compare.png"), oracle.singular_values
        )
    return EXIT_OK if block.converged else EXIT_CONVERGENCE


def _gen(args, out):
    try:
        m = gen_synthetic(args.rows, args.cols, args.density, args.zipf, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.output:
        write_triplets(m, args.output, one_based=args.one_based)
    else:
        out.write(format_triplets(m, one_based=args.one_based))
    return EXIT_OK


COMMANDS = {
    "decompose": _decompose,
    "baseline": _baseline,
    "stats": _stats,
    "compare": _compare,
    "gen-synthetic": _gen,
}


def main(argv=None, out=None):
    out = out if out is not None else sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MemoryBudgetError as exc:
        print(f"memory budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ParseError, DimensionError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegenerateCutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlockSVDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
