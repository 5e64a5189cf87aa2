"""End-to-end blockwise decomposition, the dense oracle run, and comparisons."""
from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baseline import EconomySVD, economy_svd_gram
from .errors import ConvergenceError, DegenerateCutError, UsageError
from .jacobi import jacobi_eigh, one_sided_jacobi
from .matrix import (
    BLOCK_IDS,
    MemoryBudget,
    gram_blockwise,
    permute,
    read_triplets,
    spmm,
    split_blocks,
    write_dense_csv,
)
from .partition import choose_cut, ensure_portrait, gram_report, partition_report, sort_by_norms
from .reflector import full_block_svd
from .trace import TraceIterState, iterate, nondiagonality

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    input: str | None = None
    one_based: bool = False
    fraction: float = 2.0 / 3.0
    ratio_tol: float = 1e-4
    max_iters: int = 500
    tol_rank: float = 1e-12
    budget_bytes: int | None = None
    out_dir: str | None = None
    seed: int = 0
    full: bool = False
    rank: int | None = None

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise UsageError("fraction must lie in (0, 1)")
        if not 0.0 < self.ratio_tol < 1.0:
            raise UsageError("ratio_tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise UsageError("max_iters must be at least 1")
        if self.rank is not None and self.rank < 0:
            raise UsageError("rank must be non-negative")


@dataclass
class DecomposeResult:
    singular_values: np.ndarray
    u_slice: np.ndarray
    v_slice: np.ndarray
    iteration_log: list = field(default_factory=list)
    partition_report: object = None
    gram_report: object = None
    provenance: dict = field(default_factory=dict)
    converged: bool = True
    full_spectrum: np.ndarray | None = None
    budget: MemoryBudget | None = None

    @property
    def rank(self):
        return int(self.singular_values.size)


def implied_budget_bytes(shape, cut, full=False):
    """Bytes of the largest dense object the blockwise run is entitled to.

    That is the largest of the four blocks of ``A`` (as if dense) and the
    two slices of the accumulated factor. The opt-in full decomposition
    needs all of ``A`` dense.
    """
    rows, cols = shape
    c = cut
    sizes = [c * c, c * (cols - c), (rows - c) * c, (rows - c) * (cols - c), cols * max(c, cols - c), rows * c]
    if full:
        sizes.append(rows * cols)
    return 8 * max(sizes)


def assemble_economy(a_blocks, cut, v_slice, d):
    """``U = A V D^{-1}`` computed block by block from the sparse blocks of ``A``.

    ``d`` holds singular values (square roots of the Gram eigenvalues).
    """
    d = np.asarray(d, dtype=np.float64)
    if d.size and d.min() <= 0.0:
        raise ValueError("assemble_economy needs strictly positive singular values")
    v_top, v_bot = v_slice[:cut], v_slice[cut:]
    top = spmm(a_blocks["11"], v_top) + spmm(a_blocks["12"], v_bot)
    bottom = spmm(a_blocks["21"], v_top) + spmm(a_blocks["22"], v_bot)
    return np.vstack([top, bottom]) / d


def _unpermute(rows_sorted, perm):
    return rows_sorted[perm.inverse().map]


def _echo(cfg):
    return {k: v for k, v in asdict(cfg).items()}


def _truncate(values, u, v, rank):
    if rank is None:
        return values, u, v
    return values[:rank], u[:, :rank], v[:, :rank]


def decompose(m, cfg=None, budget=None, clock=time.perf_counter):
    """Blockwise economy SVD of the dominant block of ``m``.

    Sort, cut, build the Gram blocks, run the trace iteration on them, then
    diagonalize the leading block and assemble ``U`` blockwise.
    """
    cfg = cfg if cfg is not None else RunConfig()
    mt, transposed = ensure_portrait(m)
    row_p, col_p = sort_by_norms(mt)
    s = permute(mt, row_p, col_p)
    try:
        part = choose_cut(s, cfg.fraction)
    except DegenerateCutError as exc:
        log.warning("no useful cut (%s); falling back to the dense Gram route", exc)
        res = baseline(m, cfg, budget)
        res.provenance["notice"] = f"fallback to baseline: {exc}"
        return res
    c = part.col_cut
    if budget is None:
        limit = cfg.budget_bytes if cfg.budget_bytes is not None else implied_budget_bytes(s.shape, c, cfg.full)
        budget = MemoryBudget(limit)

    report = partition_report(s, part)
    gram = gram_blockwise(s, part, budget, allow_diag_g22=False)
    n = s.n_cols
    budget.claim("V1", (n, c))
    budget.claim("V2", (n, n - c))
    state0 = TraceIterState.start(gram.g11, gram.g12, gram.g22)
    greport = gram_report(gram, state0.nondiag, density_whole=s.nnz / (s.n_rows * s.n_cols))

    converged = True
    try:
        state, records = iterate(state0, cfg.ratio_tol, cfg.max_iters, clock=clock, own=True)
    except ConvergenceError as exc:
        log.error("%s", exc)
        state, records, converged = exc.state, exc.log, False

    blocks = split_blocks(s, part)
    budget.claim("AV1", (s.n_rows, c))
    av1 = assemble_economy(blocks, c, state.v1, np.ones(c))
    g11 = av1.T @ av1
    q, lam = jacobi_eigh(0.5 * (g11 + g11.T))
    keep = lam > cfg.tol_rank * max(lam[0], 0.0) if lam.size else lam > 0
    keep &= lam > 0.0
    if not keep.all():
        log.info("rank cutoff drops %d of %d values", int((~keep).sum()), keep.size)
    q, d = q[:, keep], np.sqrt(lam[keep])
    v_sorted = state.v1 @ q
    budget.claim("U", (s.n_rows, d.size))
    u_sorted = (av1 @ q) / d

    u = _unpermute(u_sorted, row_p)
    v = _unpermute(v_sorted, col_p)
    if transposed:
        u, v = v, u
    values, u, v = _truncate(d, u, v, cfg.rank)

    full = None
    if cfg.full:
        budget.claim("A", s.shape)
        full = full_block_svd(s.to_dense(), c).singular_values

    prov = {
        "transposed": transposed,
        "row_permutation": row_p.map.tolist(),
        "col_permutation": col_p.map.tolist(),
        "cut": c,
        "shape": list(m.shape),
        "nnz": m.nnz,
        "iterations": len(records) - 1,
        "converged": converged,
        "config": _echo(cfg),
    }
    return DecomposeResult(values, u, v, records, report, greport, prov, converged, full, budget)


def baseline(m, cfg=None, budget=None):
    """Full economy SVD of ``m`` by the Gram route (the oracle)."""
    cfg = cfg if cfg is not None else RunConfig()
    budget = budget if budget is not None else MemoryBudget(cfg.budget_bytes)
    mt, transposed = ensure_portrait(m)
    if mt.n_cols == 0 or mt.nnz == 0:
        svd = EconomySVD(np.zeros((mt.n_rows, 0)), np.zeros(0), np.zeros((mt.n_cols, 0)))
    else:
        svd = economy_svd_gram(mt, cfg.tol_rank, budget)
    if transposed:
        svd = svd.transposed()
    values, u, v = _truncate(svd.d, svd.u_slice, svd.v_slice, cfg.rank)
    prov = {
        "transposed": transposed,
        "shape": list(m.shape),
        "nnz": m.nnz,
        "route": "gram",
        "config": _echo(cfg),
    }
    return DecomposeResult(values, u, v, [], None, None, prov, True, None, budget)


def load_input(cfg):
    if not cfg.input:
        raise UsageError("an input file is required")
    return read_triplets(cfg.input, one_based=cfg.one_based)


def run_decompose(cfg, budget=None):
    return decompose(load_input(cfg), cfg, budget)


def run_baseline(cfg, budget=None):
    return baseline(load_input(cfg), cfg, budget)


@dataclass
class CompareReport:
    index: np.ndarray
    a: np.ndarray
    b: np.ndarray
    abs_diff: np.ndarray
    rel_diff: np.ndarray
    max_angle: float | None = None

    def max_rel(self, exclude_lowest=0):
        r = self.rel_diff[: self.rel_diff.size - exclude_lowest]
        return float(r.max()) if r.size else 0.0

    def to_tsv(self):
        lines = ["INDEX\tA\tB\tABS DIFF\tREL DIFF"]
        for i, a, b, da, dr in zip(self.index, self.a, self.b, self.abs_diff, self.rel_diff):
            lines.append(f"{i}\t{a:.17g}\t{b:.17g}\t{da:.3e}\t{dr:.3e}")
        if self.max_angle is not None:
            lines.append(f"# max principal angle between v slices: {self.max_angle:.3e}")
        return "\n".join(lines) + "\n"


def compare(result_a, result_b, k=None, angles=False):
    """Differences of the top ``k`` singular values of two results."""
    avail = min(result_a.rank, result_b.rank)
    k = avail if k is None else int(k)
    if k > avail or k < 0:
        raise UsageError(f"k={k} exceeds the {avail} values both results provide")
    a, b = result_a.singular_values[:k], result_b.singular_values[:k]
    abs_diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    rel = np.divide(abs_diff, scale, out=np.zeros_like(abs_diff), where=scale > 0)
    angle = None
    if angles and k:
        y, _ = one_sided_jacobi(result_a.v_slice[:, :k].T @ result_b.v_slice[:, :k])
        smallest = float(np.linalg.norm(y, axis=0).min())
        angle = math.acos(min(1.0, smallest))
    return CompareReport(np.arange(k), a, b, abs_diff, rel, angle)


# ------------------------------------------------------------------ outputs


def iterations_tsv(records):
    lines = ["ITER\tTRACE11\tTRACE22\tNONDIAG\tSECONDS"]
    for r in records:
        secs = "-" if r.seconds is None else f"{r.seconds:.2f}"
        lines.append(f"{r.iteration}\t{r.trace11:.17g}\t{r.trace22:.17g}\t{r.nondiag:.17g}\t{secs}")
    return "\n".join(lines) + "\n"


def write_outputs(result, out_dir, figures=True):
    """Write values, factor slices, tables, provenance and figures to ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    with open(path("singular_values.txt"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{x:.17g}\n" for x in result.singular_values)
    write_dense_csv(result.u_slice, path("u_slice.csv"))
    write_dense_csv(result.v_slice, path("v_slice.csv"))
    if result.iteration_log:
        with open(path("iterations.tsv"), "w", encoding="utf-8") as fh:
            fh.write(iterations_tsv(result.iteration_log))
    if result.partition_report is not None:
        with open(path("partition.tsv"), "w", encoding="utf-8") as fh:
            fh.write(result.partition_report.to_tsv())
    if result.gram_report is not None:
        with open(path("gram.tsv"), "w", encoding="utf-8") as fh:
            fh.write(result.gram_report.to_tsv())
    if result.full_spectrum is not None:
        with open(path("full_spectrum.txt"), "w", encoding="utf-8") as fh:
            fh.writelines(f"{x:.17g}\n" for x in result.full_spectrum)
    with open(path("provenance.json"), "w", encoding="utf-8") as fh:
        json.dump(result.provenance, fh, indent=1)
    if figures:
        from .plotting import plot_iterations, plot_singular_values

        written.append(plot_singular_values(result.singular_values, os.path.join(out_dir, "singular_values.png")))
        if result.iteration_log:
            written.append(plot_iterations(result.iteration_log, os.path.join(out_dir, "iterations.png")))
    return written


def stats(m, fraction=2.0 / 3.0):
    """Partition and Gram tables for the sorted matrix (no iteration)."""
    mt, _ = ensure_portrait(m)
    row_p, col_p = sort_by_norms(mt)
    s = permute(mt, row_p, col_p)
    part = choose_cut(s, fraction)
    gram = gram_blockwise(s, part)
    nondiag = nondiagonality(gram.g12)
    return s, part, partition_report(s, part), gram_report(gram, nondiag, s.nnz / max(s.n_rows * s.n_cols, 1))


__all__ = [
    "BLOCK_IDS",
    "CompareReport",
    "DecomposeResult",
    "RunConfig",
    "assemble_economy",
    "baseline",
    "compare",
    "decompose",
    "implied_budget_bytes",
    "iterations_tsv",
    "run_baseline",
    "run_decompose",
    "stats",
    "write_outputs",
]
