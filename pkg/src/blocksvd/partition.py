"""Orientation, norm sorting, cut selection and block statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCutError
from .matrix import (
    BLOCK_IDS,
    BlockPartition,
    Permutation,
    col_norms_sq,
    extract_block,
    frobenius_sq,
    row_norms_sq,
)

REPORT_HEADER = ("BLOCK", "ROWS", "COLUMNS", "DENSITY", "SQUARE NORM", "NORM PERCENTAGE")
GRAM_HEADER = ("BLOCK", "ROWS", "COLUMNS", "DENSITY", "TRACE*", "PERCENTAGE")


def ensure_portrait(m):
    """Transpose wide matrices; the flag says whether U and V swap on output."""
    if m.n_rows < m.n_cols:
        return m.transpose(), True
    return m, False


def _descending(weights):
    return Permutation(np.argsort(-weights, kind="stable"))


def sort_by_norms(m):
    """Row and column permutations putting larger norms first (stable)."""
    return _descending(row_norms_sq(m)), _descending(col_norms_sq(m))


def choose_cut(m, fraction=2.0 / 3.0):
    """Smallest ``k`` whose leading ``k`` columns hold ``fraction`` of the square norm.

    Expects a norm-sorted matrix. The row cut equals the column cut so block
    11 is square.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    sq = col_norms_sq(m)
    total = float(sq.sum())
    if total == 0.0:
        raise DegenerateCutError("matrix is zero; no cut carries any norm")
    k = int(np.searchsorted(np.cumsum(sq), fraction * total, side="left")) + 1
    k = min(k, m.n_cols)
    if k >= m.n_cols:
        raise DegenerateCutError(
            f"{fraction:.4g} of the square norm needs all {m.n_cols} columns"
        )
    return BlockPartition(k, k)


@dataclass(frozen=True)
class ReportRow:
    block: str
    rows: int
    cols: int
    density: float  # fraction of nonzero entries
    value: float  # square norm, or trace / nuclear norm for Gram tables
    percentage: float


@dataclass(frozen=True)
class PartitionReport:
    rows: tuple
    header: tuple = REPORT_HEADER

    def row(self, block):
        for r in self.rows:
            if r.block == str(block):
                return r
        raise KeyError(block)

    def to_tsv(self):
        lines = ["\t".join(self.header)]
        for r in self.rows:
            lines.append(
                "\t".join(
                    [
                        r.block,
                        str(r.rows),
                        str(r.cols),
                        _pct(100.0 * r.density),
                        f"{r.value:.10g}",
                        _pct(r.percentage),
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def _pct(x):
    return f"{x:.2f}%"


def _density(nnz, rows, cols):
    size = rows * cols
    return nnz / size if size else 0.0


def partition_report(m, p):
    """Shape, density and square-norm share of the whole matrix and each block."""
    p.validate(m.shape)
    total = frobenius_sq(m)
    rows = [ReportRow("whole", m.n_rows, m.n_cols, _density(m.nnz, *m.shape), total, 100.0)]
    for which in BLOCK_IDS:
        b = extract_block(m, p, which)
        sq = frobenius_sq(b)
        share = 100.0 * sq / total if total else 0.0
        rows.append(ReportRow(which, b.n_rows, b.n_cols, _density(b.nnz, *b.shape), sq, share))
    return PartitionReport(tuple(rows))


def gram_report(gram, nondiag, density_whole=None):
    """Table of the Gram blocks: traces of 11 and 22, nuclear norm of 12.

    Percentages are relative to the total trace, so those of 11 and 22 add up
    to 100.
    """
    c, k = gram.g12.shape
    t11 = float(np.trace(gram.g11))
    t22 = gram.g22_trace
    total = t11 + t22

    def share(x):
        return 100.0 * x / total if total else 0.0

    def dens(a):
        return float(np.count_nonzero(a)) / a.size if a.size else 0.0

    g22_density = dens(gram.g22) if gram.g22 is not None else float("nan")
    rows = (
        ReportRow("whole", c + k, c + k, density_whole if density_whole is not None else float("nan"), total, 100.0),
        ReportRow("11", c, c, dens(gram.g11), t11, share(t11)),
        ReportRow("12", c, k, dens(gram.g12), nondiag, share(nondiag)),
        ReportRow("22", k, k, g22_density, t22, share(t22)),
    )
    return PartitionReport(rows, GRAM_HEADER)
