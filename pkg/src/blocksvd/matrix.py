"""Sparse triplet storage, permutations, block views and blockwise Gram products.

Dense matrices are plain 2-D ``float64`` numpy arrays throughout the package.
The full input matrix is only ever held as :class:`SparseTriplets`; anything
dense is at most one block in size and can be checked against a
:class:`MemoryBudget`.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, MemoryBudgetError, ParseError, UsageError

BLOCK_IDS = ("11", "12", "21", "22")


@dataclass(frozen=True, eq=False)
class SparseTriplets:
    """Canonical coordinate-form sparse matrix.

    Entries are kept in row-major order with duplicates summed and exact zeros
    dropped, so two matrices with the same values compare equal entry by entry.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_entries(cls, n_rows, n_cols, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise DimensionError("rows, cols and vals must have equal length")
        if n_rows < 0 or n_cols < 0:
            raise DimensionError("negative dimensions")
        if rows.size:
            if rows.min() < 0 or cols.min() < 0:
                raise DimensionError("negative index")
            if rows.max() >= n_rows or cols.max() >= n_cols:
                raise DimensionError(
                    f"index ({rows.max()}, {cols.max()}) outside {n_rows}x{n_cols}"
                )
        if not np.all(np.isfinite(vals)):
            raise ParseError("non-finite value")
        if rows.size:
            order = np.lexsort((cols, rows))
            rows, cols, vals = rows[order], cols[order], vals[order]
            key_change = np.empty(rows.size, dtype=bool)
            key_change[0] = True
            key_change[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(key_change)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        for arr in (rows, cols, vals):
            arr.flags.writeable = False
        return cls(int(n_rows), int(n_cols), rows, cols, vals)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("expected a 2-D array")
        r, c = np.nonzero(a)
        return cls.from_entries(a.shape[0], a.shape[1], r, c, a[r, c])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.vals.size)

    def transpose(self):
        return SparseTriplets.from_entries(
            self.n_cols, self.n_rows, self.cols, self.rows, self.vals
        )

    @property
    def T(self):
        return self.transpose()

    def to_csr(self):
        return sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=self.shape, dtype=np.float64
        )

    def to_dense(self, budget=None, label="A"):
        if budget is not None:
            budget.claim(label, self.shape)
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()))

    def __repr__(self):
        return f"SparseTriplets({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class Permutation:
    """``map[i]`` is the source index that lands at output position ``i``."""

    map: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.map, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise DimensionError("permutation map is not a bijection on 0..size-1")
        m.flags.writeable = False
        object.__setattr__(self, "map", m)

    @classmethod
    def identity(cls, size):
        return cls(np.arange(size))

    @property
    def size(self):
        return int(self.map.size)

    def inverse(self):
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.size)
        return Permutation(inv)

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.map, other.map)


@dataclass(frozen=True)
class BlockPartition:
    """Row/column cut; indices strictly below a cut belong to block 1."""

    row_cut: int
    col_cut: int

    def validate(self, shape):
        n_rows, n_cols = shape
        if not (0 < self.row_cut <= n_rows and 0 < self.col_cut <= n_cols):
            raise DimensionError(f"partition {self} invalid for {n_rows}x{n_cols}")

    def block_shape(self, shape, which):
        which = _block_id(which)
        r = self.row_cut if which[0] == "1" else shape[0] - self.row_cut
        c = self.col_cut if which[1] == "1" else shape[1] - self.col_cut
        return (r, c)


def _block_id(which):
    key = str(which)
    if key not in BLOCK_IDS:
        raise UsageError(f"block id must be one of 11, 12, 21, 22; got {which!r}")
    return key


@dataclass
class MemoryBudget:
    """Bookkeeping for dense allocations made on behalf of one run.

    Every named dense block is claimed before it is built; a claim larger than
    ``limit_bytes`` raises :class:`MemoryBudgetError` naming the block.
    """

    limit_bytes: int | None = None
    peak_bytes: int = 0
    claims: list = field(default_factory=list)

    def fits(self, shape):
        return self.limit_bytes is None or _nbytes(shape) <= self.limit_bytes

    def claim(self, label, shape):
        nbytes = _nbytes(shape)
        self.claims.append((label, tuple(int(s) for s in shape), nbytes))
        if self.limit_bytes is not None and nbytes > self.limit_bytes:
            raise MemoryBudgetError(label, nbytes, self.limit_bytes)
        self.peak_bytes = max(self.peak_bytes, nbytes)
        return nbytes


def _nbytes(shape):
    return 8 * math.prod(int(s) for s in shape)


# --------------------------------------------------------------------------- I/O


def parse_triplets(source, one_based=False):
    """Read ``row,col,value`` lines into a :class:`SparseTriplets`.

    ``source`` is either the text itself or an open text stream. ``#`` lines
    and blank lines are skipped; an optional ``%%dims <rows> <cols>`` header
    fixes the dimensions, otherwise they are inferred as max index + 1.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    dims = None
    seen_entry = False
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("%%"):
            parts = line.split()
            if parts[0] != "%%dims" or len(parts) != 3:
                raise ParseError(f"bad header {line!r}", lineno)
            if seen_entry or dims is not None:
                raise ParseError("%%dims header must precede all entries", lineno)
            try:
                dims = (int(parts[1]), int(parts[2]))
            except ValueError:
                raise ParseError(f"bad dimensions in {line!r}", lineno) from None
            if dims[0] < 0 or dims[1] < 0:
                raise ParseError("negative dimensions", lineno)
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ParseError(f"expected row,col,value; got {line!r}", lineno)
        try:
            r, c = int(fields[0]), int(fields[1])
            v = float(fields[2])
        except ValueError:
            raise ParseError(f"cannot parse {line!r}", lineno) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value in {line!r}", lineno)
        if one_based:
            r, c = r - 1, c - 1
        if r < 0 or c < 0:
            raise DimensionError(f"line {lineno}: negative index after shift")
        if dims is not None and (r >= dims[0] or c >= dims[1]):
            raise DimensionError(
                f"line {lineno}: index ({r}, {c}) outside declared {dims[0]}x{dims[1]}"
            )
        seen_entry = True
        rows.append(r)
        cols.append(c)
        vals.append(v)
    if dims is None:
        dims = (max(rows) + 1 if rows else 0, max(cols) + 1 if cols else 0)
    return SparseTriplets.from_entries(dims[0], dims[1], rows, cols, vals)


def read_triplets(path, one_based=False):
    with open(path, encoding="utf-8") as fh:
        return parse_triplets(fh, one_based=one_based)


def format_triplets(m, one_based=False):
    shift = 1 if one_based else 0
    lines = [f"%%dims {m.n_rows} {m.n_cols}"]
    for r, c, v in zip(m.rows.tolist(), m.cols.tolist(), m.vals.tolist()):
        lines.append(f"{r + shift},{c + shift},{v:.17g}")
    return "\n".join(lines) + "\n"


def write_triplets(m, path, one_based=False):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_triplets(m, one_based=one_based))


def write_dense_csv(a, path):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        for row in a:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_dense_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    return np.array(rows, dtype=np.float64)


# ------------------------------------------------------------------ norms, views


def frobenius_sq(m):
    return float(np.dot(m.vals, m.vals))


def row_norms(m):
    return np.sqrt(row_norms_sq(m))


def col_norms(m):
    return np.sqrt(col_norms_sq(m))


def row_norms_sq(m):
    return np.bincount(m.rows, weights=m.vals * m.vals, minlength=m.n_rows)


def col_norms_sq(m):
    return np.bincount(m.cols, weights=m.vals * m.vals, minlength=m.n_cols)


def permute(m, row_p, col_p):
    """Reorder so that output row ``i`` is source row ``row_p.map[i]``."""
    if row_p.size != m.n_rows or col_p.size != m.n_cols:
        raise DimensionError(
            f"permutation sizes ({row_p.size}, {col_p.size}) do not match {m.shape}"
        )
    inv_r = row_p.inverse().map
    inv_c = col_p.inverse().map
    return SparseTriplets.from_entries(
        m.n_rows, m.n_cols, inv_r[m.rows], inv_c[m.cols], m.vals
    )


def extract_block(m, p, which):
    which = _block_id(which)
    p.validate(m.shape)
    top = m.rows < p.row_cut if which[0] == "1" else m.rows >= p.row_cut
    left = m.cols < p.col_cut if which[1] == "1" else m.cols >= p.col_cut
    sel = top & left
    r0 = 0 if which[0] == "1" else p.row_cut
    c0 = 0 if which[1] == "1" else p.col_cut
    nr, nc = p.block_shape(m.shape, which)
    return SparseTriplets.from_entries(
        nr, nc, m.rows[sel] - r0, m.cols[sel] - c0, m.vals[sel]
    )


def split_blocks(m, p):
    return {w: extract_block(m, p, w) for w in BLOCK_IDS}


@dataclass
class GramBlocks:
    """Blocks of ``AᵗA`` for a column cut.

    ``g22`` is ``None`` when the dense block did not fit the budget; its
    diagonal and trace are always available.
    """

    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray | None
    g22_diag: np.ndarray

    @property
    def g22_trace(self):
        return float(self.g22_diag.sum())


def gram_blockwise(m, p, budget=None, allow_diag_g22=True):
    """Dense blocks of ``AᵗA`` built from the two sparse block columns of ``A``.

    ``G11 = A₁ᵗA₁``, ``G12 = A₁ᵗA₂``, ``G22 = A₂ᵗA₂`` where ``A₁``/``A₂`` are the
    column blocks left and right of ``p.col_cut``.
    """
    p.validate(m.shape)
    c = p.col_cut
    n = m.n_cols
    budget = budget if budget is not None else MemoryBudget()
    csc = m.to_csr().tocsc()
    a1 = csc[:, :c]
    a2 = csc[:, c:]
    budget.claim("G11", (c, c))
    g11 = (a1.T @ a1).toarray()
    budget.claim("G12", (c, n - c))
    g12 = (a1.T @ a2).toarray()
    g22_diag = col_norms_sq(m)[c:]
    if allow_diag_g22 and not budget.fits((n - c, n - c)):
        g22 = None
    else:
        budget.claim("G22", (n - c, n - c))
        g22 = (a2.T @ a2).toarray()
    g11 = 0.5 * (g11 + g11.T)
    if g22 is not None:
        g22 = 0.5 * (g22 + g22.T)
    return GramBlocks(g11, g12, g22, g22_diag)


def spmm(m, dense):
    """Sparse-times-dense product ``m @ dense`` without densifying ``m``."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.shape[0] != m.n_cols:
        raise DimensionError(f"cannot multiply {m.shape} by {dense.shape}")
    return np.asarray(m.to_csr() @ dense)


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError("expected a 2-D array")
    return a.T.copy()


def as_dense(a):
    """Validate and copy a dense operand (finite, 2-D, float64)."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("dense matrix contains NaN or Inf")
    return a
