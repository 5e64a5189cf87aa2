"""Self-hosted dense SVD.

Two routes are provided:

* ``svd_dense``: Householder bidiagonalization followed by unshifted QR
  sweeps that alternately make the bidiagonal lower and upper triangular
  with one-sided Householder reflections.
* ``economy_svd_gram``: eigen-decomposition of ``AᵗA`` by cyclic Jacobi and
  ``U = A V D^{-1}``, which only ever forms a ``n_cols x n_cols`` product.

Each serves as the oracle for the other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, ZeroColumnError
from .jacobi import jacobi_eigh
from .matrix import MemoryBudget, SparseTriplets, as_dense, spmm

TOL_RANK = 1e-12


@dataclass(frozen=True, eq=False)
class HouseholderReflector:
    """``H = I - 2 r rᵗ`` acting on indices ``offset, offset+1, ...``."""

    unit_vector: np.ndarray
    offset: int = 0

    def apply_left(self, a):
        """``H @ a`` in place on rows ``offset:`` of a vector or matrix."""
        r = self.unit_vector
        sub = a[self.offset : self.offset + r.size]
        sub -= 2.0 * np.multiply.outer(r, r @ sub) if sub.ndim == 2 else 2.0 * r * (r @ sub)
        return a

    def apply_right(self, a):
        """``a @ H`` in place on columns ``offset:``."""
        r = self.unit_vector
        sub = a[:, self.offset : self.offset + r.size]
        sub -= 2.0 * np.outer(sub @ r, r)
        return a

    def matrix(self, n):
        h = np.eye(n)
        r = self.unit_vector
        s = slice(self.offset, self.offset + r.size)
        h[s, s] -= 2.0 * np.outer(r, r)
        return h


def householder_annihilating(column, offset=0):
    """Reflector mapping ``column[offset:]`` to ``(-sign(x₀)‖x‖, 0, ..., 0)``.

    Uses ``v = x + sign(x₀)‖x‖e₁`` so no cancellation occurs in ``v₀``.
    """
    x = np.asarray(column, dtype=np.float64)[offset:]
    norm = float(np.linalg.norm(x))
    if x.size == 0 or norm == 0.0:
        raise ZeroColumnError("sub-vector is zero; nothing to annihilate")
    v = x.copy()
    sign = 1.0 if x[0] >= 0.0 else -1.0
    v[0] += sign * norm
    v /= np.linalg.norm(v)
    return HouseholderReflector(v, offset)


@dataclass(frozen=True, eq=False)
class BidiagonalResult:
    left_factor: np.ndarray  # n_rows x n_cols, orthonormal columns
    bidiag: np.ndarray  # n_cols x n_cols upper bidiagonal
    right_factor: np.ndarray  # n_cols x n_cols orthogonal
    n_reflections: int = 0

    @property
    def diag(self):
        return np.diag(self.bidiag).copy()

    @property
    def superdiag(self):
        return np.diag(self.bidiag, 1).copy()


def _tail_is_zero(x):
    return x.size < 2 or not np.any(x[1:])


def bidiagonalize(a):
    """Golub-Kahan style reduction ``left_factorᵗ · a · right_factor = bidiag``.

    Left reflections clear each column below the diagonal; right reflections,
    offset by one, clear each row right of the superdiagonal. Columns or rows
    that are already clear are skipped, so at most ``2n - 1`` reflections are
    applied for ``n = n_cols``.
    """
    a = as_dense(a)
    m, n = a.shape
    if m < n:
        raise DimensionError("bidiagonalize expects n_rows >= n_cols; transpose first")
    work = a.copy()
    left, right = [], []
    for k in range(n):
        col = work[k:, k]
        if not _tail_is_zero(col):
            h = householder_annihilating(work[:, k], offset=k)
            h.apply_left(work[:, k:])
            work[k + 1 :, k] = 0.0
            left.append(h)
        if k < n - 2:
            row = work[k, k + 1 :]
            if not _tail_is_zero(row):
                h = householder_annihilating(work[k, :], offset=k + 1)
                h.apply_right(work[k:, :])
                work[k, k + 2 :] = 0.0
                right.append(h)

    q_left = np.eye(m, n)
    for h in reversed(left):
        h.apply_left(q_left)
    q_right = np.eye(n)
    for h in reversed(right):
        h.apply_left(q_right)
    bidiag = np.diag(np.diag(work[:n])) + np.diag(np.diag(work[:n], 1), 1)
    return BidiagonalResult(q_left, bidiag, q_right, len(left) + len(right))


@dataclass(frozen=True, eq=False)
class EconomySVD:
    """``A = u_slice · diag(d) · v_sliceᵗ`` with orthonormal slices of width rank."""

    u_slice: np.ndarray
    d: np.ndarray
    v_slice: np.ndarray

    @property
    def rank(self):
        return int(self.d.size)

    def reconstruct(self):
        return (self.u_slice * self.d) @ self.v_slice.T

    def transposed(self):
        return EconomySVD(self.v_slice, self.d, self.u_slice)

    def truncated(self, k):
        return EconomySVD(self.u_slice[:, :k], self.d[:k], self.v_slice[:, :k])


def _reflect2(x0, x1):
    """2x2 Householder ``[[h00, h01], [h01, h11]]`` sending ``(x0, x1)`` to ``(ρ, 0)``."""
    norm = np.hypot(x0, x1)
    sign = 1.0 if x0 >= 0.0 else -1.0
    v0 = x0 + sign * norm
    vv = v0 * v0 + x1 * x1
    f = 2.0 / vv
    return 1.0 - f * v0 * v0, -f * v0 * x1, 1.0 - f * x1 * x1, -sign * norm


def _sweep(d, e, u, v):
    """One lower-then-upper pass on the bidiagonal ``(d, e)``.

    Right reflections over column pairs ``(k, k+1)`` make the matrix lower
    bidiagonal (fill ``f``); left reflections over row pairs restore the
    upper form. Pairs whose off-diagonal is exactly zero are left alone,
    which is how deflated blocks stay decoupled.
    """
    n = d.size
    f = np.zeros(max(n - 1, 0))
    active = np.flatnonzero(e)
    for k in active:
        h00, h01, h11, rho = _reflect2(d[k], e[k])
        d[k], e[k] = rho, 0.0
        f[k] = h01 * d[k + 1]
        d[k + 1] = h11 * d[k + 1]
        vk, vk1 = v[:, k].copy(), v[:, k + 1]
        v[:, k] = h00 * vk + h01 * vk1
        v[:, k + 1] = h01 * vk + h11 * vk1
    for k in active:
        h00, h01, h11, rho = _reflect2(d[k], f[k])
        d[k] = rho
        e[k] = h01 * d[k + 1]
        d[k + 1] = h11 * d[k + 1]
        uk, uk1 = u[:, k].copy(), u[:, k + 1]
        u[:, k] = h00 * uk + h01 * uk1
        u[:, k + 1] = h01 * uk + h11 * uk1


def qr_sweep(b):
    """Apply a single sweep to a dense upper-bidiagonal matrix (inspection helper)."""
    b = as_dense(b)
    n = b.shape[0]
    d, e = np.diag(b).copy(), np.diag(b, 1).copy()
    _sweep(d, e, np.eye(n), np.eye(n))
    return np.diag(d) + np.diag(e, 1)


def qr_diagonalize(b, tol=1e-12, max_sweeps=20000, tol_rank=TOL_RANK):
    """Diagonalize a :class:`BidiagonalResult` by unshifted sweeps.

    Stops once the superdiagonal Frobenius mass is at most ``tol·‖B‖_F``.
    Individual superdiagonal entries below ``tol·‖B‖_F/√n`` are set to zero
    so converged parts of the spectrum drop out of later sweeps.
    """
    d = b.diag
    e = b.superdiag
    n = d.size
    u = np.eye(n)
    v = np.eye(n)
    norm = float(np.hypot(np.linalg.norm(d), np.linalg.norm(e)))
    threshold = tol * norm
    cut = threshold / np.sqrt(max(n, 1))
    sweeps = 0
    while True:
        e[np.abs(e) <= cut] = 0.0
        if np.linalg.norm(e) <= threshold:
            break
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"qr_diagonalize: off-diagonal mass {np.linalg.norm(e):.3e} "
                f"after {max_sweeps} sweeps",
                residual=float(np.linalg.norm(e)),
            )
        _sweep(d, e, u, v)
        sweeps += 1

    sign = np.where(d < 0.0, -1.0, 1.0)
    d = np.abs(d)
    u = u * sign
    order = np.argsort(-d, kind="stable")
    d, u, v = d[order], u[:, order], v[:, order]
    u_full = b.left_factor @ u
    v_full = b.right_factor @ v
    keep = _rank_mask(d, tol_rank)
    result = EconomySVD(u_full[:, keep], d[keep], v_full[:, keep])
    object.__setattr__(result, "sweeps", sweeps)
    return result


def _rank_mask(values, tol_rank):
    if values.size == 0 or values[0] <= 0.0:
        return np.zeros(values.size, dtype=bool)
    return values > tol_rank * values[0]


def svd_dense(a, tol=1e-12, max_sweeps=20000, tol_rank=TOL_RANK):
    """Economy SVD by bidiagonalization and QR sweeps; wide inputs are transposed."""
    a = as_dense(a)
    m, n = a.shape
    if m < n:
        return svd_dense(a.T, tol, max_sweeps, tol_rank).transposed()
    if n == 0 or not np.any(a):
        return EconomySVD(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    return qr_diagonalize(bidiagonalize(a), tol, max_sweeps, tol_rank)


def economy_svd_gram(a, tol_rank=TOL_RANK, budget=None):
    """Economy SVD through the eigen-decomposition of ``AᵗA``.

    ``AᵗA = V Λ Vᵗ``; eigenvalues at or below ``tol_rank·λ_max`` are dropped,
    ``d = √λ`` and ``U = A V D^{-1}``. Accepts dense arrays or
    :class:`SparseTriplets`; sparse inputs are never densified.
    """
    sparse = isinstance(a, SparseTriplets)
    if not sparse:
        a = as_dense(a)
    m, n = a.shape
    if m < n:
        raise DimensionError("economy_svd_gram expects n_rows >= n_cols; transpose first")
    budget = budget if budget is not None else MemoryBudget()
    budget.claim("AtA", (n, n))
    if sparse:
        csr = a.to_csr()
        gram = (csr.T @ csr).toarray()
    else:
        gram = a.T @ a
    gram = 0.5 * (gram + gram.T)
    if n == 0 or not np.any(gram):
        return EconomySVD(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    q, lam = jacobi_eigh(gram)
    keep = _rank_mask(np.maximum(lam, 0.0), tol_rank) & (lam > 0.0)
    v = q[:, keep]
    d = np.sqrt(lam[keep])
    budget.claim("U", (m, v.shape[1]))
    av = spmm(a, v) if sparse else a @ v
    return EconomySVD(av / d, d, v)
