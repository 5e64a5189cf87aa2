"""Block Householder reflectors on a two-block split.

A reflector acting on ``N = n + (N - n)`` rows is described by orthonormal
slices ``U`` (n x m) and ``V`` ((N-n) x m) and diagonals ``α, β`` with
``α² + β² = 1``::

    H = [[I - U(1-α)Uᵗ,   U β Vᵗ        ],
         [V β Uᵗ,         I - V(1+α)Vᵗ  ]]

``H`` is symmetric and involutive. With ``α = C`` and ``β = S`` taken from the
generalized SVD of a block pair ``(A₁₁, A₂₁)``, ``H`` maps the stack
``[A₁₁; A₂₁]`` to ``[U Xᵗ; 0]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .baseline import householder_annihilating, svd_dense
from .errors import ConvergenceError, DimensionError, RankError, ZeroColumnError
from .jacobi import jacobi_eigh, one_sided_jacobi
from .matrix import as_dense

log = logging.getLogger(__name__)

TOL_RANK = 1e-12
# Columns whose sine is below this carry no annihilation work and are dropped
# from the reflector (their residual contribution is at most this size).
BETA_DROP = 1e-13
SINE_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class PolarPair:
    unitary: np.ndarray
    symmetric: np.ndarray


@dataclass(frozen=True, eq=False)
class GsvdPair:
    """``A₁₁ = U·diag(c)·Xᵗ`` and ``A₂₁ = V·diag(s)·Xᵗ``."""

    u: np.ndarray
    v: np.ndarray
    c: np.ndarray
    s: np.ndarray
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class BlockReflector:
    u_slice: np.ndarray
    v_slice: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def split(self):
        """``(n, N - n)``: the row counts of the two blocks it acts on."""
        return self.u_slice.shape[0], self.v_slice.shape[0]

    @property
    def width(self):
        return int(self.alpha.size)

    def matrix(self):
        """Dense ``N x N`` form. Only meant for checks on small instances."""
        u, v, a, b = self.u_slice, self.v_slice, self.alpha, self.beta
        n1, n2 = self.split
        h = np.eye(n1 + n2)
        h[:n1, :n1] -= (u * (1.0 - a)) @ u.T
        h[:n1, n1:] = (u * b) @ v.T
        h[n1:, :n1] = (v * b) @ u.T
        h[n1:, n1:] -= (v * (1.0 + a)) @ v.T
        return h


def identity_reflector(n1, n2):
    return BlockReflector(np.zeros((n1, 0)), np.zeros((n2, 0)), np.zeros(0), np.zeros(0))


def polar_factor(a, tol_rank=TOL_RANK):
    """``a = unitary · symmetric`` with ``symmetric = (aᵗa)^{1/2}``."""
    a = as_dense(a)
    q, lam = jacobi_eigh(a.T @ a)
    if lam.size and (lam[-1] <= tol_rank * lam[0] or lam[0] <= 0.0):
        raise RankError("polar_factor: matrix is rank deficient")
    root = np.sqrt(lam)
    symmetric = (q * root) @ q.T
    unitary = a @ ((q / root) @ q.T)
    return PolarPair(unitary, 0.5 * (symmetric + symmetric.T))


def householder_qr(a, q_cols=None):
    """QR by Householder reflections: ``a = q @ r``.

    ``q`` has ``m`` columns (thin) unless ``q_cols`` asks for more, in which
    case the extra columns are orthonormal and orthogonal to ``range(a)``.
    """
    a = as_dense(a)
    big, m = a.shape
    if big < m:
        raise DimensionError("householder_qr expects at least as many rows as columns")
    work = a.copy()
    refl = []
    for k in range(m):
        try:
            h = householder_annihilating(work[:, k], offset=k)
        except ZeroColumnError:
            continue
        h.apply_left(work[:, k:])
        work[k + 1 :, k] = 0.0
        refl.append(h)
    q = np.eye(big, m if q_cols is None else q_cols)
    for h in reversed(refl):
        h.apply_left(q)
    return q, np.triu(work[:m])


def complement_columns(u, count):
    """``count`` orthonormal columns orthogonal to the orthonormal ``u``, or None."""
    n, k = u.shape
    if k + count > n:
        return None
    q, _ = householder_qr(u, q_cols=k + count)
    return q[:, k:]


def gsvd_pair(a11, a21, tol_rank=TOL_RANK, complete_v=True):
    """Generalized SVD of a block pair sharing ``m`` columns.

    Route: thin Householder QR of the stack ``[a11; a21] = Q R``, then a
    one-sided Jacobi of the lower part ``Q₂`` gives ``Q₂ W = V S`` with full
    relative accuracy in small sines. ``Q₁ W`` then has orthogonal columns of
    norm ``C`` (orthonormalized by a second QR) and ``X = Rᵗ W``. Columns are ordered by decreasing ``C``.
    """
    a11, a21 = as_dense(a11), as_dense(a21)
    n1, m = a11.shape
    n2 = a21.shape[0]
    if a21.shape[1] != m:
        raise DimensionError(f"column counts differ: {m} vs {a21.shape[1]}")
    if n1 < m:
        raise DimensionError(f"top block needs at least {m} rows, has {n1}")
    if m == 0:
        return GsvdPair(np.zeros((n1, 0)), np.zeros((n2, 0)), np.zeros(0), np.zeros(0), np.zeros((0, 0)))
    q, r = householder_qr(np.vstack([a11, a21]))
    lam = np.linalg.norm(r, axis=1)
    diag = np.abs(np.diag(r))
    if diag.min() <= np.sqrt(tol_rank) * lam.max():
        # cheap screen; the exact test below decides
        _, ev = jacobi_eigh(r.T @ r)
        if ev[-1] <= tol_rank * ev[0]:
            raise RankError("gsvd_pair: stacked blocks are rank deficient")

    y, w = one_sided_jacobi(q[n1:])
    s = np.linalg.norm(y, axis=0)
    # sines at rounding level carry no direction; zero them so V can be
    # completed with a clean orthonormal basis instead of noise
    s[s <= SINE_FLOOR] = 0.0
    z = q[:n1] @ w
    c = np.linalg.norm(z, axis=0)
    scale = np.hypot(c, s)
    c, s = c / scale, s / scale
    x = (r.T @ w) * scale

    order = np.argsort(-c, kind="stable")
    c, s, x, y, z = c[order], s[order], x[:, order], y[:, order], z[:, order]
    # Q₁W has orthogonal columns of norm C in exact arithmetic. Dividing by C
    # loses orthogonality when C is tiny or zero (singular top block), so U is
    # taken from a Householder QR of the columns in decreasing-C order.
    qz, rz = householder_qr(z)
    u = qz * np.where(np.diag(rz) < 0.0, -1.0, 1.0)
    v = np.zeros((n2, m))
    nz = s > 0.0
    v[:, nz] = y[:, nz] / (s[nz] * scale[order][nz])
    missing = int((~nz).sum())
    if missing and complete_v:
        extra = complement_columns(v[:, nz], missing)
        if extra is not None:
            v[:, ~nz] = extra
    return GsvdPair(u, v, c, s, x)


def annihilating_reflector(a11, a21, tol_rank=TOL_RANK):
    """Reflector ``H`` with ``H [a11; a21] = [U Xᵗ; 0]``."""
    g = gsvd_pair(a11, a21, tol_rank, complete_v=False)
    keep = g.s > BETA_DROP
    return BlockReflector(g.u[:, keep], g.v[:, keep], g.c[keep], g.s[keep])


def _check_split(h, top, bottom):
    n1, n2 = h.split
    if top.shape[0] != n1 or bottom.shape[0] != n2:
        raise DimensionError(
            f"reflector acts on ({n1}, {n2}) rows, got ({top.shape[0]}, {bottom.shape[0]})"
        )
    if top.shape[1:] != bottom.shape[1:]:
        raise DimensionError("top and bottom blocks must have the same column count")


def apply_reflector_left(h, top, bottom):
    """``H · [top; bottom]`` returned as ``(top', bottom')`` without forming ``H``."""
    top, bottom = np.asarray(top, dtype=np.float64), np.asarray(bottom, dtype=np.float64)
    _check_split(h, top, bottom)
    if h.width == 0:
        return top.copy(), bottom.copy()
    u, v, a, b = h.u_slice, h.v_slice, h.alpha, h.beta
    ut = u.T @ top
    vb = v.T @ bottom
    if ut.ndim == 1:
        a_, b_ = a, b
    else:
        a_, b_ = a[:, None], b[:, None]
    new_top = top - u @ ((1.0 - a_) * ut) + u @ (b_ * vb)
    new_bottom = bottom + v @ (b_ * ut) - v @ ((1.0 + a_) * vb)
    return new_top, new_bottom


def apply_reflector_right(h, left, right):
    """``[left | right] · H`` returned as ``(left', right')``."""
    lt, rt = apply_reflector_left(h, np.asarray(left).T, np.asarray(right).T)
    return lt.T, rt.T


def apply_similarity(h, g11, g12, g22):
    """``H G H`` for a symmetric matrix given by its upper blocks."""
    t11, t21 = apply_reflector_left(h, g11, g12.T)
    t12, t22 = apply_reflector_left(h, g12, g22)
    n11, n12 = apply_reflector_right(h, t11, t12)
    _, n22 = apply_reflector_right(h, t21, t22)
    return 0.5 * (n11 + n11.T), n12, 0.5 * (n22 + n22.T)


class PolarRoute(NamedTuple):
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    exponent: int


def polar_route_alpha(s11, s21, tol_rank=TOL_RANK):
    """Symmetric ``α, β`` from the polar factors of a block pair.

    Candidates are ``α = (I + S₂₁ S₁₁^{e} S₂₁)^{-1/2}`` for ``e = ±2`` with
    ``β = (I - α²)^{1/2}``; the one with the smaller residual
    ``‖β S₁₁ - α S₂₁‖_F`` is returned together with that residual. Only
    commuting pairs can be annihilated exactly this way.
    """
    s11, s21 = as_dense(s11), as_dense(s21)
    q, lam = jacobi_eigh(s11)
    if lam.size == 0 or lam[-1] <= tol_rank * max(abs(lam[0]), 1e-300) or lam[0] <= 0.0:
        raise RankError("polar_route_alpha: s11 is singular")
    best = None
    for e in (-2, 2):
        p = (q * lam**e) @ q.T
        inner = np.eye(s11.shape[0]) + s21 @ p @ s21
        qi, li = jacobi_eigh(0.5 * (inner + inner.T))
        alpha = (qi * li**-0.5) @ qi.T
        qa, la = jacobi_eigh(alpha @ alpha)
        beta = (qa * np.sqrt(np.clip(1.0 - la, 0.0, None))) @ qa.T
        res = float(np.linalg.norm(beta @ s11 - alpha @ s21))
        if best is None or res < best.residual:
            best = PolarRoute(alpha, beta, res, e)
    return best


@dataclass(eq=False)
class FullBlockSVD:
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    blocks: tuple = ()
    history: list = field(default_factory=list)
    singular_values: np.ndarray = None

    @property
    def rounds(self):
        return len(self.left)


def _offmass(a12, a21):
    return float(np.hypot(np.linalg.norm(a12), np.linalg.norm(a21)))


def full_block_svd(a, cut, tol=1e-12, max_rounds=5000):
    """Block-diagonalize ``a`` by alternating block annihilations.

    Each round applies a left reflector that clears block 21 and then a right
    reflector that clears block 12. Rounds continue until the off-diagonal
    mass is at most ``tol·‖a‖_F``; the two diagonal blocks are then handed to
    the dense SVD. Reflectors are kept as a history, never multiplied out.
    """
    a = as_dense(a)
    k = int(cut)
    if not 0 < k < min(a.shape):
        raise DimensionError(f"cut {k} must lie strictly inside {a.shape}")
    a11, a12 = a[:k, :k].copy(), a[:k, k:].copy()
    a21, a22 = a[k:, :k].copy(), a[k:, k:].copy()
    total = float(np.linalg.norm(a))
    out = FullBlockSVD()
    out.history.append(_offmass(a12, a21))
    while out.history[-1] > tol * total:
        if out.rounds >= max_rounds:
            raise ConvergenceError(
                f"full_block_svd: off-diagonal mass {out.history[-1]:.3e} after {max_rounds} rounds",
                residual=out.history[-1],
            )
        hl = annihilating_reflector(a11, a21)
        a11, a12, a21, a22 = _split_rows(hl, a11, a12, a21, a22, k)
        hr = annihilating_reflector(a11.T, a12.T)
        a11, a12, a21, a22 = _split_cols(hr, a11, a12, a21, a22)
        out.left.append(hl)
        out.right.append(hr)
        out.history.append(_offmass(a12, a21))
    out.blocks = (a11, a22)
    d = np.concatenate([svd_dense(a11).d, svd_dense(a22).d])
    out.singular_values = np.sort(d)[::-1]
    return out


def _split_rows(h, a11, a12, a21, a22, k):
    top, bottom = apply_reflector_left(h, np.hstack([a11, a12]), np.hstack([a21, a22]))
    return top[:, :k], top[:, k:], bottom[:, :k], bottom[:, k:]


def _split_cols(h, a11, a12, a21, a22):
    left, right = apply_reflector_right(h, np.vstack([a11, a21]), np.vstack([a12, a22]))
    n1 = a11.shape[0]
    return left[:n1], right[:n1], left[n1:], right[n1:]
