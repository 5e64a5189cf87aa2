"""Trace maximization of the leading Gram block.

The Gram matrix ``G = AᵗA`` is carried as three blocks ``G₁₁, G₁₂, G₂₂`` split
at the column cut, together with the two slices ``V₁, V₂`` of the accumulated
orthogonal factor. A step takes the SVD ``U₁ᵗ G₁₂ U₂ = D`` of the coupling
block, diagonalizes the reduced ``2m x 2m`` matrix

    M = [[U₁ᵗG₁₁U₁, D], [D, U₂ᵗG₂₂U₂]]

and rotates the coupled subspace so that the ``m`` largest eigenvalues land in
block 1. Only the coupled subspace moves, so the update is a rank-``2m``
correction ``T = I + W (Q - I) Wᵗ`` with ``W = diag(U₁, U₂)``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, OrthogonalityError, RankError
from .jacobi import jacobi_eigh, one_sided_jacobi
from .reflector import annihilating_reflector
from .reflector import complement_columns

log = logging.getLogger(__name__)

TOL_RANK = 1e-12


def _sign(x):
    return -1.0 if x < 0.0 else 1.0


def _two_by_two_squares(a, b, c):
    """``(x², 1 - x²)`` for the reflection diagonalizing ``[[a, b], [b, c]]``.

    ``x² = (r - (a - c)) / (2r)`` with ``r = √((a-c)² + 4b²)``. Whichever of
    ``r ∓ (a - c)`` would cancel is rewritten as ``4b² / (r ± (a - c))`` and
    evaluated as a product of ratios so tiny ``b`` does not underflow.
    """
    diff = a - c
    r = math.hypot(diff, 2.0 * b)
    if r == 0.0:
        return 0.0, 1.0
    if diff > 0.0:
        return 2.0 * (b / r) * (b / (r + diff)), 0.5 * (1.0 + diff / r)
    return 0.5 * (1.0 - diff / r), 2.0 * (b / r) * (b / (r - diff))


def two_by_two_x(a, b, c):
    """``x ∈ [0, 1]`` such that the reflection of :func:`two_by_two_reflection`
    diagonalizes ``[[a, b], [b, c]]``."""
    x2, _ = _two_by_two_squares(a, b, c)
    return math.sqrt(min(max(x2, 0.0), 1.0))


def two_by_two_reflection(a, b, c):
    """``U = [[σ√(1-x²), x], [x, -σ√(1-x²)]]`` with ``σ = sign(b)``.

    ``U M U`` is diagonal with the larger eigenvalue first.
    """
    x2, y2 = _two_by_two_squares(a, b, c)
    x = math.sqrt(min(max(x2, 0.0), 1.0))
    y = _sign(b) * math.sqrt(min(max(y2, 0.0), 1.0))
    return np.array([[y, x], [x, -y]])


def two_by_two_eigenvalues(a, b, c):
    """``(a+c)/2 ± √((a-c)²/4 + b²)``, larger first."""
    mean = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    return mean + rad, mean - rad


def complement_basis(u, tol=1e-11):
    """Orthonormal completion of the orthonormal columns of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    n, k = u.shape
    if k > n:
        raise OrthogonalityError(f"{k} columns cannot be orthonormal in {n}-space")
    if k and np.abs(u.T @ u - np.eye(k)).max() > tol:
        raise OrthogonalityError("input columns are not orthonormal")
    if k == 0:
        return np.eye(n)
    return complement_columns(u, n - k)


@dataclass(eq=False)
class SubspaceBasis:
    """``u1ᵗ · G₁₂ · u2 = diag(d_n)`` with ``m = len(d_n)`` coupled directions."""

    u1: np.ndarray
    u2: np.ndarray
    d_n: np.ndarray

    @property
    def rank(self):
        return int(self.d_n.size)

    @cached_property
    def u1_bar(self):
        return complement_basis(self.u1)

    @cached_property
    def u2_bar(self):
        return complement_basis(self.u2)


def offdiag_svd(g12, tol_rank=TOL_RANK):
    """Economy SVD of the coupling block by one-sided Jacobi on its thinner side."""
    g12 = np.asarray(g12, dtype=np.float64)
    p, q = g12.shape
    if g12.size == 0 or not np.any(g12):
        return SubspaceBasis(np.zeros((p, 0)), np.zeros((q, 0)), np.zeros(0))
    # the coupling block shrinks toward underflow as the iteration converges;
    # norms are taken after an exact power-of-two rescaling
    shift = -int(np.frexp(np.abs(g12).max())[1])
    g12 = np.ldexp(g12, shift)
    if q <= p:
        y, w = one_sided_jacobi(g12)
    else:
        y, w = one_sided_jacobi(g12.T)
    d = np.linalg.norm(y, axis=0)
    order = np.argsort(-d, kind="stable")
    d, y, w = d[order], y[:, order], w[:, order]
    keep = d > tol_rank * d[0]
    d, y, w = d[keep], y[:, keep] / d[keep], w[:, keep]
    d = np.ldexp(d, -shift)
    if q <= p:
        return SubspaceBasis(y, w, d)
    return SubspaceBasis(w, y, d)


def nondiagonality(g12):
    """Nuclear norm (sum of singular values) of the coupling block."""
    return float(offdiag_svd(g12).d_n.sum())


@dataclass(frozen=True, eq=False)
class ReducedMatrix:
    m11_tilde: np.ndarray
    m22_tilde: np.ndarray
    d_n: np.ndarray

    def assemble(self):
        m = self.d_n.size
        out = np.empty((2 * m, 2 * m))
        out[:m, :m] = self.m11_tilde
        out[m:, m:] = self.m22_tilde
        out[:m, m:] = np.diag(self.d_n)
        out[m:, :m] = np.diag(self.d_n)
        return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class TraceIterState:
    v1: np.ndarray  # n_cols x cut
    v2: np.ndarray  # n_cols x (n_cols - cut)
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    iteration: int = 0
    total_trace: float = 0.0
    basis: SubspaceBasis = field(default=None, repr=False)

    @classmethod
    def start(cls, g11, g12, g22, v1=None, v2=None):
        c, k = g12.shape
        if v1 is None:
            v1 = np.eye(c + k, c)
        if v2 is None:
            v2 = np.eye(c + k, k, -c)
        total = float(np.trace(g11) + np.trace(g22))
        return cls(v1, v2, g11, g12, g22, 0, total)

    @property
    def trace11(self):
        return float(np.trace(self.g11))

    @property
    def trace22(self):
        return float(np.trace(self.g22))

    @property
    def coupling(self):
        basis = self.basis
        if basis is None:
            basis = offdiag_svd(self.g12)
            object.__setattr__(self, "basis", basis)
        return basis

    @property
    def nondiag(self):
        return float(self.coupling.d_n.sum())

    @property
    def ratio(self):
        nd, t11 = self.nondiag, self.trace11
        if nd == 0.0:
            return 0.0
        return nd / t11 if t11 > 0.0 else math.inf

    def v_total(self):
        return np.hstack([self.v1, self.v2])


def reduced_matrix(state, basis):
    u1, u2 = basis.u1, basis.u2
    return ReducedMatrix(u1.T @ state.g11 @ u1, u2.T @ state.g22 @ u2, basis.d_n)


def _coupled_blocks(state, u1, u2):
    """``P = G W`` (as top/bottom row blocks) and ``M = Wᵗ G W`` for ``W = diag(u1, u2)``."""
    m1, m2 = u1.shape[1], u2.shape[1]
    p_top = np.hstack([state.g11 @ u1, state.g12 @ u2])
    p_bot = np.hstack([state.g12.T @ u1, state.g22 @ u2])
    mm = np.empty((m1 + m2, m1 + m2))
    mm[:m1, :m1] = u1.T @ p_top[:, :m1]
    mm[:m1, m1:] = u1.T @ p_top[:, m1:]
    mm[m1:, m1:] = u2.T @ p_bot[:, m1:]
    mm[m1:, :m1] = mm[:m1, m1:].T
    return p_top, p_bot, 0.5 * (mm + mm.T)


def _lowrank_similarity(state, u1, u2, k, coupled, inplace):
    """``Tᵗ G T`` and ``V T`` for ``T = I + W K Wᵗ``, ``W = diag(u1, u2)``.

    With ``P = G W`` and ``M = Wᵗ G W`` the new Gram matrix is
    ``G + L Wᵗ + W Lᵗ`` where ``L = P K + ½ W KᵗMK``, so every block update
    is a product of thin factors. ``T`` must be orthogonal.
    """
    p_top, p_bot, mm = coupled
    m1 = u1.shape[1]
    half = 0.5 * (k.T @ mm @ k)
    l_top = p_top @ k + u1 @ half[:m1]
    l_bot = p_bot @ k + u2 @ half[m1:]
    l11, l12 = l_top[:, :m1], l_top[:, m1:]
    l21, l22 = l_bot[:, :m1], l_bot[:, m1:]
    r = np.hstack([state.v1 @ u1, state.v2 @ u2]) @ k

    if inplace:
        g11, g12, g22, v1, v2 = state.g11, state.g12, state.g22, state.v1, state.v2
    else:
        g11, g12, g22 = state.g11.copy(), state.g12.copy(), state.g22.copy()
        v1, v2 = state.v1.copy(), state.v2.copy()
    upd = l11 @ u1.T
    g11 += upd
    g11 += upd.T
    g12 += l12 @ u2.T
    g12 += u1 @ l21.T
    upd = l22 @ u2.T
    g22 += upd
    g22 += upd.T
    del upd
    v1 += r[:, :m1] @ u1.T
    v2 += r[:, m1:] @ u2.T
    return replace(state, v1=v1, v2=v2, g11=g11, g12=g12, g22=g22, basis=None)


def trace_step(state, inplace=False):
    """One trace-maximizing rotation of the coupled subspace.

    With ``inplace`` the arrays of ``state`` are updated and reused.
    """
    basis = state.coupling
    m = basis.rank
    if m == 0:
        return replace(state, iteration=state.iteration + 1)
    coupled = _coupled_blocks(state, basis.u1, basis.u2)
    q, _ = jacobi_eigh(coupled[2])  # descending: top m eigenvalues go to block 1
    k = q - np.eye(2 * m)
    out = _lowrank_similarity(state, basis.u1, basis.u2, k, coupled, inplace)
    return replace(out, iteration=state.iteration + 1)


def reflector_kernel(h):
    """``K`` with ``H = I + diag(U, V) K diag(U, V)ᵗ`` for a block reflector."""
    a, b = h.alpha, h.beta
    return np.block([[np.diag(a - 1.0), np.diag(b)], [np.diag(b), -np.diag(1.0 + a)]])


def damped_annihilation_step(state, n, inplace=False):
    """Similarity by the reflector that would clear ``G₂₁`` if it were ``G₂₁ / n``."""
    if n < 1:
        raise ValueError("damping factor must be >= 1")
    if not np.any(state.g12):
        return state
    try:
        h = annihilating_reflector(state.g11, state.g12.T / n)
    except RankError as exc:
        log.warning("damped annihilation skipped at n=%d: %s", n, exc)
        return state
    if h.width == 0:
        return state
    coupled = _coupled_blocks(state, h.u_slice, h.v_slice)
    return _lowrank_similarity(state, h.u_slice, h.v_slice, reflector_kernel(h), coupled, inplace)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    trace11: float
    trace22: float
    nondiag: float
    seconds: float | None
    damped: bool = False
    trace11_before: float | None = None  # trace11 entering the trace step


def is_square(i):
    return i >= 1 and math.isqrt(i) ** 2 == i


def _record(state, seconds, damped=False, before=None):
    return IterationRecord(
        state.iteration, state.trace11, state.trace22, state.nondiag, seconds, damped, before
    )


def iterate(state0, ratio_tol=1e-4, max_iters=500, damping=True, clock=time.perf_counter, own=False):
    """Repeat trace steps until ``nondiag/trace11`` falls to ``ratio_tol`` times
    its starting value.

    At iterations whose number is a perfect square ``i`` a damped annihilation
    with ``n = i`` runs before the trace step. Returns ``(state, records)``;
    record 0 describes the starting state. With ``own`` the arrays of
    ``state0`` are updated in place instead of being copied once up front.
    """
    if not 0.0 < ratio_tol < 1.0:
        raise ValueError("ratio_tol must lie in (0, 1)")
    state = state0
    if not own:
        state = replace(
            state0, v1=state0.v1.copy(), v2=state0.v2.copy(), g11=state0.g11.copy(),
            g12=state0.g12.copy(), g22=state0.g22.copy(),
        )
    records = [_record(state, None)]
    ratio0 = state.ratio
    if ratio0 == 0.0:
        return state, records
    target = ratio_tol * ratio0
    for i in range(1, max_iters + 1):
        t0 = clock()
        damped = damping and is_square(i)
        if damped:
            state = damped_annihilation_step(state, i, inplace=True)
        before = state.trace11
        state = trace_step(state, inplace=True)
        rec = _record(state, clock() - t0, damped, before)
        records.append(rec)
        log.debug("iter %d trace11 %.10g nondiag %.6g", i, rec.trace11, rec.nondiag)
        if state.ratio <= target:
            return state, records
    raise ConvergenceError(
        f"trace iteration: ratio {state.ratio:.3e} above target {target:.3e} "
        f"after {max_iters} iterations",
        residual=state.ratio,
        log=records,
        state=state,
    )
