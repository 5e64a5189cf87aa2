"""Cyclic Jacobi kernels.

Both solvers use a round-robin (tournament) ordering so that each round
rotates ``n // 2`` disjoint index pairs at once with vectorized numpy
operations. The two-sided version diagonalizes a symmetric matrix; the
one-sided (Hestenes) version orthogonalizes the columns of a rectangular one.
"""
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, SymmetryError


@lru_cache(maxsize=64)
def round_robin(n):
    """Pairings covering every ``(p, q)`` with ``p < q`` once in ``n-1`` rounds."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for k in range(size // 2):
            a, b = players[k], players[size - 1 - k]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _rotation(app, aqq, apq):
    """Cosine/sine zeroing ``apq`` in the 2x2 symmetric block (NR convention)."""
    nz = apq != 0.0
    safe = np.where(nz, apq, 1.0)
    theta = (aqq - app) / (2.0 * safe)
    t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
    t = np.where(theta == 0.0, 1.0, t)
    t = np.where(nz, t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    return c, t * c


@lru_cache(maxsize=64)
def _layouts(n):
    """Per round, an ordering of 0..n-1 placing each rotation pair side by side."""
    layouts = []
    for p, q in round_robin(n):
        lay = np.empty(n, dtype=np.intp)
        lay[0 : 2 * p.size : 2] = p
        lay[1 : 2 * p.size : 2] = q
        rest = np.setdiff1d(np.arange(n), np.concatenate([p, q]))
        lay[2 * p.size :] = rest
        layouts.append(lay)
    return tuple(layouts)


def jacobi_eigh(a, tol=1e-13, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix.

    Returns ``(q, eigvals)`` with ``q`` orthogonal, eigenvalues descending and
    ``q.T @ a @ q`` diagonal up to ``tol * ‖a‖_F`` in off-diagonal mass.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    if a.size and np.abs(a - a.T).max() > 1e-10 * scale:
        raise SymmetryError("matrix is not symmetric within 1e-10")
    a = 0.5 * (a + a.T)
    if n < 2 or not np.any(a):
        return _sorted(np.eye(n), np.diag(a).copy())
    # exact power-of-two scaling so the Frobenius norm cannot under/overflow
    shift = -int(np.frexp(np.abs(a).max())[1])
    a = np.ldexp(a, shift)
    norm = np.linalg.norm(a)

    # The matrix is carried in the current round's layout so that every
    # rotation pair occupies rows/columns (2k, 2k+1) and updates are strided
    # views rather than gathers.
    layouts = _layouts(n)
    m = n // 2
    ev, od = slice(0, 2 * m, 2), slice(1, 2 * m, 2)
    idx = np.arange(m)
    pos = np.arange(n)  # pos[i] = current position of original index i
    b, qt = a.copy(), np.eye(n)
    spare_b, spare_q = np.empty_like(b), np.empty_like(b)
    tmp = np.empty((m, n))
    converged = False
    for _ in range(max_sweeps):
        if _offdiag(b) <= tol * norm:
            converged = True
            break
        for lay in layouts:
            move = pos[lay]
            np.take(b, move, axis=0, out=spare_b)
            np.take(spare_b, move, axis=1, out=b)
            np.take(qt, move, axis=0, out=spare_q)
            qt, spare_q = spare_q, qt
            pos[lay] = np.arange(n)
            d = np.diagonal(b)
            c, s = _rotation(d[ev], d[od], b[2 * idx, 2 * idx + 1])
            if not s.any():
                continue
            _rotate(b[ev], b[od], c[:, None], s[:, None], tmp)
            _rotate(qt[ev], qt[od], c[:, None], s[:, None], tmp)
            _rotate(b[:, ev], b[:, od], c, s, tmp.T)
            b[2 * idx, 2 * idx + 1] = 0.0
            b[2 * idx + 1, 2 * idx] = 0.0
    if not converged:
        off = _offdiag(b)
        if off > tol * norm:
            raise ConvergenceError(
                f"jacobi_eigh: off-diagonal mass {off:.3e} after {max_sweeps} sweeps",
                residual=off,
            )
    return _sorted(qt.T.copy(), np.ldexp(np.diag(b), -shift))


def _rotate(x, y, c, s, tmp):
    """``x, y <- c·x - s·y, s·x + c·y`` in place, using ``tmp`` as scratch."""
    np.multiply(y, s, out=tmp)
    y *= c
    y += np.multiply(x, s)
    x *= c
    x -= tmp


def _offdiag(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _sorted(q, w):
    order = np.argsort(-w, kind="stable")
    return q[:, order], w[order]


def one_sided_jacobi(y, tol=1e-14, max_sweeps=60, floor=1e-15):
    """Orthogonalize the columns of ``y`` by plane rotations.

    Returns ``(y_rot, w)`` with ``y_rot = y @ w``, ``w`` orthogonal and the
    columns of ``y_rot`` mutually orthogonal to relative precision ``tol``:
    ``|y_iᵗy_j| <= tol * ‖y_i‖‖y_j‖``. The column norms are then the singular
    values of ``y`` with full relative accuracy. Columns whose norm falls
    below ``floor·‖y‖_F`` are treated as zero and no longer rotated.
    """
    y = np.array(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("expected a 2-D array")
    n = y.shape[1]
    w = np.eye(n)
    if n < 2:
        return y, w
    # power-of-two scaling is exact and keeps squared norms out of the
    # subnormal range for tiny (or huge) inputs
    big = np.abs(y).max()
    shift = 0
    if big > 0.0 and np.isfinite(big):
        shift = -int(np.frexp(big)[1])
        y = np.ldexp(y, shift)
    rounds = round_robin(n)
    tiny = (floor * np.linalg.norm(y)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p, r in rounds:
            yp, yr = y[:, p], y[:, r]
            alpha = np.einsum("ij,ij->j", yp, yp)
            beta = np.einsum("ij,ij->j", yr, yr)
            gamma = np.einsum("ij,ij->j", yp, yr)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha > tiny) & (beta > tiny)
            if not active.any():
                continue
            rotated = True
            gamma = np.where(active, gamma, 0.0)
            c, s = _rotation(alpha, beta, gamma)
            y[:, p] = yp * c - yr * s
            y[:, r] = yp * s + yr * c
            wp, wr = w[:, p], w[:, r]
            w[:, p] = wp * c - wr * s
            w[:, r] = wp * s + wr * c
        if not rotated:
            return np.ldexp(y, -shift), w
    raise ConvergenceError(f"one_sided_jacobi: not converged after {max_sweeps} sweeps")


def sym_function(a, fn, tol=1e-13):
    """``q diag(fn(λ)) qᵗ`` for a symmetric ``a``; ``fn`` acts on the eigenvalue array."""
    q, w = jacobi_eigh(a, tol=tol)
    return (q * fn(w)) @ q.T, w
