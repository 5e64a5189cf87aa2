import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blocksvd.errors import ConvergenceError, OrthogonalityError
from blocksvd.jacobi import jacobi_eigh
from blocksvd.trace import (
    ReducedMatrix,
    TraceIterState,
    complement_basis,
    damped_annihilation_step,
    is_square,
    iterate,
    nondiagonality,
    offdiag_svd,
    reduced_matrix,
    trace_step,
    two_by_two_eigenvalues,
    two_by_two_reflection,
    two_by_two_x,
)

from conftest import random_sparse


def _state(a, cut):
    g = a.T @ a
    return TraceIterState.start(g[:cut, :cut].copy(), g[:cut, cut:].copy(), g[cut:, cut:].copy()), g


def _full(state):
    return np.block([[state.g11, state.g12], [state.g12.T, state.g22]])


# -- 2x2 closed form


@pytest.mark.parametrize(
    "a, b, c",
    [
        (3.0, 1.0, 1.0), (4.0, 1.0, 3.0), (1.0, -2.0, 5.0), (2.0, 0.0, 7.0), (1e8, 1e-3, 1.0), (1.0, 1.0, 1.0),
        # x close to 1: the cosine must not come from 1 - x²
        (1.0, 1e-5, 3.0), (1.0, -1e-7, 1e3),
    ],
)
def test_two_by_two_diagonalizes(a, b, c):
    m = np.array([[a, b], [b, c]])
    u = two_by_two_reflection(a, b, c)
    d = u @ m @ u
    hi, lo = two_by_two_eigenvalues(a, b, c)
    scale = max(abs(a), abs(b), abs(c))
    assert abs(d[0, 1]) <= 1e-12 * scale
    assert d[0, 0] == pytest.approx(hi, rel=1e-12)
    assert d[1, 1] == pytest.approx(lo, rel=1e-12, abs=1e-12 * scale)
    np.testing.assert_allclose(u @ u, np.eye(2), atol=1e-15)


def test_two_by_two_example_values():
    hi, lo = two_by_two_eigenvalues(3.0, 1.0, 1.0)
    assert hi == pytest.approx(2 + math.sqrt(2), rel=1e-15)
    assert lo == pytest.approx(2 - math.sqrt(2), rel=1e-15)
    hi, lo = two_by_two_eigenvalues(4.0, 1.0, 3.0)
    assert hi == pytest.approx((7 + math.sqrt(5)) / 2, rel=1e-15)
    # x² = (r - (a-c)) / 2r with r = √5, a-c = 1
    assert two_by_two_x(4.0, 1.0, 3.0) == pytest.approx(math.sqrt((math.sqrt(5) - 1) / (2 * math.sqrt(5))), rel=1e-14)


def test_two_by_two_degenerate():
    assert two_by_two_x(2.0, 0.0, 2.0) == 0.0
    assert two_by_two_x(1.0, 0.0, 3.0) == 1.0


@given(*[st.floats(-1e3, 1e3, allow_subnormal=False)] * 3)
def test_two_by_two_matches_jacobi(a, b, c):
    m = np.array([[a, b], [b, c]])
    _, w = jacobi_eigh(m)
    hi, lo = two_by_two_eigenvalues(a, b, c)
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    assert abs(hi - w[0]) <= 1e-12 * scale
    assert abs(lo - w[1]) <= 1e-12 * scale
    u = two_by_two_reflection(a, b, c)
    d = u @ m @ u
    assert abs(d[0, 1]) <= 1e-12 * scale
    assert abs(d[0, 0] - hi) <= 1e-12 * scale


# -- coupling basis


def test_offdiag_svd_example():
    b = offdiag_svd(np.array([[3.0, 0.0], [0.0, 0.0], [4.0, 0.0]]))
    np.testing.assert_allclose(b.d_n, [5.0])
    assert b.rank == 1
    assert nondiagonality(np.zeros((2, 3))) == 0.0


@given(st.integers(0, 10_000), st.integers(1, 10), st.integers(1, 10))
def test_offdiag_svd_properties(seed, p, q):
    rng = np.random.default_rng(seed)
    g12 = rng.standard_normal((p, q))
    b = offdiag_svd(g12)
    np.testing.assert_allclose(b.u1.T @ g12 @ b.u2, np.diag(b.d_n), atol=1e-12 * np.abs(g12).max())
    np.testing.assert_allclose(b.d_n, np.linalg.svd(g12, compute_uv=False), rtol=1e-11)
    assert nondiagonality(g12) == pytest.approx(np.linalg.svd(g12, compute_uv=False).sum(), rel=1e-12)


def test_complement_basis(rng):
    u, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    bar = complement_basis(u)
    full = np.hstack([u, bar])
    np.testing.assert_allclose(full.T @ full, np.eye(6), atol=1e-13)
    np.testing.assert_array_equal(complement_basis(np.zeros((3, 0))), np.eye(3))
    with pytest.raises(OrthogonalityError):
        complement_basis(np.ones((3, 2)))


# -- one step


def test_reduced_matrix_assembly():
    r = ReducedMatrix(np.array([[2.0]]), np.array([[1.0]]), np.array([0.5]))
    np.testing.assert_array_equal(r.assemble(), [[2.0, 0.5], [0.5, 1.0]])


def test_step_fixed_point_when_uncoupled():
    s = TraceIterState.start(np.diag([3.0, 2.0]), np.zeros((2, 1)), np.array([[1.0]]))
    out = trace_step(s)
    np.testing.assert_array_equal(out.g11, s.g11)
    assert out.iteration == 1


def test_step_scalar_case():
    # one step on a 2x2 Gram matrix moves the larger eigenvalue into block 1
    s = TraceIterState.start(np.array([[4.0]]), np.array([[1.0]]), np.array([[3.0]]))
    out = trace_step(s)
    assert out.trace11 == pytest.approx((7 + math.sqrt(5)) / 2, rel=1e-14)
    assert abs(out.g12[0, 0]) <= 1e-14
    np.testing.assert_allclose(out.v_total().T @ out.v_total(), np.eye(2), atol=1e-15)


def test_step_matches_explicit_transform(rng):
    """Dense ``T = [U₁ Ū₁ | U₂ Ū₂] · blkdiag(Q, I) · [...]ᵗ`` against the low-rank update."""
    a = rng.standard_normal((30, 9))
    s, g = _state(a, 4)
    basis = s.coupling
    m = basis.rank
    red = reduced_matrix(s, basis).assemble()
    q, _ = jacobi_eigh(red)
    frame = np.zeros((9, 9))
    frame[:4, :m] = basis.u1
    frame[4:, m : 2 * m] = basis.u2
    frame[:4, 2 * m : 2 * m + 4 - m] = basis.u1_bar
    frame[4:, 2 * m + 4 - m :] = basis.u2_bar
    inner = np.eye(9)
    inner[: 2 * m, : 2 * m] = q
    t = frame @ inner @ frame.T
    np.testing.assert_allclose(t.T @ t, np.eye(9), atol=1e-12)
    out = trace_step(s)
    ref = t.T @ g @ t
    scale = np.abs(g).max()
    np.testing.assert_allclose(_full(out), ref, atol=1e-11 * scale)
    np.testing.assert_allclose(out.v_total(), t, atol=1e-12)


def test_step_inplace_reuses_arrays(rng):
    s, _ = _state(rng.standard_normal((12, 5)), 2)
    g11 = s.g11
    out = trace_step(s, inplace=True)
    assert out.g11 is g11
    s2, _ = _state(rng.standard_normal((12, 5)), 2)
    keep = s2.g11.copy()
    trace_step(s2)
    np.testing.assert_array_equal(s2.g11, keep)


@given(st.integers(0, 10_000), st.integers(1, 9))
def test_twenty_steps_invariants(seed, cut):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((15, 10))
    s, g = _state(a, cut)
    total = s.total_trace
    prev = s.trace11
    for _ in range(20):
        s = trace_step(s)
        assert s.trace11 >= prev - 1e-10 * total
        assert s.trace11 + s.trace22 == pytest.approx(total, rel=1e-12)
        prev = s.trace11
    v = s.v_total()
    np.testing.assert_allclose(v.T @ v, np.eye(10), atol=1e-12)
    np.testing.assert_allclose(v.T @ g @ v, _full(s), atol=1e-10 * np.abs(g).max())
    # trace11 is bounded by the sum of the top eigenvalues
    top = np.sort(np.linalg.eigvalsh(g))[::-1][:cut].sum()
    assert s.trace11 <= top * (1 + 1e-12)


def test_step_with_underflowing_coupling():
    # a coupling block near 1e-160 squares into the subnormal range
    s = TraceIterState.start(np.diag([3.0, 2.0]), np.array([[1e-160], [3e-161]]), np.array([[1.0]]))
    out = trace_step(s)
    assert out.trace11 + out.trace22 == pytest.approx(6.0, rel=1e-15)
    np.testing.assert_allclose(out.v_total().T @ out.v_total(), np.eye(3), atol=1e-15)


# -- damped annihilation


def test_damped_large_n_barely_moves_traces(rng):
    # as n grows the reflector tends to diag(I, -I) on the coupled span, so
    # G₁₂ changes sign there while traces and coupling strength stay put
    s, _ = _state(rng.standard_normal((20, 6)), 3)
    out = damped_annihilation_step(s, 10**6)
    assert abs(out.trace11 - s.trace11) <= 1e-4 * s.total_trace
    assert out.trace11 + out.trace22 == pytest.approx(s.total_trace, rel=1e-12)
    np.testing.assert_allclose(out.coupling.d_n, s.coupling.d_n, rtol=1e-4)


def test_damped_n1_is_orthogonal_similarity(rng):
    # with n = 1 the reflector is built from G₁₁ and G₂₁ themselves
    s, g = _state(rng.standard_normal((20, 6)), 3)
    out = damped_annihilation_step(s, 1)
    v = out.v_total()
    np.testing.assert_allclose(v.T @ v, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(v.T @ g @ v, _full(out), atol=1e-10 * np.abs(g).max())
    with pytest.raises(ValueError):
        damped_annihilation_step(s, 0)


def test_is_square():
    assert [i for i in range(1, 30) if is_square(i)] == [1, 4, 9, 16, 25]
    assert not is_square(0)


# -- iteration


def test_iterate_uncoupled_returns_at_once():
    s = TraceIterState.start(np.eye(2), np.zeros((2, 2)), np.eye(2))
    out, recs = iterate(s)
    assert len(recs) == 1 and recs[0].seconds is None
    assert out.iteration == 0


def test_iterate_sparse_converges():
    rng = np.random.default_rng(7)
    a = random_sparse(rng, 400, 80, 0.05, integer=True)
    order = np.argsort(-np.sum(a**2, axis=0), kind="stable")
    a = a[:, order]
    s, g = _state(a, 25)
    out, recs = iterate(s, ratio_tol=1e-6)
    assert recs[-1].nondiag / recs[-1].trace11 <= 1e-6 * recs[0].nondiag / recs[0].trace11
    t11 = [r.trace11 for r in recs]
    assert all(b >= a_ - 1e-9 * s.total_trace for a_, b in zip(t11, t11[1:]))
    for r in recs:
        assert r.trace11 + r.trace22 == pytest.approx(s.total_trace, rel=1e-10)
    ev = np.sort(np.linalg.eigvalsh(g))[::-1]
    got = np.sort(np.linalg.eigvalsh(out.g11))[::-1]
    np.testing.assert_allclose(got[:20], ev[:20], rtol=1e-6)
    # the caller's state is left untouched unless ownership is handed over
    np.testing.assert_array_equal(s.g11, g[:25, :25])


def test_iterate_raises_with_log(rng):
    s, _ = _state(rng.standard_normal((40, 12)), 4)
    with pytest.raises(ConvergenceError) as err:
        iterate(s, ratio_tol=1e-12, max_iters=2)
    assert len(err.value.log) == 3
    assert err.value.state.iteration == 2


def test_iterate_records_damping(rng):
    s, _ = _state(rng.standard_normal((40, 12)), 4)
    try:
        _, recs = iterate(s, ratio_tol=1e-10, max_iters=10)
    except ConvergenceError as exc:
        recs = exc.log
    assert [r.iteration for r in recs if r.damped] == [i for i in (1, 4, 9) if i < len(recs)]
    with pytest.raises(ValueError):
        iterate(s, ratio_tol=1.5)
