import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from cosparse.exceptions import (
    ConvergenceWarning,
    DimensionError,
    NonFiniteError,
    RankDeficientError,
)
from cosparse.numerics import (
    LinearMap,
    adjoint_mismatch,
    as_matrix,
    cg_least_squares,
    compose,
    estimate_norm,
    kernel_basis,
    least_squares_min_norm,
    null_space_basis,
    numerical_rank,
    op_norm_1_1,
    op_norm_inf_inf,
    pseudo_inverse,
    svd,
    vstack,
)

shapes = st.tuples(st.integers(1, 9), st.integers(1, 9))
seeds = st.integers(0, 2**31 - 1)


def _low_rank(rng, m, n, r):
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


@given(shapes, seeds)
def test_penrose_identities(shape, seed):
    rng = np.random.default_rng(seed)
    m, n = shape
    r = rng.integers(1, min(m, n) + 1)
    A = _low_rank(rng, m, n, r)
    P = pseudo_inverse(A)
    scale = max(1.0, np.linalg.norm(A) * np.linalg.norm(P))
    assert np.linalg.norm(A @ P @ A - A) <= 1e-9 * scale * np.linalg.norm(A)
    assert np.linalg.norm(P @ A @ P - P) <= 1e-9 * scale * np.linalg.norm(P)
    assert np.allclose(A @ P, (A @ P).T, atol=1e-9 * scale)
    assert np.allclose(P @ A, (P @ A).T, atol=1e-9 * scale)


def test_pseudo_inverse_empty():
    assert pseudo_inverse(np.zeros((0, 4))).shape == (4, 0)


@given(shapes, seeds)
def test_min_norm_least_squares_matches_pinv(shape, seed):
    rng = np.random.default_rng(seed)
    m, n = shape
    A = _low_rank(rng, m, n, rng.integers(1, min(m, n) + 1))
    b = rng.standard_normal(m)
    x = least_squares_min_norm(A, b)
    ref = np.linalg.pinv(A) @ b
    assert np.allclose(x, ref, atol=1e-8 * (1 + np.linalg.norm(ref)))
    # minimum norm: no component in Null(A)
    K = kernel_basis(A)
    assert np.linalg.norm(K.T @ x) <= 1e-8 * (1 + np.linalg.norm(x))


def test_least_squares_rejects_mismatch():
    with pytest.raises(DimensionError):
        least_squares_min_norm(np.ones((3, 2)), np.ones(4))


def test_least_squares_empty_system():
    assert np.array_equal(least_squares_min_norm(np.zeros((0, 3)), np.zeros(0)), np.zeros(3))


@given(st.integers(2, 12), seeds)
def test_null_space_residual_and_orthonormality(d, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, d))
    M = rng.standard_normal((m, d))
    W = null_space_basis(M)
    assert W.shape == (d, d - m)
    assert np.linalg.norm(M @ W) <= 1e-12 * np.linalg.norm(M) * d
    assert np.allclose(W.T @ W, np.eye(d - m), atol=1e-12)
    # same subspace as scipy's independent routine
    ref = scipy.linalg.null_space(M)
    assert np.allclose(W @ W.T, ref @ ref.T, atol=1e-10)


def test_null_space_edge_cases():
    assert np.array_equal(null_space_basis(np.zeros((0, 3))), np.eye(3))
    with pytest.raises(DimensionError):
        null_space_basis(np.ones((3, 3)))
    with pytest.raises(RankDeficientError):
        null_space_basis(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))


def test_kernel_basis_rank_deficient():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    K = kernel_basis(A)
    assert K.shape == (3, 2)
    assert np.linalg.norm(A @ K) < 1e-12
    assert numerical_rank(A) == 1


def test_kernel_basis_survives_gesdd_failure():
    # rows of a square orthogonal frame on which the default LAPACK driver
    # fails to converge; the fallback must still give an exact kernel
    from cosparse.operators import random_tight_frame_operator

    s_omega, _, s_signal = np.random.SeedSequence([0, 0, 5, 0]).spawn(3)
    A = random_tight_frame_operator(200, 200, s_omega).dense()
    lam = np.sort(np.random.default_rng(s_signal).choice(200, size=186, replace=False))
    K = kernel_basis(A[lam])
    assert K.shape == (200, 14)
    assert np.abs(A[lam] @ K).max() < 1e-10
    assert np.abs(K.T @ K - np.eye(14)).max() < 1e-12


def test_svd_matches_numpy(rng):
    A = rng.standard_normal((7, 5))
    U, s, Vt = svd(A, full_matrices=False)
    assert np.allclose(U * s @ Vt, A)
    assert np.allclose(svd(A, compute_uv=False), np.linalg.svd(A, compute_uv=False))


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(DimensionError):
        as_matrix(np.zeros((2, 2, 2)))


@given(shapes, seeds)
def test_norm_duality(shape, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal(shape)
    assert op_norm_1_1(A) == pytest.approx(op_norm_inf_inf(A.T), rel=1e-15)
    assert op_norm_1_1(A) == pytest.approx(np.linalg.norm(A, 1), rel=1e-12)
    assert op_norm_inf_inf(A) == pytest.approx(np.linalg.norm(A, np.inf), rel=1e-12)


def test_induced_norm_attained_at_vertex():
    # the l1 operator norm is attained at a standard basis vector
    rng = np.random.default_rng(3)
    A = rng.standard_normal((5, 7))
    best = max(np.abs(A @ e).sum() for e in np.eye(7))
    assert op_norm_1_1(A) == pytest.approx(best)
    v = rng.standard_normal((200, 7))
    v /= np.abs(v).sum(axis=1, keepdims=True)
    assert np.all(np.abs(v @ A.T).sum(axis=1) <= op_norm_1_1(A) + 1e-12)


def test_linear_map_algebra(rng):
    A = rng.standard_normal((4, 6))
    B = rng.standard_normal((6, 3))
    LA, LB = LinearMap.from_matrix(A), LinearMap.from_matrix(B)
    assert LA.shape == (4, 6)
    assert np.allclose(compose(LA, LB).dense(), A @ B)
    assert np.allclose(LA.T.dense(), A.T)
    assert np.allclose(vstack(LA, LA.scaled(2.0)).dense(), np.vstack([A, 2 * A]))
    x = rng.standard_normal(6)
    assert np.allclose(LA @ x, A @ x)
    assert adjoint_mismatch(LA) < 1e-14
    assert estimate_norm(LA, n_iter=200) == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_adjoint_mismatch_detects_wrong_adjoint(rng):
    A = rng.standard_normal((4, 4))
    bad = LinearMap(4, 4, lambda x: A @ x, lambda y: A @ y)
    assert adjoint_mismatch(bad) > 1e-3


@given(st.integers(3, 15), seeds)
def test_cgls_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    m = n + int(rng.integers(0, 6))
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    res = cg_least_squares(LinearMap.from_matrix(A), b, tol=1e-12, max_iter=10 * n)
    ref = np.linalg.lstsq(A, b, rcond=None)[0]
    assert res.converged
    cond = np.linalg.cond(A)
    assert np.linalg.norm(res.x - ref) <= 1e-8 * cond * (1 + np.linalg.norm(ref))


def test_cgls_zero_rhs_and_warm_start(rng):
    A = LinearMap.from_matrix(rng.standard_normal((8, 5)))
    res = cg_least_squares(A, np.zeros(8))
    assert res.converged and res.iterations == 0
    b = rng.standard_normal(8)
    cold = cg_least_squares(A, b, tol=1e-12)
    warm = cg_least_squares(A, b, tol=1e-12, x0=cold.x)
    assert warm.iterations <= 1
    assert np.allclose(warm.x, cold.x)


def test_cgls_warns_on_iteration_cap(rng):
    A = LinearMap.from_matrix(rng.standard_normal((40, 30)))
    with pytest.warns(ConvergenceWarning):
        res = cg_least_squares(A, rng.standard_normal(40), tol=1e-14, max_iter=2)
    assert not res.converged
    assert res.iterations == 2


def test_cgls_no_warning_when_converged(rng):
    A = LinearMap.from_matrix(rng.standard_normal((10, 4)))
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        cg_least_squares(A, rng.standard_normal(10))
