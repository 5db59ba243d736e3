import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from cosparse.exceptions import CosparseError, RankDeficientError
from cosparse.guarantees import (
    erc_analysis,
    gap_one_step_check,
    gap_relation_residual,
    heuristic_row_l2,
    nsc_sampled,
    reachable_sign_patterns,
)
from cosparse.model import Cosupport, generate_cosparse_signal
from cosparse.operators import dense_operator, gaussian_measurement, random_tight_frame_operator
from cosparse.solvers import GapConfig, gap_solve


def erc_by_definition(A, lam, M):
    Wt = scipy.linalg.null_space(M)
    comp = np.setdiff1d(np.arange(A.shape[0]), lam)
    T = A[comp] @ Wt @ np.linalg.pinv(A[lam] @ Wt)
    return np.linalg.norm(T, 1)


def sign_cells_by_brute_force(C):
    n, k = C.shape
    cells = []
    for s in itertools.product((1.0, -1.0), repeat=n):
        s = np.array(s)
        res = linprog(np.zeros(k), A_ub=-(s[:, None] * C), b_ub=-np.ones(n), bounds=[(None, None)] * k, method="highs")
        if res.status == 0:
            cells.append(s)
    return np.array(cells)


def as_set(rows):
    return {tuple(r) for r in np.asarray(rows).tolist()}


def random_instance(seed, p=None, d=None, m=None, l=None):
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(5, 13))
    p = p or d + int(rng.integers(0, 6))
    m = m or int(rng.integers(2, d))
    l = l if l is not None else int(rng.integers(d - m, d))
    omega = random_tight_frame_operator(p, d, seed=seed)
    M = gaussian_measurement(m, d, seed=seed + 1)
    sig = generate_cosparse_signal(omega, l, seed=seed + 2)
    return omega, M, sig


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_erc_matches_definition(seed):
    omega, M, sig = random_instance(seed)
    cert = erc_analysis(omega, sig.cosupport, M)
    ref = erc_by_definition(omega.dense(), sig.cosupport.indices, M.dense())
    assert cert.value == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert cert.holds == (cert.value < 1.0)
    assert cert.metadata["inf_inf_of_transpose"] == pytest.approx(cert.value)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_certificate_ordering(seed):
    omega, M, sig = random_instance(seed)
    erc = erc_analysis(omega, sig.cosupport, M)
    nsc = nsc_sampled(omega, sig.cosupport, M, n_samples=200, seed=seed)
    h = heuristic_row_l2(omega, sig.cosupport, M)
    # sign vectors have unit sup-norm, and row l2 norms are below row l1 norms
    assert nsc.value <= erc.value + 1e-9
    assert h.value <= erc.value + 1e-9
    assert h.threshold is None and h.holds is None


def test_erc_requires_full_rank():
    omega, M, _ = random_instance(1, p=12, d=10, m=4, l=8)
    with pytest.raises(RankDeficientError):
        erc_analysis(omega, Cosupport(range(3), 12), M)


@pytest.mark.parametrize("n,k", [(3, 1), (4, 2), (5, 2), (4, 3), (5, 3), (6, 3)])
def test_sign_patterns_match_brute_force(n, k):
    C = np.random.default_rng(n * 10 + k).standard_normal((n, k))
    got = reachable_sign_patterns(C)
    ref = sign_cells_by_brute_force(C)
    assert as_set(got) == as_set(ref)
    # generic central arrangement: 2 * sum_{i<k} C(n-1, i) cells
    from math import comb

    assert len(ref) == 2 * sum(comb(n - 1, i) for i in range(k))


def test_sign_patterns_too_many():
    C = np.random.default_rng(0).standard_normal((30, 6))
    assert reachable_sign_patterns(C, limit=100) is None


def test_nsc_exact_versus_sampled():
    omega, M, sig = random_instance(3, p=14, d=10, m=6, l=7)
    exact = nsc_sampled(omega, sig.cosupport, M, exact_limit=10**6)
    sampled = nsc_sampled(omega, sig.cosupport, M, n_samples=50, seed=0, exact_limit=0)
    assert exact.exact and not sampled.exact
    assert sampled.value <= exact.value + 1e-12


def test_nsc_trivial_subspace():
    omega = dense_operator(np.eye(4))
    M = gaussian_measurement(2, 4, seed=0)
    with pytest.raises(CosparseError):
        nsc_sampled(omega, Cosupport(range(4), 4), M)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_gap_relation_identity(seed):
    omega, M, sig = random_instance(seed)
    cert = gap_relation_residual(omega, sig.cosupport, M, M.apply(sig.x), sig.x)
    assert cert.holds and cert.value <= 1e-8
    assert cert.metadata["path_agreement"] < 1e-6


def test_gap_relation_rejects_bad_inputs(rng):
    omega, M, sig = random_instance(4)
    with pytest.raises(CosparseError):
        gap_relation_residual(omega, sig.cosupport, M, M.apply(sig.x) + 1.0, sig.x)
    with pytest.raises(CosparseError):
        gap_relation_residual(omega, sig.cosupport, M, M.apply(sig.x + 1.0), sig.x + 1.0)


@given(st.integers(0, 10_000), st.floats(0.2, 1.0))
@settings(max_examples=30)
def test_one_step_check_predicts_first_removal(seed, t):
    omega, M, sig = random_instance(seed)
    cert = gap_one_step_check(omega, sig.cosupport, M, sig.x, t)
    if not cert.holds:
        return
    res = gap_solve(M, M.apply(sig.x), omega, GapConfig(t=t, max_iterations=1))
    first = res.trace[0]
    assert not np.isin(first, sig.cosupport.indices).any()


def test_one_step_degenerate_and_validation():
    omega, M, sig = random_instance(5)
    with pytest.raises(ValueError):
        gap_one_step_check(omega, sig.cosupport, M, sig.x, t=0.0)
    # x0 = 0 makes both sides vanish
    cert = gap_one_step_check(omega, sig.cosupport, M, np.zeros(omega.d))
    assert cert.metadata["degenerate"] and cert.holds is False
    assert cert.to_dict()["value"] is None


def test_certificate_serialization():
    omega, M, sig = random_instance(6)
    d = erc_analysis(omega, sig.cosupport, M).to_dict()
    assert set(d) == {"kind", "value", "threshold", "holds", "exact", "metadata"}
    assert isinstance(d["value"], float) and isinstance(d["metadata"]["p"], int)
