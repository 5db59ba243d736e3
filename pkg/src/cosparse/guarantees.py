"""Numerical recovery certificates for a fixed cosupport.

All certificates are built from ``W^T``, an orthonormal basis of
``Null(M)``, and the matrix

    R0 = (W Omega_L^T)^+ W Omega_Lc^T

which maps the off-cosupport coefficients of the least-squares initializer
to its on-cosupport coefficients. Its induced infinity norm (the exact
recovery coefficient) below 1 guarantees recovery by both l1 minimization
and greedy pursuit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import CosparseError, RankDeficientError
from .model import Cosupport
from .numerics import (
    as_vector,
    kernel_basis,
    null_space_basis,
    numerical_rank,
    op_norm_1_1,
    op_norm_inf_inf,
    pseudo_inverse,
)
from .solvers import as_measurement, as_operator, constrained_analysis_ls

EXACT_PATTERN_LIMIT = 2**12


@dataclass
class Certificate:
    """A scalar diagnostic compared against a threshold.

    ``holds`` is ``value < threshold`` when a threshold exists and ``None``
    otherwise. ``exact`` is False for sampled estimates.
    """

    kind: str
    value: float
    threshold: float | None
    holds: bool | None
    exact: bool = True
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return None if not np.isfinite(v) else float(v)
            if isinstance(v, np.integer):
                return int(v)
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: clean(w) for k, w in v.items()}
            return v

        return {
            "kind": self.kind,
            "value": clean(self.value),
            "threshold": self.threshold,
            "holds": self.holds,
            "exact": self.exact,
            "metadata": clean(self.metadata),
        }


def _split(omega, cosupport):
    p = omega.p
    if isinstance(cosupport, Cosupport):
        if cosupport.p != p:
            raise ValueError(f"cosupport is over {cosupport.p} rows, operator has {p}")
        lam = cosupport
    else:
        lam = Cosupport(cosupport, p)
    Od = omega.dense()
    return Od[lam.indices], Od[lam.complement().indices], lam


@dataclass
class _Geometry:
    Wt: np.ndarray
    O_in: np.ndarray
    O_out: np.ndarray
    R0: np.ndarray
    cosupport: Cosupport


def _geometry(omega, cosupport, M, require_full_rank: bool = True) -> _Geometry:
    omega, M = as_operator(omega), as_measurement(M)
    O_in, O_out, lam = _split(omega, cosupport)
    Wt = null_space_basis(M.dense())
    B = O_in @ Wt
    k = Wt.shape[1]
    if require_full_rank and numerical_rank(B) < k:
        raise RankDeficientError(
            f"Omega_L W^T must have full rank d - m = {k} (cosupport too small or "
            "degenerate for these measurements)"
        )
    R0 = pseudo_inverse(B.T) @ (O_out @ Wt).T
    return _Geometry(Wt, O_in, O_out, R0, lam)


def _dims(omega, M, lam):
    return {"p": omega.p, "d": omega.d, "m": M.m, "cosparsity": len(lam)}


def erc_analysis(omega, cosupport, M) -> Certificate:
    """Exact recovery coefficient ``||Omega_Lc W^T (Omega_L W^T)^+||_{1->1}``.

    Recovery of every signal with this cosupport is guaranteed when the value
    is below 1. Requires ``Omega_L W^T`` to have full column rank ``d - m``.
    """
    omega, M = as_operator(omega), as_measurement(M)
    g = _geometry(omega, cosupport, M)
    R = g.R0.T
    value = op_norm_1_1(R)
    meta = _dims(omega, M, g.cosupport)
    meta["inf_inf_of_transpose"] = op_norm_inf_inf(g.R0)
    return Certificate("erc", value, 1.0, bool(value < 1.0), True, meta)


def _feasible(C: np.ndarray, signs: np.ndarray) -> bool:
    # is there z with signs_j * (C z)_j >= 1 for all j (an open cone cell)?
    k = C.shape[1]
    res = linprog(
        np.zeros(k),
        A_ub=-(signs[:, None] * C),
        b_ub=-np.ones(len(signs)),
        bounds=[(None, None)] * k,
        method="highs",
    )
    return res.status == 0


def _cell_count_bound(n: int, k: int) -> int:
    from math import comb

    if n == 0:
        return 1
    return 2 * sum(comb(n - 1, i) for i in range(min(k, n)))


def reachable_sign_patterns(C: np.ndarray, limit: int = EXACT_PATTERN_LIMIT) -> np.ndarray | None:
    """All sign vectors ``sign(C z)`` over generic ``z``, or ``None`` if too many.

    Builds the cells of the central hyperplane arrangement one hyperplane at a
    time, checking each extension for feasibility with a small LP.
    """
    n, k = C.shape
    if k == 0:
        return np.zeros((1, n))
    if k == 1:
        s = np.sign(C[:, 0])
        return np.array([s, -s])
    if k == 2:
        # cells are arcs of the circle between consecutive zero crossings
        cross = np.mod(np.arctan2(C[:, 1], C[:, 0])[:, None] + np.array([0.5, 1.5]) * np.pi, 2 * np.pi)
        cross = np.sort(cross.ravel())
        mids = (cross + np.diff(np.append(cross, cross[0] + 2 * np.pi)) / 2)
        Z = np.stack([np.cos(mids), np.sin(mids)])
        return np.unique(np.sign(C @ Z).T, axis=0)
    if _cell_count_bound(n, k) > limit:
        return None
    patterns = [np.zeros(0)]
    for j in range(n):
        nxt = []
        for s in patterns:
            for sign in (1.0, -1.0):
                cand = np.append(s, sign)
                if _feasible(C[: j + 1], cand):
                    nxt.append(cand)
        patterns = nxt
    return np.array(patterns)


def nsc_sampled(omega, cosupport, M, n_samples: int = 1000, seed=None, exact_limit: int = 256) -> Certificate:
    """Sign-aware recovery coefficient ``sup_x ||R0 sign(Omega_Lc x)||_inf``.

    The supremum runs over signals ``x`` in ``Null(Omega_L)``. When the
    number of reachable sign patterns is known to be at most ``exact_limit``
    they are enumerated and the value is exact; otherwise ``n_samples``
    random signals are drawn and the value is a lower estimate.
    """
    omega, M = as_operator(omega), as_measurement(M)
    g = _geometry(omega, cosupport, M, require_full_rank=False)
    meta = _dims(omega, M, g.cosupport)
    K = kernel_basis(g.O_in)
    if K.shape[1] == 0:
        raise CosparseError("Null(Omega_L) is trivial: no nonzero signal has this cosupport")
    C = g.O_out @ K
    # rows that vanish on the whole subspace always carry sign 0
    live = np.linalg.norm(C, axis=1) > 1e-12 * max(np.linalg.norm(C), 1e-300)
    R_live = g.R0[:, live]
    patterns = None
    if K.shape[1] <= 2 or _cell_count_bound(int(live.sum()), K.shape[1]) <= exact_limit:
        patterns = reachable_sign_patterns(C[live], limit=exact_limit)
    if patterns is not None:
        value = max((op_norm_inf_inf(R_live @ s[:, None]) for s in patterns), default=0.0)
        meta["patterns"] = len(patterns)
        return Certificate("nsc", value, 1.0, bool(value < 1.0), True, meta)
    rng = np.random.default_rng(seed)
    S = np.sign(C[live] @ rng.standard_normal((K.shape[1], n_samples)))
    value = float(np.abs(R_live @ S).max()) if S.size else 0.0
    meta["samples"] = n_samples
    return Certificate("nsc", value, 1.0, bool(value < 1.0), False, meta)


def _check_hypotheses(omega, lam, M, y, x0, tol=1e-8):
    x0 = as_vector(x0, "x0")
    Od = omega.dense()
    scale = np.linalg.norm(Od, 2) * np.linalg.norm(x0)
    if np.abs(Od[lam.indices] @ x0).max(initial=0.0) > tol * max(scale, 1e-300):
        raise CosparseError("x0 is not cosparse on the given cosupport")
    if y is not None:
        y = as_vector(y, "y")
        if np.linalg.norm(M.dense() @ x0 - y) > tol * max(np.linalg.norm(y), np.linalg.norm(M.dense(), 2) * np.linalg.norm(x0), 1e-300):
            raise CosparseError("y does not equal M x0")
    return x0


def gap_relation_residual(omega, cosupport, M, y, x0) -> Certificate:
    """Residual of ``Omega_L x^ = -R0 Omega_Lc x^`` at the greedy initializer.

    ``x^`` minimizes ``||Omega x||_2`` subject to ``Mx = y``. The identity holds
    whenever ``x0`` is cosparse on ``L`` and ``y = M x0``; the certificate
    value is its residual relative to ``||Omega x^||``, threshold 1e-8.
    """
    omega, M = as_operator(omega), as_measurement(M)
    g = _geometry(omega, cosupport, M, require_full_rank=False)
    _check_hypotheses(omega, g.cosupport, M, y, x0)
    y = as_vector(y, "y")
    x_ns = constrained_analysis_ls(M, omega, y, method="nullspace")
    x_kkt = constrained_analysis_ls(M, omega, y, method="kkt")
    lhs = g.O_in @ x_ns
    rhs = -(g.R0 @ (g.O_out @ x_ns))
    denom = np.linalg.norm(omega.dense() @ x_ns)
    diff = np.linalg.norm(lhs - rhs)
    value = float(diff / denom) if denom > 0 else float(diff)
    meta = _dims(omega, M, g.cosupport)
    nx = np.linalg.norm(x_ns)
    meta["path_agreement"] = float(np.linalg.norm(x_ns - x_kkt) / nx) if nx > 0 else float(np.linalg.norm(x_kkt))
    return Certificate("gap-relation", value, 1e-8, bool(value < 1e-8), True, meta)


def gap_one_step_check(omega, cosupport, M, x0, t: float = 1.0) -> Certificate:
    """One-step condition ``||Omega_L x^||_inf < t ||Omega_Lc x^||_inf``.

    ``x^`` is the greedy initializer for ``y = M x0``. If it holds, the first
    greedy step discards a row outside the cosupport. The value reported is
    the ratio of the two sides; when both vanish the check is degenerate
    (value NaN, ``holds`` False). The metadata also carries the equivalent
    weighted form ``||R0 v||_inf`` with ``v = Omega_Lc x^ / ||Omega_Lc x^||_inf``.
    """
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    omega, M = as_operator(omega), as_measurement(M)
    g = _geometry(omega, cosupport, M, require_full_rank=False)
    x0 = _check_hypotheses(omega, g.cosupport, M, None, x0)
    y = M.dense() @ x0
    x_hat = constrained_analysis_ls(M, omega, y)
    inside = float(np.abs(g.O_in @ x_hat).max(initial=0.0))
    off = g.O_out @ x_hat
    outside = float(np.abs(off).max(initial=0.0))
    meta = _dims(omega, M, g.cosupport)
    meta.update({"inside_inf": inside, "outside_inf": outside, "t": t})
    scale = np.linalg.norm(x_hat) * max(np.linalg.norm(omega.dense(), 2), 1.0)
    if outside <= 1e-12 * max(scale, 1e-300):
        meta["degenerate"] = True
        return Certificate("gap-one-step", float("nan"), t, False, True, meta)
    meta["degenerate"] = False
    meta["weighted_value"] = float(np.abs(g.R0 @ (off / outside)).max(initial=0.0))
    value = inside / outside
    return Certificate("gap-one-step", value, t, bool(inside < t * outside), True, meta)


def heuristic_row_l2(omega, cosupport, M) -> Certificate:
    """Largest row l2 norm of ``R0``: an average-case indicator, not a guarantee."""
    omega, M = as_operator(omega), as_measurement(M)
    g = _geometry(omega, cosupport, M)
    value = float(np.linalg.norm(g.R0, axis=1).max(initial=0.0)) if g.R0.size else 0.0
    return Certificate("heuristic-l2", value, None, None, True, _dims(omega, M, g.cosupport))
