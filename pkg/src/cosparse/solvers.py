"""Recovery of cosparse signals from linear measurements ``y = Mx``.

Two pursuits are provided. :func:`gap_solve` is a greedy method that starts
from the assumption that every analysis row is in the cosupport and keeps
discarding the rows whose analysis coefficients are largest, re-solving a
least-squares problem each time. :func:`analysis_l1_solve` minimizes
``||Omega x||_1`` subject to ``Mx = y``; :func:`debias` then snaps its output
onto the cosupport it detects.

Both work on dense operands, or matrix-free when the operators are too large
to materialize (finite differences with Fourier measurements).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConvergenceWarning, DimensionError
from .model import DEFAULT_ZERO_TOL, Cosupport, cosupport_of
from .numerics import (
    LinearMap,
    as_matrix,
    as_vector,
    cg_least_squares,
    least_squares_min_norm,
    null_space_basis,
    numerical_rank,
    vstack,
)
from .operators import AnalysisOperator, MeasurementSystem, dense_operator

DENSE_LIMIT = 2048


def as_operator(omega) -> AnalysisOperator:
    if isinstance(omega, AnalysisOperator):
        return omega
    return dense_operator(omega)


def as_measurement(M) -> MeasurementSystem:
    if isinstance(M, MeasurementSystem):
        return M
    A = as_matrix(M, "M")
    return MeasurementSystem("dense", A.shape[1], A)


def _check_problem(M: MeasurementSystem, omega: AnalysisOperator, y) -> np.ndarray:
    y = as_vector(y, "y")
    if y.shape[0] != M.m:
        raise DimensionError(f"y has length {y.shape[0]}, M has {M.m} rows")
    if omega.d != M.d:
        raise DimensionError(f"Omega acts on dimension {omega.d}, M on {M.d}")
    if M.m > M.d:
        raise DimensionError(f"need m <= d, got m={M.m}, d={M.d}")
    return y


def _can_densify(M: MeasurementSystem, omega: AnalysisOperator) -> bool:
    return M.matrix is not None and (omega.kind == "dense" or M.d <= DENSE_LIMIT)


def default_lambda(M: MeasurementSystem, omega: AnalysisOperator) -> float:
    """``1e-6 * ||M||^2 / ||Omega||^2``, so the penalty weight is dimensionless."""
    nm, no = M.spectral_norm(), omega.spectral_norm()
    if nm == 0 or no == 0:
        return 1e-6
    return 1e-6 * nm**2 / no**2


@dataclass(frozen=True)
class GapConfig:
    """Parameters of :func:`gap_solve`.

    t: a row is discarded when its coefficient magnitude is at least ``t``
        times the largest one among the remaining rows.
    lam: weight of the analysis penalty in the regularized initializer;
        ``None`` picks :func:`default_lambda`.
    target_cosparsity: stop once this many rows remain; otherwise stop at
        ``d - m`` rows, the fewest for which the estimate is still unique.
    max_iterations: hard cap on iterations (``None`` for no cap).
    stop_on_static: also stop when the estimate stops moving, i.e.
        ``||x_k - x_{k-1}|| <= static_tol * ||x_k||``.
    coef_tol: stop when every remaining coefficient is below
        ``coef_tol * max|Omega x|``; ``None`` picks 1e-9 dense, 1e-7 matrix-free.
    matrix_free: force (True) or forbid (False) the matrix-free path;
        ``None`` decides from the operator kinds and size.
    initializer: ``"exact"`` solves ``min ||Omega_L x||_2 s.t. Mx = y``;
        ``"regularized"`` solves ``min ||y - Mx||^2 + lam ||Omega_L x||^2``.
        ``None`` means exact in dense mode and in matrix-free mode.
    max_removals: at most this many rows are discarded per iteration;
        ``None`` means unlimited in dense mode and ``ceil(0.02 * |L|)``
        matrix-free.
    """

    t: float = 1.0
    lam: float | None = None
    target_cosparsity: int | None = None
    max_iterations: int | None = None
    stop_on_static: bool = False
    static_tol: float = 1e-8
    coef_tol: float | None = None
    matrix_free: bool | None = None
    initializer: str | None = None
    max_removals: int | None = None
    removal_fraction: float = 0.02
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None

    def __post_init__(self):
        if not 0 < self.t <= 1:
            raise ValueError(f"selection factor t must lie in (0, 1], got {self.t}")
        if self.lam is not None and self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.initializer not in (None, "exact", "regularized"):
            raise ValueError(f"unknown initializer {self.initializer!r}")
        if self.max_removals is not None and self.max_removals < 1:
            raise ValueError("max_removals must be at least 1")


@dataclass
class RecoveryResult:
    """Estimate plus bookkeeping.

    ``status`` is ``"converged"`` (the algorithm's own stopping rule fired),
    ``"static-stop"``, ``"max-iter"``, or for :func:`debias` one of
    ``"converged"`` / ``"indeterminate"``. ``trace[k]`` holds the rows
    discarded at iteration ``k + 1``.
    """

    x_hat: np.ndarray
    cosupport: Cosupport
    iterations: int
    status: str
    trace: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def relative_error(self, x0) -> float:
        x0 = as_vector(x0, "x0")
        n0 = np.linalg.norm(x0)
        err = np.linalg.norm(self.x_hat - x0)
        return float(err / n0) if n0 > 0 else float(err)


def regularized_analysis_ls(M, omega_active, y, lam: float, matrix_free: bool = False, cg_tol=1e-10, cg_max_iter=None, x0=None):
    """Minimizer of ``||y - Mx||^2 + lam ||Omega_active x||^2``.

    Solved as the stacked least-squares problem ``[M; sqrt(lam) Omega] x ~ [y; 0]``,
    densely or by CGLS. In matrix-free mode returns ``(x, LSQResult)``.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    M, omega = as_measurement(M), as_operator(omega_active)
    y = as_vector(y, "y")
    b = np.concatenate([y, np.zeros(omega.p)])
    s = math.sqrt(lam)
    if not matrix_free:
        A = np.vstack([M.dense(), s * omega.dense()]) if omega.p else M.dense()
        return least_squares_min_norm(A, b[: A.shape[0]])
    A = vstack(M.as_linear_map(), omega.as_linear_map().scaled(s))
    res = cg_least_squares(A, b, tol=cg_tol, max_iter=cg_max_iter, x0=x0)
    return res.x, res


def constrained_analysis_ls(M, omega_active, y, method: str = "nullspace") -> np.ndarray:
    """Minimizer of ``||Omega_active x||_2`` subject to ``Mx = y`` (dense).

    ``method="nullspace"`` writes ``x = x_p + W^T a`` with ``x_p`` the
    minimum-norm solution of ``Mx = y`` and ``W^T`` an orthonormal basis of
    ``Null(M)``. ``method="kkt"`` solves the optimality system
    ``[[O^T O, M^T], [M, 0]] [x; v] = [0; y]`` instead. Among several
    minimizers the one of least norm is returned.
    """
    M, omega = as_measurement(M), as_operator(omega_active)
    y = as_vector(y, "y")
    Md, Od = M.dense(), omega.dense()
    m, d = Md.shape
    if method == "nullspace":
        xp = least_squares_min_norm(Md, y)
        if m == d:
            return xp
        Wt = null_space_basis(Md)
        if Od.shape[0] == 0:
            return xp
        a = least_squares_min_norm(Od @ Wt, -(Od @ xp))
        return xp + Wt @ a
    if method == "kkt":
        K = np.block([[Od.T @ Od, Md.T], [Md, np.zeros((m, m))]])
        sol = least_squares_min_norm(K, np.concatenate([np.zeros(d), y]))
        return sol[:d]
    raise ValueError(f"unknown method {method!r}")


def _removal_set(alpha_active, active_idx, t, limit):
    mags = np.abs(alpha_active)
    chosen = np.flatnonzero(mags >= t * mags.max())
    if chosen.size > limit:
        order = np.argsort(-mags[chosen], kind="stable")
        chosen = chosen[order[:limit]]
    return np.sort(active_idx[chosen])


def gap_solve(M, y, omega, cfg: GapConfig | None = None) -> RecoveryResult:
    """Greedy analysis pursuit.

    Starting from the full row set ``L = {0..p-1}`` and
    ``x = argmin ||Omega_L x||_2 s.t. Mx = y``, repeat: compute
    ``alpha = Omega x``, discard from ``L`` the rows with
    ``|alpha_i| >= t max_{j in L} |alpha_j|`` and re-solve. Stops when the
    remaining coefficients vanish (the estimate is cosparse on ``L``), when
    ``L`` is down to ``d - m`` rows (or ``target_cosparsity`` rows), or on the
    optional static / iteration-count rules.
    """
    cfg = cfg or GapConfig()
    M, omega = as_measurement(M), as_operator(omega)
    y = _check_problem(M, omega, y)
    p, d, m = omega.p, M.d, M.m
    matrix_free = cfg.matrix_free if cfg.matrix_free is not None else not _can_densify(M, omega)
    initializer = cfg.initializer or "exact"
    lam = cfg.lam if cfg.lam is not None else default_lambda(M, omega)
    coef_tol = cfg.coef_tol if cfg.coef_tol is not None else (1e-7 if matrix_free else 1e-9)
    floor = max(d - m, 0) if cfg.target_cosparsity is None else int(cfg.target_cosparsity)
    flags = {"matrix_free": matrix_free, "initializer": initializer, "lam": lam, "floor": floor}
    if initializer == "exact" or m == d:
        flags.pop("lam")

    if m == d:
        x = least_squares_min_norm(M.dense(), y) if M.matrix is not None else M.min_norm_solution(y)
        flags["stop_reason"] = "determined"
        return RecoveryResult(x, cosupport_of(omega, x, DEFAULT_ZERO_TOL), 0, "converged", [], flags)

    if matrix_free:
        solver = _MatrixFreeSolver(M, omega, y, initializer, lam, cfg.cg_tol, cfg.cg_max_iter)
    else:
        solver = _DenseSolver(M, omega, y, initializer, lam)

    active = np.ones(p, dtype=bool)
    x = solver.solve(active)
    trace, k, status = [], 0, None
    while True:
        alpha = omega.apply(x)
        active_idx = np.flatnonzero(active)
        alpha_active = alpha[active_idx]
        scale = np.abs(alpha).max() if alpha.size else 0.0
        if active_idx.size <= floor:
            status, flags["stop_reason"] = "converged", "row-bound"
            break
        if np.abs(alpha_active).max() <= coef_tol * scale:
            status, flags["stop_reason"] = "converged", "cosparse"
            break
        if cfg.max_iterations is not None and k >= cfg.max_iterations:
            status, flags["stop_reason"] = "max-iter", "max-iterations"
            break
        limit = active_idx.size - floor
        if cfg.max_removals is not None:
            limit = min(limit, cfg.max_removals)
        elif matrix_free:
            limit = min(limit, max(1, math.ceil(cfg.removal_fraction * active_idx.size)))
        gamma = _removal_set(alpha_active, active_idx, cfg.t, limit)
        active[gamma] = False
        trace.append(gamma)
        k += 1
        x_new = solver.solve(active, gamma)
        if cfg.stop_on_static and np.linalg.norm(x_new - x) <= cfg.static_tol * np.linalg.norm(x_new):
            x = x_new
            status, flags["stop_reason"] = "static-stop", "static"
            break
        x = x_new

    x = solver.polish(active, x)
    flags.update(solver.flags())
    return RecoveryResult(x, Cosupport(np.flatnonzero(active), p), k, status, trace, flags)


class _DenseSolver:
    """Re-solves the GAP subproblem on dense operands.

    The exact subproblem is solved in null-space coordinates ``x = x_p + W^T a``
    through the normal equations of ``A = Omega W^T``, whose Gram matrix is
    downdated as rows are discarded and refreshed periodically.
    """

    refresh_every = 25

    def __init__(self, M, omega, y, initializer, lam):
        self.Md, self.Od, self.y = M.dense(), omega.dense(), y
        self.initializer, self.lam = initializer, lam
        self.fallbacks = 0
        if initializer == "exact":
            self.xp = least_squares_min_norm(self.Md, y)
            self.Wt = null_space_basis(self.Md)
            self.A = self.Od @ self.Wt
            self.b = self.Od @ self.xp
            self.G = self.A.T @ self.A
            self.h = self.A.T @ self.b
            self.updates = 0

    def solve(self, active, removed=None):
        if self.initializer == "regularized":
            return regularized_analysis_ls(self.Md, self.Od[active], self.y, self.lam)
        if removed is not None and removed.size:
            self.updates += 1
            if self.updates % self.refresh_every == 0:
                Aa = self.A[active]
                self.G, self.h = Aa.T @ Aa, Aa.T @ self.b[active]
            else:
                Ar = self.A[removed]
                self.G -= Ar.T @ Ar
                self.h -= Ar.T @ self.b[removed]
        try:
            c = scipy.linalg.cho_factor(self.G, check_finite=False)
            a = -scipy.linalg.cho_solve(c, self.h, check_finite=False)
            if not np.all(np.isfinite(a)):
                raise np.linalg.LinAlgError
        except (np.linalg.LinAlgError, ValueError):
            self.fallbacks += 1
            a = least_squares_min_norm(self.A[active], -self.b[active])
        return self.xp + self.Wt @ a

    def polish(self, active, x):
        if self.initializer == "regularized":
            return x
        a = least_squares_min_norm(self.A[active], -self.b[active])
        return self.xp + self.Wt @ a

    def flags(self):
        return {"cholesky_fallbacks": self.fallbacks}


class _MatrixFreeSolver:
    """Re-solves the GAP subproblem with CGLS, warm-started from the last estimate.

    The exact subproblem ``min ||Omega_L x|| s.t. Mx = y`` becomes the least-
    squares problem ``min_z ||Omega_L (x_p + P z)||`` with ``P`` the projector
    onto ``Null(M)``.
    """

    def __init__(self, M, omega, y, initializer, lam, cg_tol, cg_max_iter):
        self.M, self.omega, self.y = M, omega, y
        self.initializer, self.lam = initializer, lam
        self.cg_tol, self.cg_max_iter = cg_tol, cg_max_iter
        self.xp = M.min_norm_solution(y)
        self.x_prev = None
        self.cg_iterations = 0
        self.cg_failures = 0

    def _record(self, res):
        self.cg_iterations += res.iterations
        self.cg_failures += int(not res.converged)

    def solve(self, active, removed=None):
        rows = self.omega.restrict(np.flatnonzero(active))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            if self.initializer == "regularized":
                x, res = regularized_analysis_ls(
                    self.M, rows, self.y, self.lam, matrix_free=True,
                    cg_tol=self.cg_tol, cg_max_iter=self.cg_max_iter, x0=self.x_prev,
                )
            else:
                P = self.M.project_null
                A = LinearMap(
                    self.M.d, rows.p,
                    lambda z: rows.apply(P(z)),
                    lambda w: P(rows.adjoint(w)),
                )
                z0 = None if self.x_prev is None else self.x_prev - self.xp
                res = cg_least_squares(A, -rows.apply(self.xp), tol=self.cg_tol, max_iter=self.cg_max_iter, x0=z0)
                x = self.xp + P(res.x)
        self._record(res)
        self.x_prev = x
        return x

    def polish(self, active, x):
        return x

    def flags(self):
        return {"cg_iterations": self.cg_iterations, "cg_failures": self.cg_failures}


@dataclass
class L1Info:
    iterations: int
    converged: bool
    objective: float
    constraint_residual: float
    method: str


def _soft(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def analysis_l1_solve(
    M,
    y,
    omega,
    tol: float = 1e-9,
    max_iter: int = 20000,
    matrix_free: bool | None = None,
    full_output: bool = False,
):
    """Approximate minimizer of ``||Omega x||_1`` subject to ``Mx = y``.

    Dense mode runs ADMM in null-space coordinates ``x = x_p + W^T a``, so the
    constraint holds exactly at every iterate. It stops when both the change
    of the split variable and the split residual fall below ``tol`` relative
    to its norm. Matrix-free mode runs a primal-dual (Chambolle-Pock)
    iteration with exact projection onto ``{x : Mx = y}``.

    With ``full_output=True`` returns ``(x, L1Info)``. Hitting ``max_iter``
    issues a :class:`ConvergenceWarning`.
    """
    M, omega = as_measurement(M), as_operator(omega)
    y = _check_problem(M, omega, y)
    if matrix_free is None:
        matrix_free = not _can_densify(M, omega)
    if M.m == M.d:
        x = least_squares_min_norm(M.dense(), y) if M.matrix is not None else M.min_norm_solution(y)
        info = L1Info(0, True, float(np.abs(omega.apply(x)).sum()), 0.0, "determined")
    elif matrix_free:
        x, info = _l1_pdhg(M, omega, y, tol, max_iter)
    else:
        x, info = _l1_admm(M.dense(), omega.dense(), y, tol, max_iter)
    if not info.converged:
        warnings.warn(
            f"analysis l1 solver stopped after {info.iterations} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return (x, info) if full_output else x


def _l1_admm(Md, Od, y, tol, max_iter):
    xp = least_squares_min_norm(Md, y)
    Wt = null_space_basis(Md)
    A = Od @ Wt
    b = Od @ xp
    Apinv = np.linalg.pinv(A, rcond=1e-12)
    # start from the l2 solution; scale the penalty to the coefficient size
    z = A @ (-(Apinv @ b)) + b
    scale = np.mean(np.abs(z))
    if scale == 0.0:
        x = xp + Wt @ (-(Apinv @ b))
        return x, L1Info(0, True, 0.0, 0.0, "admm")
    rho = 1.0 / scale
    u = np.zeros_like(z)
    a = np.zeros(A.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = Apinv @ (z - u - b)
        Aa = A @ a + b
        z_new = _soft(Aa + u, 1.0 / rho)
        u += Aa - z_new
        nz = np.linalg.norm(z_new)
        change = np.linalg.norm(z_new - z)
        z = z_new
        if change <= tol * nz and np.linalg.norm(Aa - z) <= tol * nz:
            converged = True
            break
    x = xp + Wt @ a
    obj = float(np.abs(Od @ x).sum())
    return x, L1Info(it, converged, obj, float(np.linalg.norm(Md @ x - y)), "admm")


def _l1_pdhg(M, omega, y, tol, max_iter):
    xp = M.min_norm_solution(y)

    def project(v):
        return xp + M.project_null(v - xp)

    L = omega.spectral_norm()
    tau = sigma = 0.99 / L
    x = xp.copy()
    x_bar = x.copy()
    v = np.zeros(omega.p)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        v = np.clip(v + sigma * omega.apply(x_bar), -1.0, 1.0)
        x_new = project(x - tau * omega.adjoint(v))
        x_bar = 2 * x_new - x
        change = np.linalg.norm(x_new - x)
        x = x_new
        if change <= tol * np.linalg.norm(x):
            converged = True
            break
    obj = float(np.abs(omega.apply(x)).sum())
    return x, L1Info(it, converged, obj, float(np.linalg.norm(M.apply(x) - y)), "pdhg")


def debias(x_raw, omega, M, y, zero_tol: float = DEFAULT_ZERO_TOL, matrix_free: bool | None = None) -> RecoveryResult:
    """Re-fit on the cosupport detected in ``x_raw``.

    Rows with ``|(Omega x_raw)_i| <= zero_tol ||x_raw||`` form the estimated
    cosupport ``L``; the estimate is the least-squares solution of
    ``[M; Omega_L] x = [y; 0]``. If that stacked system is rank deficient the
    minimum-norm solution is returned with status ``"indeterminate"``.
    Matrix-free mode solves ``min ||Omega_L x|| s.t. Mx = y`` by CGLS instead
    and cannot check the rank.
    """
    M, omega = as_measurement(M), as_operator(omega)
    y = _check_problem(M, omega, y)
    x_raw = as_vector(x_raw, "x_raw")
    lam_hat = cosupport_of(omega, x_raw, zero_tol)
    rows = omega.restrict(lam_hat.indices)
    if matrix_free is None:
        matrix_free = not _can_densify(M, omega)
    flags = {"matrix_free": matrix_free}
    if not matrix_free:
        S = np.vstack([M.dense(), rows.dense()])
        rhs = np.concatenate([y, np.zeros(rows.p)])
        x = least_squares_min_norm(S, rhs)
        rank = numerical_rank(S)
        flags["rank"] = rank
        status = "converged" if rank == M.d else "indeterminate"
    else:
        P = M.project_null
        xp = M.min_norm_solution(y)
        A = LinearMap(M.d, rows.p, lambda z: rows.apply(P(z)), lambda w: P(rows.adjoint(w)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = cg_least_squares(A, -rows.apply(xp), tol=1e-12, x0=P(x_raw - xp))
        x = xp + P(res.x)
        flags["cg_converged"] = res.converged
        status = "converged" if res.converged else "max-iter"
    return RecoveryResult(x, lam_hat, 0, status, [], flags)
