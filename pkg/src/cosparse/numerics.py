"""Dense linear algebra helpers and a matrix-free least-squares solver.

Every rank decision in the package goes through ``RTOL``: singular values
below ``RTOL * sigma_max`` are treated as zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import (
    ConvergenceWarning,
    DimensionError,
    NonFiniteError,
    RankDeficientError,
)

RTOL = 1e-12


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Return ``A`` as a finite 2-D float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[np.newaxis, :]
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return A


def as_vector(b, name: str = "b") -> np.ndarray:
    b = np.asarray(b, dtype=float).ravel()
    if not np.all(np.isfinite(b)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return b


def svd(A, full_matrices: bool = True, compute_uv: bool = True):
    """SVD via the divide-and-conquer driver, retrying with ``gesvd``.

    ``gesdd`` occasionally fails to converge even on well-conditioned input;
    the QR-iteration driver is slower but more robust.
    """
    try:
        return np.linalg.svd(A, full_matrices=full_matrices, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(
            A, full_matrices=full_matrices, compute_uv=compute_uv, lapack_driver="gesvd"
        )


def numerical_rank(A, rtol: float = RTOL) -> int:
    A = as_matrix(A)
    if A.size == 0:
        return 0
    s = svd(A, compute_uv=False)
    return int(np.sum(s > rtol * s[0]))


def least_squares_min_norm(A, b, rtol: float = RTOL) -> np.ndarray:
    """Minimum-norm minimizer of ``||Ax - b||_2``.

    Uses the SVD-based LAPACK driver ``gelsd``; singular values below
    ``rtol * sigma_max`` are dropped, so rank-deficient systems return the
    minimum-norm solution.
    """
    A = as_matrix(A)
    b = as_vector(b)
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    if A.size == 0:
        return np.zeros(A.shape[1])
    x, _, _, _ = scipy.linalg.lstsq(A, b, cond=rtol, lapack_driver="gelsd")
    return x


def pseudo_inverse(A, rtol: float = RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with relative cutoff ``rtol``."""
    A = as_matrix(A)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    return np.linalg.pinv(A, rcond=rtol)


def null_space_basis(M, rtol: float = RTOL) -> np.ndarray:
    """Orthonormal basis of ``Null(M)`` as the columns of a ``d x (d - m)`` matrix.

    ``M`` must have full row rank; a rank-deficient ``M`` means some
    measurements are linear combinations of others, which the recovery
    theory excludes.
    """
    M = as_matrix(M, "M")
    m, d = M.shape
    if m == 0:
        return np.eye(d)
    if m >= d:
        raise DimensionError(f"M must have fewer rows than columns, got {M.shape}")
    _, s, Vt = svd(M)
    rank = int(np.sum(s > rtol * s[0]))
    if rank < m:
        raise RankDeficientError(
            f"M has rank {rank} < {m} rows; measurements must be linearly independent"
        )
    return Vt[m:].T.copy()


def kernel_basis(A, rtol: float = RTOL) -> np.ndarray:
    """Orthonormal basis of ``Null(A)`` for any ``A``, as columns."""
    A = as_matrix(A)
    d = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(d)
    _, s, Vt = svd(A)
    rank = int(np.sum(s > rtol * s[0])) if s.size else 0
    return Vt[rank:].T.copy()


def op_norm_inf_inf(A) -> float:
    """Induced infinity norm: the largest row l1-norm."""
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=1).max())


def op_norm_1_1(A) -> float:
    """Induced l1 norm: the largest column l1-norm."""
    return op_norm_inf_inf(as_matrix(A).T)


@dataclass(frozen=True)
class LinearMap:
    """A linear operator given by forward and adjoint callables."""

    in_dim: int
    out_dim: int
    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.out_dim, self.in_dim)

    def __matmul__(self, x):
        return self.forward(np.asarray(x, dtype=float))

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self.out_dim, self.in_dim, self.adjoint, self.forward)

    @classmethod
    def from_matrix(cls, A) -> "LinearMap":
        A = as_matrix(A)
        return cls(A.shape[1], A.shape[0], lambda x: A @ x, lambda y: A.T @ y)

    def scaled(self, c: float) -> "LinearMap":
        return LinearMap(
            self.in_dim,
            self.out_dim,
            lambda x: c * self.forward(x),
            lambda y: c * self.adjoint(y),
        )

    def dense(self) -> np.ndarray:
        """Materialize the operator column by column (small maps only)."""
        out = np.empty((self.out_dim, self.in_dim))
        e = np.zeros(self.in_dim)
        for j in range(self.in_dim):
            e[j] = 1.0
            out[:, j] = self.forward(e)
            e[j] = 0.0
        return out


def compose(A: LinearMap, B: LinearMap) -> LinearMap:
    """Return the map ``x -> A(B(x))``."""
    if A.in_dim != B.out_dim:
        raise DimensionError(f"cannot compose {A.shape} with {B.shape}")
    return LinearMap(
        B.in_dim,
        A.out_dim,
        lambda x: A.forward(B.forward(x)),
        lambda y: B.adjoint(A.adjoint(y)),
    )


def vstack(*maps: LinearMap) -> LinearMap:
    """Stack maps sharing an input space on top of each other."""
    d = maps[0].in_dim
    if any(A.in_dim != d for A in maps):
        raise DimensionError("stacked maps must share the input dimension")
    sizes = [A.out_dim for A in maps]
    splits = np.cumsum(sizes)[:-1]

    def forward(x):
        return np.concatenate([A.forward(x) for A in maps])

    def adjoint(y):
        out = np.zeros(d)
        for A, part in zip(maps, np.split(y, splits)):
            if A.out_dim:
                out += A.adjoint(part)
        return out

    return LinearMap(d, int(sum(sizes)), forward, adjoint)


def adjoint_mismatch(A: LinearMap, n_probes: int = 3, seed: int = 0) -> float:
    """Largest relative gap between <Ax, y> and <x, A^T y> on random probes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(A.in_dim)
        y = rng.standard_normal(A.out_dim)
        Ax, ATy = A.forward(x), A.adjoint(y)
        lhs, rhs = float(Ax @ y), float(x @ ATy)
        scale = np.linalg.norm(Ax) * np.linalg.norm(y) + np.linalg.norm(x) * np.linalg.norm(ATy)
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def estimate_norm(A: LinearMap, n_iter: int = 50, seed: int = 0) -> float:
    """Spectral norm estimate by power iteration on ``A^T A``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.in_dim)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(n_iter):
        z = A.adjoint(A.forward(x))
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        s_new = np.sqrt(nz)
        x = z / nz
        if abs(s_new - s) <= 1e-6 * s_new:
            s = s_new
            break
        s = s_new
    return float(s)


@dataclass
class LSQResult:
    x: np.ndarray
    iterations: int
    converged: bool
    # ||A^T(Ax - b)|| / ||A^T b||
    residual_ratio: float


def cg_least_squares(
    A: LinearMap,
    b,
    tol: float = 1e-10,
    max_iter: int | None = None,
    x0=None,
) -> LSQResult:
    """Conjugate gradients on the normal equations (CGLS), matrix-free.

    Stops once ``||A^T(Ax - b)|| <= tol * ||A^T b||``. If ``max_iter`` is hit
    first, the iterate with the smallest normal-equation residual is
    returned, ``converged`` is False and a :class:`ConvergenceWarning` is
    issued.
    """
    b = as_vector(b)
    if b.shape[0] != A.out_dim:
        raise DimensionError(f"b has length {b.shape[0]}, expected {A.out_dim}")
    if max_iter is None:
        max_iter = 2 * A.in_dim
    norm_atb = np.linalg.norm(A.adjoint(b))
    if norm_atb == 0.0:
        return LSQResult(np.zeros(A.in_dim), 0, True, 0.0)

    x = np.zeros(A.in_dim) if x0 is None else np.array(x0, dtype=float)
    r = b - A.forward(x) if x0 is not None else b.copy()
    s = A.adjoint(r)
    p = s.copy()
    gamma = float(s @ s)
    best_x, best_res = x.copy(), np.sqrt(gamma) / norm_atb
    if best_res <= tol:
        return LSQResult(x, 0, True, best_res)

    for k in range(1, max_iter + 1):
        q = A.forward(p)
        qq = float(q @ q)
        if qq == 0.0:
            break
        step = gamma / qq
        x += step * p
        r -= step * q
        s = A.adjoint(r)
        gamma_new = float(s @ s)
        res = np.sqrt(gamma_new) / norm_atb
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return LSQResult(x, k, True, res)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new

    warnings.warn(
        f"CGLS stopped after {max_iter} iterations at relative residual {best_res:.2e}",
        ConvergenceWarning,
        stacklevel=2,
    )
    return LSQResult(best_x, max_iter, False, best_res)
