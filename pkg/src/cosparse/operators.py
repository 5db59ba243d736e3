"""Analysis operators and measurement systems.

Two analysis operators are provided: dense random tight frames and the 2-D
finite-difference operator on an ``N x N`` pixel lattice. Measurements are
either dense (Gaussian) or partial 2-D Fourier samples along radial lines,
presented as a real map by stacking real and imaginary parts.

Images are flattened row-major, so pixel ``(r, c)`` is entry ``r * N + c``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ConvergenceWarning, DimensionError, RankDeficientError
from .numerics import (
    LinearMap,
    as_matrix,
    as_vector,
    least_squares_min_norm,
    null_space_basis,
    numerical_rank,
    svd,
)


def _as_rows(rows, p: int) -> np.ndarray:
    idx = np.asarray(rows, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= p):
        raise IndexError(f"row index out of range for an operator with {p} rows")
    return idx


@dataclass(frozen=True)
class PixelGraph:
    """The 4-neighbour lattice graph of an ``n x n`` image.

    Edge ``e`` joins ``heads[e]`` and ``tails[e]`` and corresponds to row ``e``
    of the finite-difference operator. Horizontal edges come first, row-major,
    then vertical edges, row-major.
    """

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"lattice side must be at least 2, got {self.n}")

    @property
    def n_vertices(self) -> int:
        return self.n * self.n

    @property
    def n_edges(self) -> int:
        return 2 * self.n * (self.n - 1)

    @property
    def n_horizontal(self) -> int:
        return self.n * (self.n - 1)

    @cached_property
    def heads(self) -> np.ndarray:
        return self._ends()[0]

    @cached_property
    def tails(self) -> np.ndarray:
        return self._ends()[1]

    def _ends(self):
        n = self.n
        pix = np.arange(n * n).reshape(n, n)
        heads = np.concatenate([pix[:, :-1].ravel(), pix[:-1, :].ravel()])
        tails = np.concatenate([pix[:, 1:].ravel(), pix[1:, :].ravel()])
        return heads, tails


def pixel_graph(n: int) -> PixelGraph:
    return PixelGraph(n)


def _dif_forward(x: np.ndarray, n: int) -> np.ndarray:
    X = x.reshape(n, n)
    return np.concatenate([(X[:, :-1] - X[:, 1:]).ravel(), (X[:-1, :] - X[1:, :]).ravel()])


def _dif_adjoint(z: np.ndarray, n: int) -> np.ndarray:
    nh = n * (n - 1)
    H = z[:nh].reshape(n, n - 1)
    V = z[nh:].reshape(n - 1, n)
    out = np.zeros((n, n))
    out[:, :-1] += H
    out[:, 1:] -= H
    out[:-1, :] += V
    out[1:, :] -= V
    return out.ravel()


@dataclass(frozen=True, eq=False)
class AnalysisOperator:
    """A ``p x d`` analysis operator, possibly restricted to a subset of rows.

    ``kind`` is ``"dense"`` (an explicit matrix) or ``"dif2d"`` (finite
    differences on an ``n x n`` lattice, never materialized unless asked).
    ``rows`` selects rows of the unrestricted parent; ``None`` keeps them all.
    """

    kind: str
    d: int
    matrix: np.ndarray | None = None
    n: int | None = None
    rows: np.ndarray | None = None
    p_parent: int = field(init=False)

    def __post_init__(self):
        if self.kind == "dense":
            A = as_matrix(self.matrix, "matrix")
            object.__setattr__(self, "matrix", A)
            object.__setattr__(self, "p_parent", A.shape[0])
        elif self.kind == "dif2d":
            object.__setattr__(self, "p_parent", 2 * self.n * (self.n - 1))
        else:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.rows is not None:
            object.__setattr__(self, "rows", _as_rows(self.rows, self.p_parent))

    @property
    def p(self) -> int:
        return self.p_parent if self.rows is None else int(self.rows.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p, self.d)

    @cached_property
    def _dense_rows(self) -> np.ndarray:
        if self.kind == "dense":
            A = self.matrix
        else:
            if self.n > 64:
                raise MemoryError("dense finite-difference operator is limited to n <= 64")
            A = _dif_dense(self.n)
        return A if self.rows is None else A[self.rows]

    def dense(self) -> np.ndarray:
        return self._dense_rows

    def apply(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if x.shape[0] != self.d:
            raise DimensionError(f"signal has length {x.shape[0]}, operator expects {self.d}")
        if self.kind == "dense":
            return self._dense_rows @ x
        z = _dif_forward(x, self.n)
        return z if self.rows is None else z[self.rows]

    def adjoint(self, z) -> np.ndarray:
        z = as_vector(z, "z")
        if z.shape[0] != self.p:
            raise DimensionError(f"coefficient vector has length {z.shape[0]}, expected {self.p}")
        if self.kind == "dense":
            return self._dense_rows.T @ z
        if self.rows is not None:
            full = np.zeros(self.p_parent)
            full[self.rows] = z
            z = full
        return _dif_adjoint(z, self.n)

    def as_linear_map(self) -> LinearMap:
        return LinearMap(self.d, self.p, self.apply, self.adjoint)

    def restrict(self, rows) -> "AnalysisOperator":
        """Keep only the given rows (indices into this operator's rows)."""
        idx = _as_rows(rows, self.p)
        parent_rows = idx if self.rows is None else self.rows[idx]
        return AnalysisOperator(self.kind, self.d, self.matrix, self.n, parent_rows)

    @property
    def graph(self) -> PixelGraph:
        if self.kind != "dif2d":
            raise TypeError("only finite-difference operators have a pixel graph")
        return PixelGraph(self.n)

    def spectral_norm(self) -> float:
        """Largest singular value of the unrestricted operator."""
        if self.kind == "dense":
            A = self.matrix
            return float(np.linalg.norm(A, 2)) if A.size else 0.0
        # Neumann grid Laplacian: largest eigenvalue 2 * (2 - 2 cos(pi (n-1)/n))
        return float(np.sqrt(4.0 - 4.0 * np.cos(np.pi * (self.n - 1) / self.n)))

    def to_descriptor(self) -> dict:
        if self.kind == "dif2d":
            desc = {"kind": "dif2d", "n": self.n}
        else:
            desc = {"kind": "dense", "p": self.p_parent, "d": self.d}
        if self.rows is not None:
            desc["rows"] = self.rows.tolist()
        return desc


def restrict_rows(omega: AnalysisOperator, cosupport) -> AnalysisOperator:
    """Operator made of the rows of ``omega`` indexed by ``cosupport``."""
    idx = getattr(cosupport, "indices", cosupport)
    return omega.restrict(idx)


def _dif_dense(n: int) -> np.ndarray:
    g = PixelGraph(n)
    A = np.zeros((g.n_edges, g.n_vertices))
    e = np.arange(g.n_edges)
    A[e, g.heads] = 1.0
    A[e, g.tails] = -1.0
    return A


def finite_difference_2d(n: int) -> AnalysisOperator:
    """Horizontal and vertical neighbour differences on an ``n x n`` image."""
    if n < 2:
        raise ValueError(f"lattice side must be at least 2, got {n}")
    return AnalysisOperator("dif2d", n * n, n=n)


def dense_operator(matrix) -> AnalysisOperator:
    A = as_matrix(matrix, "matrix")
    return AnalysisOperator("dense", A.shape[1], A)


def tight_frame_residual(A: np.ndarray) -> float:
    """Relative Frobenius distance of ``A^T A`` from ``(p/d) I``."""
    p, d = A.shape
    c = p / d
    return float(np.linalg.norm(A.T @ A - c * np.eye(d)) / (c * np.sqrt(d)))


def _alternating_tight_frame(A: np.ndarray, max_iter: int, tol: float):
    p, d = A.shape
    scale = np.sqrt(p / d)
    res = np.inf
    for _ in range(max_iter):
        # polar factor A (A^T A)^{-1/2} via the eigendecomposition of the Gram matrix
        w, V = np.linalg.eigh(A.T @ A)
        A = A @ ((V / np.sqrt(w)) @ V.T) * scale
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        res = tight_frame_residual(A)
        if res <= tol:
            break
    return A, res


def random_tight_frame_operator(
    p: int, d: int, seed=None, max_iter: int = 200, tol: float = 1e-9
) -> AnalysisOperator:
    """Random ``p x d`` operator with unit-norm rows and ``A^T A = (p/d) I``.

    Starts from a Gaussian matrix and alternates between the nearest tight
    frame (scaled polar factor) and row normalization. That alternation is
    slow when ``p`` is close to ``d``, so for ``d < p < 2d`` it is run on the
    ``p x (p - d)`` complementary frame instead, and the result is a randomly
    rotated orthonormal basis of the complement of its column space.
    """
    if p < d:
        raise ValueError(f"a tight frame needs p >= d, got p={p}, d={d}")
    rng = np.random.default_rng(seed)
    if p == d or p >= 2 * d:
        A, res = _alternating_tight_frame(rng.standard_normal((p, d)), max_iter, tol)
    else:
        B, _ = _alternating_tight_frame(rng.standard_normal((p, p - d)), max_iter, tol)
        # B has orthogonal columns of squared norm p / (p - d); extend them to
        # an orthonormal basis of R^p and keep the other d directions
        Q, _ = np.linalg.qr(np.hstack([B, rng.standard_normal((p, d))]))
        H, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A = Q[:, p - d:] @ H * np.sqrt(p / d)
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        res = tight_frame_residual(A)
    if res > tol:
        warnings.warn(
            f"tight frame construction stopped at residual {res:.2e}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return dense_operator(A)


def line_frequencies(n: int, n_lines: int) -> np.ndarray:
    """Distinct 2-D frequencies on ``n_lines`` radial lines through DC.

    Line ``k`` has angle ``k pi / n_lines`` and is sampled at ``n`` points
    ``t = -n/2, ..., n/2 - 1`` along its dominant axis, rounding the other
    coordinate to the nearest integer. Frequencies are returned as
    ``(row, col)`` pairs in signed form ``[-n/2, n/2)``, sorted.
    """
    if n < 2:
        raise ValueError(f"grid side must be at least 2, got {n}")
    if n_lines < 0:
        raise ValueError("number of lines must be non-negative")
    t = np.arange(-(n // 2), n - n // 2)
    pts = []
    for k in range(n_lines):
        theta = k * np.pi / n_lines
        if theta <= np.pi / 4 or theta > 3 * np.pi / 4:
            col, row = t, np.rint(t * np.tan(theta)).astype(np.int64)
        else:
            col, row = np.rint(t / np.tan(theta)).astype(np.int64), t
        pts.append(np.stack([row, col], axis=1))
    if not pts:
        return np.zeros((0, 2), dtype=np.int64)
    freqs = np.mod(np.concatenate(pts), n)
    freqs = np.unique(freqs, axis=0)
    freqs = np.where(freqs >= n - n // 2, freqs - n, freqs)
    order = np.lexsort((freqs[:, 1], freqs[:, 0]))
    return freqs[order]


def _conjugate_classes(freqs: np.ndarray, n: int):
    """One representative per conjugate pair, plus a self-conjugate flag."""
    reps, selfc, seen = [], [], set()
    for u, v in np.mod(freqs, n):
        key = (int(u), int(v))
        conj = ((-key[0]) % n, (-key[1]) % n)
        if key in seen or conj in seen:
            continue
        seen.add(key)
        reps.append(key)
        selfc.append(key == conj)
    reps = np.array(reps, dtype=np.int64).reshape(-1, 2)
    return reps, np.array(selfc, dtype=bool)


@dataclass(frozen=True, eq=False)
class MeasurementSystem:
    """An ``m x d`` real measurement map ``x -> y``.

    ``kind`` is ``"gaussian"`` or ``"dense"`` (explicit matrix) or
    ``"radial_fourier"``. For Fourier systems the measurements are the real
    parts of the unnormalized 2-D DFT at one frequency of each conjugate pair,
    followed by the imaginary parts of the pairs that are not self-conjugate
    (the others vanish for real images).
    """

    kind: str
    d: int
    matrix: np.ndarray | None = None
    n: int | None = None
    lines: int | None = None
    frequencies: np.ndarray | None = None

    def __post_init__(self):
        if self.kind in ("gaussian", "dense"):
            A = as_matrix(self.matrix, "matrix")
            if A.shape[1] != self.d:
                raise DimensionError("matrix width does not match d")
            object.__setattr__(self, "matrix", A)
        elif self.kind == "radial_fourier":
            reps, selfc = _conjugate_classes(self.frequencies, self.n)
            object.__setattr__(self, "_reps", reps)
            object.__setattr__(self, "_selfc", selfc)
        else:
            raise ValueError(f"unknown measurement kind {self.kind!r}")

    @property
    def m(self) -> int:
        if self.matrix is not None:
            return self.matrix.shape[0]
        return int(2 * self._reps.shape[0] - self._selfc.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.d)

    def apply(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if x.shape[0] != self.d:
            raise DimensionError(f"signal has length {x.shape[0]}, expected {self.d}")
        if self.matrix is not None:
            return self.matrix @ x
        F = np.fft.fft2(x.reshape(self.n, self.n))[self._reps[:, 0], self._reps[:, 1]]
        return np.concatenate([F.real, F.imag[~self._selfc]])

    def adjoint(self, y) -> np.ndarray:
        y = as_vector(y, "y")
        if y.shape[0] != self.m:
            raise DimensionError(f"measurement vector has length {y.shape[0]}, expected {self.m}")
        if self.matrix is not None:
            return self.matrix.T @ y
        k = self._reps.shape[0]
        C = np.zeros((self.n, self.n), dtype=complex)
        coef = y[:k].astype(complex)
        coef[~self._selfc] += 1j * y[k:]
        C[self._reps[:, 0], self._reps[:, 1]] = coef
        return (np.fft.ifft2(C).real * (self.n * self.n)).ravel()

    def as_linear_map(self) -> LinearMap:
        return LinearMap(self.d, self.m, self.apply, self.adjoint)

    @cached_property
    def _gram_diag(self) -> np.ndarray:
        # rows of the Fourier map are mutually orthogonal
        half = self.d / 2.0
        re = np.where(self._selfc, float(self.d), half)
        return np.concatenate([re, np.full(int((~self._selfc).sum()), half)])

    @cached_property
    def _row_space(self):
        U, s, Vt = svd(self.matrix, full_matrices=False)
        return U, s, Vt

    def min_norm_solution(self, y) -> np.ndarray:
        """The minimum-norm ``x`` with ``Mx = y``."""
        y = as_vector(y, "y")
        if self.matrix is None:
            return self.adjoint(y / self._gram_diag)
        U, s, Vt = self._row_space
        return Vt.T @ ((U.T @ y) / s)

    def project_null(self, x) -> np.ndarray:
        """Orthogonal projection onto ``Null(M)``."""
        x = as_vector(x, "x")
        if self.matrix is None:
            return x - self.min_norm_solution(self.apply(x))
        Vt = self._row_space[2]
        return x - Vt.T @ (Vt @ x)

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return self.as_linear_map().dense()

    def null_basis(self) -> np.ndarray:
        return null_space_basis(self.dense())

    def spectral_norm(self) -> float:
        if self.matrix is None:
            return float(np.sqrt(self._gram_diag.max())) if self.m else 0.0
        return float(self._row_space[1][0]) if self.m else 0.0

    def to_descriptor(self) -> dict:
        if self.kind == "radial_fourier":
            return {
                "kind": "radial_fourier",
                "n": self.n,
                "lines": self.lines,
                "frequencies": self.frequencies.tolist(),
            }
        return {"kind": self.kind, "m": self.m, "d": self.d}


def dense_measurement(matrix, kind: str = "dense") -> MeasurementSystem:
    A = as_matrix(matrix, "matrix")
    if A.shape[0] > A.shape[1]:
        raise DimensionError(f"need m <= d, got {A.shape}")
    if A.shape[0] and numerical_rank(A) < A.shape[0]:
        raise RankDeficientError("measurement matrix does not have full row rank")
    return MeasurementSystem(kind, A.shape[1], A)


def gaussian_measurement(m: int, d: int, seed=None) -> MeasurementSystem:
    """``m x d`` matrix of iid standard normal entries, checked for full row rank."""
    if m > d:
        raise DimensionError(f"need m <= d, got m={m}, d={d}")
    rng = np.random.default_rng(seed)
    return dense_measurement(rng.standard_normal((m, d)), kind="gaussian")


def radial_fourier_system(n: int, n_lines: int) -> MeasurementSystem:
    """Real-stacked 2-D DFT samples of an ``n x n`` image along radial lines."""
    freqs = line_frequencies(n, n_lines)
    return MeasurementSystem("radial_fourier", n * n, n=n, lines=n_lines, frequencies=freqs)


def measurement_from_descriptor(desc: dict, matrix=None) -> MeasurementSystem:
    kind = desc["kind"]
    if kind == "radial_fourier":
        if "frequencies" in desc:
            freqs = np.asarray(desc["frequencies"], dtype=np.int64).reshape(-1, 2)
            n = int(desc["n"])
            return MeasurementSystem("radial_fourier", n * n, n=n, lines=desc.get("lines"), frequencies=freqs)
        return radial_fourier_system(int(desc["n"]), int(desc["lines"]))
    if matrix is None:
        raise ValueError(f"a {kind!r} measurement descriptor needs its matrix")
    return dense_measurement(matrix, kind=kind)


def operator_from_descriptor(desc: dict, matrix=None) -> AnalysisOperator:
    if desc["kind"] == "dif2d":
        op = finite_difference_2d(int(desc["n"]))
    else:
        if matrix is None:
            raise ValueError("a dense operator descriptor needs its matrix")
        op = dense_operator(matrix)
    if desc.get("rows") is not None:
        op = op.restrict(desc["rows"])
    return op


def stacked_min_norm(M: MeasurementSystem, omega: AnalysisOperator, y) -> np.ndarray:
    """Least-squares solution of ``[M; Omega] x = [y; 0]`` (dense operands)."""
    A = np.vstack([M.dense(), omega.dense()])
    b = np.concatenate([as_vector(y, "y"), np.zeros(omega.p)])
    return least_squares_min_norm(A, b)
