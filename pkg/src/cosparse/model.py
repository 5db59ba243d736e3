"""Cosparse signal model: cosupports, signal generation and subspace dimensions.

A signal ``x`` is ``l``-cosparse under ``Omega`` when ``Omega x`` has ``l``
zero entries. The zero positions (the cosupport) pin ``x`` to the subspace
``Null(Omega_cosupport)``. The largest such subspace over cosupports of a
given size, ``kappa(l)``, decides how many measurements make the signal
identifiable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from .exceptions import (
    DimensionError,
    EnumerationTooLargeError,
    ZeroSignalError,
)
from .numerics import as_vector, kernel_basis, numerical_rank
from .operators import AnalysisOperator, PixelGraph

DEFAULT_ZERO_TOL = 1e-6
ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True, eq=False)
class Cosupport:
    """Sorted set of row indices of a ``p``-row operator."""

    indices: np.ndarray
    p: int

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64).ravel())
        if idx.size and (idx[0] < 0 or idx[-1] >= self.p):
            raise IndexError(f"cosupport index out of range for p={self.p}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_mask(cls, mask) -> "Cosupport":
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), mask.size)

    @classmethod
    def full(cls, p: int) -> "Cosupport":
        return cls(np.arange(p), p)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __contains__(self, i) -> bool:
        k = np.searchsorted(self.indices, i)
        return bool(k < self.indices.size and self.indices[k] == i)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Cosupport)
            and self.p == other.p
            and np.array_equal(self.indices, other.indices)
        )

    def mask(self) -> np.ndarray:
        out = np.zeros(self.p, dtype=bool)
        out[self.indices] = True
        return out

    def complement(self) -> "Cosupport":
        return Cosupport(np.flatnonzero(~self.mask()), self.p)

    def issubset(self, other: "Cosupport") -> bool:
        return bool(np.all(np.isin(self.indices, other.indices)))

    def tolist(self) -> list[int]:
        return self.indices.tolist()


@dataclass(frozen=True, eq=False)
class CosparseSignal:
    x: np.ndarray
    cosupport: Cosupport

    @property
    def cosparsity(self) -> int:
        return len(self.cosupport)


def _coefficients(omega: AnalysisOperator, x) -> tuple[np.ndarray, float]:
    x = as_vector(x, "x")
    if x.shape[0] != omega.d:
        raise DimensionError(f"signal has length {x.shape[0]}, operator expects {omega.d}")
    return omega.apply(x), float(np.linalg.norm(x))


def cosupport_of(omega: AnalysisOperator, x, zero_tol: float = DEFAULT_ZERO_TOL) -> Cosupport:
    """Rows where ``|(Omega x)_i| <= zero_tol * ||x||_2``."""
    z, nx = _coefficients(omega, x)
    return Cosupport(np.flatnonzero(np.abs(z) <= zero_tol * nx), omega.p)


def cosparsity(omega: AnalysisOperator, x, zero_tol: float = DEFAULT_ZERO_TOL) -> int:
    """Number of (relatively) zero analysis coefficients of ``x``."""
    return len(cosupport_of(omega, x, zero_tol))


def dif_components(graph: PixelGraph, cosupport) -> np.ndarray:
    """Connected-component label of every pixel in the graph ``(V, cosupport)``."""
    idx = np.asarray(getattr(cosupport, "indices", cosupport), dtype=np.int64)
    nv = graph.n_vertices
    adj = scipy.sparse.coo_matrix(
        (np.ones(idx.size), (graph.heads[idx], graph.tails[idx])), shape=(nv, nv)
    )
    _, labels = connected_components(adj, directed=False)
    return labels


def subspace_dim_dif(graph: PixelGraph, cosupport) -> int:
    """Dimension of ``Null(Omega_cosupport)`` for the finite-difference operator.

    Images in the null space are constant on every connected component of the
    graph whose edges are the cosupport, so the dimension is
    ``|V| - |V(cosupport)| + J(cosupport)``: free uncovered pixels plus one
    degree of freedom per component of the covered ones.
    """
    idx = np.asarray(getattr(cosupport, "indices", cosupport), dtype=np.int64)
    labels = dif_components(graph, idx)
    covered = np.unique(np.concatenate([graph.heads[idx], graph.tails[idx]]))
    n_components = np.unique(labels[covered]).size
    return int(graph.n_vertices - covered.size + n_components)


def _project_piecewise_constant(v: np.ndarray, labels: np.ndarray) -> np.ndarray:
    counts = np.bincount(labels)
    means = np.bincount(labels, weights=v) / counts
    return means[labels]


def generate_cosparse_signal(
    omega: AnalysisOperator, l: int, seed=None, max_tries: int = 100
) -> CosparseSignal:
    """Draw a random cosupport of size ``l`` and a Gaussian signal in its subspace.

    The signal is the orthogonal projection of an iid Gaussian vector onto
    ``Null(Omega_cosupport)``. If that subspace is trivial a fresh cosupport
    is drawn, up to ``max_tries`` times.
    """
    if not 0 <= l <= omega.p:
        raise ValueError(f"cosparsity must lie in [0, {omega.p}], got {l}")
    rng = np.random.default_rng(seed)
    graph_kind = omega.kind == "dif2d" and omega.rows is None
    for _ in range(max_tries):
        lam = np.sort(rng.choice(omega.p, size=l, replace=False))
        v = rng.standard_normal(omega.d)
        if graph_kind:
            x = _project_piecewise_constant(v, dif_components(omega.graph, lam))
        else:
            B = kernel_basis(omega.dense()[lam])
            x = B @ (B.T @ v)
        if np.linalg.norm(x) > 1e-10 * np.linalg.norm(v):
            return CosparseSignal(x, Cosupport(lam, omega.p))
    raise ZeroSignalError(
        f"no nonzero signal found with cosparsity {l} after {max_tries} cosupport draws"
    )


def kappa_general_position(d: int, l: int) -> int:
    """Largest analysis subspace dimension when every ``d`` rows are independent."""
    return max(d - l, 0)


class KappaBounds(NamedTuple):
    lower: float | None
    upper: float


def _lattice_side(d: int) -> int:
    n = math.isqrt(d)
    if n * n != d:
        raise ValueError(f"d must be a perfect square for a square lattice, got {d}")
    return n


def kappa_dif_bounds(d: int, l: int) -> KappaBounds:
    """Bounds on the finite-difference subspace dimension at cosparsity ``l``.

    ``d - l/2 - sqrt(l/2) - 1 <= kappa <= d - l/2``. The lower bound only
    applies for ``l >= 5``; below that it is reported as ``None``.
    """
    n = _lattice_side(d)
    if not 0 <= l <= 2 * n * (n - 1):
        raise ValueError(f"cosparsity must lie in [0, {2 * n * (n - 1)}], got {l}")
    upper = d - l / 2
    lower = d - l / 2 - math.sqrt(l / 2) - 1 if l >= 5 else None
    return KappaBounds(lower, upper)


def _check_enumeration(count: int, limit: int):
    if count > limit:
        raise EnumerationTooLargeError(f"{count} subsets exceed the enumeration limit {limit}")


def _dif_kappa_kernel():
    import numba

    @numba.njit(cache=True)
    def kernel(heads, tails, n_vertices, l):
        # walk every l-subset of edges in lexicographic order; the null-space
        # dimension is the number of components of (V, subset)
        p = heads.size
        comb = np.arange(l)
        parent = np.empty(n_vertices, dtype=np.int64)
        best = 0
        while True:
            for v in range(n_vertices):
                parent[v] = v
            merges = 0
            for j in range(l):
                a = heads[comb[j]]
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                b = tails[comb[j]]
                while parent[b] != b:
                    parent[b] = parent[parent[b]]
                    b = parent[b]
                if a != b:
                    parent[a] = b
                    merges += 1
            dim = n_vertices - merges
            if dim > best:
                best = dim
            i = l - 1
            while i >= 0 and comb[i] == p - l + i:
                i -= 1
            if i < 0:
                break
            comb[i] += 1
            for j in range(i + 1, l):
                comb[j] = comb[j - 1] + 1
        return best

    return kernel


_DIF_KERNEL = None


def kappa_brute_force(op, l: int, limit: int = ENUMERATION_LIMIT) -> int:
    """``max dim Null(Omega_L)`` over all cosupports ``L`` of size exactly ``l``.

    ``op`` is a small dense :class:`AnalysisOperator` (ranks are numerical) or a
    :class:`PixelGraph` / finite-difference operator (ranks from components).
    """
    global _DIF_KERNEL
    if isinstance(op, AnalysisOperator) and op.kind == "dif2d" and op.rows is None:
        op = op.graph
    if isinstance(op, PixelGraph):
        p, d = op.n_edges, op.n_vertices
    else:
        p, d = op.shape
    if not 0 <= l <= p:
        raise ValueError(f"cosparsity must lie in [0, {p}], got {l}")
    _check_enumeration(math.comb(p, l), limit)
    if l == 0:
        return d
    if isinstance(op, PixelGraph):
        if _DIF_KERNEL is None:
            _DIF_KERNEL = _dif_kappa_kernel()
        return int(_DIF_KERNEL(op.heads, op.tails, d, l))
    A = op.dense()
    return max(d - numerical_rank(A[list(rows)]) for rows in itertools.combinations(range(p), l))


def kappa_tilde_brute_force(omega: AnalysisOperator, l: int, limit: int = ENUMERATION_LIMIT) -> int:
    """``max dim(W_L1 + W_L2)`` over pairs of size-``l`` cosupports (small dense only)."""
    p, d = omega.shape
    if not 0 <= l <= p:
        raise ValueError(f"cosparsity must lie in [0, {p}], got {l}")
    n_sets = math.comb(p, l)
    _check_enumeration(n_sets * (n_sets + 1) // 2, limit)
    A = omega.dense()
    subsets = [list(c) for c in itertools.combinations(range(p), l)]
    ranks = [numerical_rank(A[s]) for s in subsets]
    best = 0
    for i, j in itertools.combinations_with_replacement(range(len(subsets)), 2):
        union = sorted(set(subsets[i]) | set(subsets[j]))
        # dim(W1 + W2) = dim W1 + dim W2 - dim(W1 ∩ W2), W1 ∩ W2 = Null(Omega_union)
        dim = (d - ranks[i]) + (d - ranks[j]) - (d - numerical_rank(A[union]))
        best = max(best, dim)
    return best


UNIQUE = "unique"
NOT_GUARANTEED = "not-guaranteed"
INDETERMINATE = "indeterminate"


def _compare(lower: float, upper: float, budget: float) -> str:
    if upper <= budget:
        return UNIQUE
    if lower > budget:
        return NOT_GUARANTEED
    return INDETERMINATE


@dataclass(frozen=True)
class UniquenessVerdict:
    """Whether ``m`` measurements identify every ``l``-cosparse signal.

    With a known cosupport the condition is ``kappa <= m``; when the
    cosupport is unknown it is ``kappa <= m / 2``. When only bounds on
    ``kappa`` are available, a verdict is definite only if the whole interval
    falls on one side of the threshold.
    """

    kappa_lower: float
    kappa_upper: float
    m: int
    known: str
    unknown: str

    @property
    def exact(self) -> bool:
        return self.kappa_lower == self.kappa_upper

    @property
    def known_unique(self) -> bool:
        return self.known == UNIQUE

    @property
    def unknown_unique(self) -> bool | None:
        return {UNIQUE: True, NOT_GUARANTEED: False}.get(self.unknown)

    @property
    def required_m(self) -> dict:
        """Smallest ``m`` that is sufficient in each regime, per end of the interval."""
        lo = max(math.ceil(self.kappa_lower - 1e-9), 0)
        hi = max(math.floor(self.kappa_upper + 1e-9), 0)
        return {"known": [lo, hi], "unknown": [2 * lo, 2 * hi]}

    def to_dict(self) -> dict:
        kappa = (
            self.kappa_upper
            if self.exact
            else {"lower": self.kappa_lower, "upper": self.kappa_upper}
        )
        return {
            "kappa": kappa,
            "m": self.m,
            "known_unique": self.known_unique,
            "unknown_unique": self.unknown_unique,
            "known": self.known,
            "unknown": self.unknown,
            "thresholds": {"known": "kappa <= m", "unknown": "kappa <= m/2", "required_m": self.required_m},
        }


def uniqueness_verdict(kappa, m: int) -> UniquenessVerdict:
    """Verdict from an exact ``kappa`` or a ``(lower, upper)`` pair.

    A missing lower bound (``None``) is treated as 0.
    """
    if isinstance(kappa, tuple):
        lower, upper = kappa
        lower = 0.0 if lower is None else max(float(lower), 0.0)
        upper = max(float(upper), 0.0)
    else:
        lower = upper = float(kappa)
    # kappa is an integer, so fractional bounds can be tightened
    lower_int, upper_int = math.ceil(lower - 1e-9), math.floor(upper + 1e-9)
    return UniquenessVerdict(
        lower,
        upper,
        int(m),
        _compare(lower_int, upper_int, m),
        _compare(lower_int, upper_int, m / 2),
    )


class SubspaceCount(NamedTuple):
    exact_log2: float
    entropy_log2: float


def binary_entropy(t: float) -> float:
    if t <= 0.0 or t >= 1.0:
        return 0.0
    return -t * math.log2(t) - (1 - t) * math.log2(1 - t)


def subspace_count_log2(model: str, n_or_p: int, k_or_l: int) -> SubspaceCount:
    """``log2`` of the number of subspaces in a union-of-subspaces model.

    For the synthesis model these are the ``C(n, k)`` supports of size ``k``;
    for the analysis model the ``C(p, l)`` cosupports of size ``l``. Returns
    the exact value (log-gamma) and the entropy estimate ``n H(k / n)``.
    """
    if model not in ("synthesis", "analysis"):
        raise ValueError(f"model must be 'synthesis' or 'analysis', got {model!r}")
    n, k = int(n_or_p), int(k_or_l)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    exact = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) / math.log(2)
    return SubspaceCount(float(max(exact, 0.0)), n * binary_entropy(k / n) if n else 0.0)
