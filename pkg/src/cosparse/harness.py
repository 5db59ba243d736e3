"""Experiments: phase-transition diagrams and phantom recovery from radial Fourier lines."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceWarning, CosparseError
from .model import cosupport_of
from .operators import (
    finite_difference_2d,
    gaussian_measurement,
    radial_fourier_system,
    random_tight_frame_operator,
)
from .solvers import GapConfig, analysis_l1_solve, debias, gap_solve

SUCCESS_TOL = 1e-6
SNR_SENTINEL_DB = 300.0
ALGORITHMS = ("gap", "l1")

# smoke preset: 8 x 8 grid, 20 trials per cell
SMOKE_GRID = np.round(np.linspace(0.1, 0.94, 8), 2)


@dataclass
class PhaseGrid:
    """Empirical recovery rates over a ``(delta, rho)`` grid at fixed ``sigma``.

    Cell ``(i, j)`` uses ``m = round(delta_i d)`` measurements, cosparsity
    ``l = d - round(rho_j m)`` and ``p = round(sigma d)`` analysis rows.
    ``successes[i, j]`` is ``-1`` for cells where no nonzero ``l``-cosparse
    signal exists (``l >= d`` or ``l > p``).
    """

    sigma: float
    d: int
    delta_values: np.ndarray
    rho_values: np.ndarray
    trials: int
    algorithm: str
    seed: int
    success_tol: float = SUCCESS_TOL
    successes: np.ndarray = field(default=None)

    def cell(self, i: int, j: int) -> tuple[int, int, int]:
        return cell_dims(self.sigma, self.d, self.delta_values[i], self.rho_values[j])

    @property
    def rates(self) -> np.ndarray:
        r = self.successes / self.trials
        return np.where(self.successes < 0, np.nan, r)

    def monotonicity_violations(self, window: int = 3, slack: float | None = None) -> list:
        """Cells whose smoothed rate rises above their left neighbour.

        Rates along each ``delta`` row are averaged over ``window`` adjacent
        feasible cells (truncated at the ends), and a cell counts as a
        violation when it exceeds the cell before it by more than ``slack``
        (default ``2 / trials``). Returns ``(i, j, increase)`` triples.
        """
        slack = 2.0 / self.trials if slack is None else slack
        half = window // 2
        out = []
        for i, row in enumerate(self.rates):
            cols = np.flatnonzero(~np.isnan(row))
            vals = row[cols]
            smooth = np.array([vals[max(k - half, 0): k + half + 1].mean() for k in range(vals.size)])
            for k in range(1, smooth.size):
                rise = smooth[k] - smooth[k - 1]
                if rise > slack:
                    out.append((i, int(cols[k]), float(rise)))
        return out

    def rows(self):
        for i, delta in enumerate(self.delta_values):
            for j, rho in enumerate(self.rho_values):
                m, l, p = self.cell(i, j)
                s = int(self.successes[i, j])
                yield {
                    "sigma": self.sigma,
                    "delta": float(delta),
                    "rho": float(rho),
                    "m": m,
                    "l": l,
                    "p": p,
                    "trials": self.trials if s >= 0 else 0,
                    "successes": max(s, 0),
                    "rate": "" if s < 0 else s / self.trials,
                }


def cell_dims(sigma: float, d: int, delta: float, rho: float) -> tuple[int, int, int]:
    m = int(round(delta * d))
    l = d - int(round(rho * m))
    p = int(round(sigma * d))
    return m, l, p


def cell_feasible(m: int, l: int, p: int, d: int) -> bool:
    return 1 <= m <= d and 0 <= l < d and l <= p and p >= d


def _trial(args):
    sigma, d, delta, rho, seed, i, j, trial, algorithms, tol, l1_max_iter = args
    m, l, p = cell_dims(sigma, d, delta, rho)
    s_omega, s_meas, s_signal = np.random.SeedSequence([seed, i, j, trial]).spawn(3)
    omega = random_tight_frame_operator(p, d, s_omega)
    M = gaussian_measurement(m, d, s_meas)
    x0 = _signal(omega, l, s_signal)
    y = M.apply(x0)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for alg in algorithms:
            try:
                x_hat = _recover(alg, M, y, omega, l1_max_iter)
                err = np.linalg.norm(x_hat - x0) / np.linalg.norm(x0)
                out[alg] = bool(err < tol)
            except (CosparseError, np.linalg.LinAlgError):
                out[alg] = False
    return i, j, out


def _signal(omega, l, seed):
    from .model import generate_cosparse_signal

    return generate_cosparse_signal(omega, l, seed).x


def _recover(alg, M, y, omega, l1_max_iter):
    if alg == "gap":
        return gap_solve(M, y, omega, GapConfig()).x_hat
    if alg == "l1":
        x = analysis_l1_solve(M, y, omega, tol=1e-9, max_iter=l1_max_iter)
        return debias(x, omega, M, y).x_hat
    raise ValueError(f"unknown algorithm {alg!r}")


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_phase_diagrams(
    sigma: float,
    d: int,
    delta_grid,
    rho_grid,
    trials: int,
    algorithms=ALGORITHMS,
    seed: int = 0,
    jobs: int = 1,
    success_tol: float = SUCCESS_TOL,
    l1_max_iter: int = 5000,
) -> dict[str, PhaseGrid]:
    """Phase diagrams for several algorithms run on the same random instances.

    Each trial draws a random tight frame, a Gaussian measurement matrix and a
    cosparse signal from a seed derived from ``(seed, i, j, trial)``, so the
    result does not depend on ``jobs`` or on execution order. A trial counts
    as a success when the relative error is below ``success_tol`` (l1 output
    is debiased first).
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    rho_grid = np.asarray(rho_grid, dtype=float)
    if np.any((delta_grid <= 0) | (delta_grid > 1)) or np.any((rho_grid <= 0) | (rho_grid > 1)):
        raise ValueError("grid values must lie in (0, 1]")
    for alg in algorithms:
        if alg not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {alg!r}")
    shape = (delta_grid.size, rho_grid.size)
    counts = {alg: np.zeros(shape, dtype=np.int64) for alg in algorithms}
    jobs_list = []
    for i, delta in enumerate(delta_grid):
        for j, rho in enumerate(rho_grid):
            m, l, p = cell_dims(sigma, d, delta, rho)
            if not cell_feasible(m, l, p, d):
                for alg in algorithms:
                    counts[alg][i, j] = -1
                continue
            for trial in range(trials):
                jobs_list.append(
                    (sigma, d, delta, rho, seed, i, j, trial, tuple(algorithms), success_tol, l1_max_iter)
                )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial, jobs_list, chunksize=4))
    else:
        results = [_trial(a) for a in jobs_list]
    for i, j, out in results:
        for alg, ok in out.items():
            counts[alg][i, j] += int(ok)
    return {
        alg: PhaseGrid(sigma, d, delta_grid, rho_grid, trials, alg, seed, success_tol, counts[alg])
        for alg in algorithms
    }


def run_phase_diagram(sigma, d, delta_grid, rho_grid, trials, algorithm="gap", seed=0, jobs=1, **kw) -> PhaseGrid:
    return run_phase_diagrams(sigma, d, delta_grid, rho_grid, trials, (algorithm,), seed, jobs, **kw)[algorithm]


# (intensity, semi-axis a, semi-axis b, center x, center y, rotation in degrees)
_ELLIPSES = np.array([
    [1.00, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.98, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
    [-0.02, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.02, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.01, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.01, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.01, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.01, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.01, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.01, 0.023, 0.046, 0.06, -0.605, 0.0],
])
# higher-contrast intensities, same geometry
_MODIFIED_INTENSITIES = np.array([1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])


def shepp_logan_phantom(n: int, variant: str = "original") -> np.ndarray:
    """The 10-ellipse Shepp-Logan head phantom on an ``n x n`` grid.

    Pixel centers span ``[-1, 1]`` in both directions, ``y`` pointing up
    (row 0 is the top). A pixel gets the summed intensity of the ellipses
    whose closed interior contains its center. ``variant`` is ``"original"``
    or ``"modified"`` (the high-contrast intensity table).
    """
    if n < 16:
        raise ValueError(f"phantom side must be at least 16, got {n}")
    if variant == "original":
        amps = _ELLIPSES[:, 0]
    elif variant == "modified":
        amps = _MODIFIED_INTENSITIES
    else:
        raise ValueError(f"unknown phantom variant {variant!r}")
    axis = (np.arange(n) - (n - 1) / 2) / ((n - 1) / 2)
    X = np.tile(axis, (n, 1))
    Y = np.rot90(X)
    img = np.zeros((n, n))
    for amp, (a, b, x0, y0, phi) in zip(amps, _ELLIPSES[:, 1:]):
        phi = np.deg2rad(phi)
        x, y = X - x0, Y - y0
        q = (x * np.cos(phi) + y * np.sin(phi)) ** 2 / a**2 + (y * np.cos(phi) - x * np.sin(phi)) ** 2 / b**2
        img[q <= 1] += amp
    return img


def snr_db(x, x_hat, exact_tol: float | None = SUCCESS_TOL) -> float:
    """``20 log10(||x|| / ||x_hat - x||)`` in dB.

    Perfect recovery (relative error below ``exact_tol``) is reported as the
    300 dB sentinel rather than a rounding-dependent large number; pass
    ``exact_tol=None`` to only clip at the sentinel.
    """
    err = np.linalg.norm(np.asarray(x_hat) - np.asarray(x))
    nx = np.linalg.norm(x)
    if err == 0.0:
        return SNR_SENTINEL_DB
    if nx == 0.0:
        return -np.inf
    if exact_tol is not None and err < exact_tol * nx:
        return SNR_SENTINEL_DB
    return float(min(20 * math.log10(nx / err), SNR_SENTINEL_DB))


def phantom_gap_config(**overrides) -> GapConfig:
    """GAP settings used for phantom recovery: matrix-free with multiple removals."""
    params = dict(t=0.5, matrix_free=True, cg_tol=1e-10, cg_max_iter=2000)
    params.update(overrides)
    return GapConfig(**params)


@dataclass
class PhantomRun:
    n: int
    lines: int
    m: int
    algorithm: str
    snr_db: float
    relative_error: float
    status: str
    image: np.ndarray
    missed_mask: np.ndarray | None
    iterations: int = 0
    flags: dict = field(default_factory=dict)

    @property
    def perfect(self) -> bool:
        return self.relative_error < SUCCESS_TOL


def coefficient_image(z: np.ndarray, n: int) -> np.ndarray:
    """Stack horizontal (top) and vertical (bottom) difference maps into ``2n x n``."""
    nh = n * (n - 1)
    out = np.zeros((2 * n, n), dtype=z.dtype)
    out[:n, : n - 1] = z[:nh].reshape(n, n - 1)
    out[n + 1 :, :] = z[nh:].reshape(n - 1, n)
    return out


def backprojection(M, y) -> np.ndarray:
    """Adjoint applied to the data, scaled by the gain that best fits ``y``."""
    x = M.adjoint(y)
    Mx = M.apply(x)
    nn = float(Mx @ Mx)
    return x * (float(Mx @ y) / nn) if nn > 0 else np.zeros(M.d)


def run_phantom_recovery(
    n: int,
    lines: int,
    algorithm: str = "gap",
    cfg: GapConfig | None = None,
    variant: str = "original",
    l1_tol: float = 1e-7,
    l1_max_iter: int = 5000,
) -> PhantomRun:
    """Measure the phantom along radial lines and reconstruct it.

    ``algorithm`` is ``"gap"``, ``"l1"`` (followed by debiasing) or
    ``"backprojection"``. The missed-location mask marks nonzero
    finite-difference coefficients of the phantom that the recovered
    cosupport wrongly contains.
    """
    img = shepp_logan_phantom(n, variant)
    x = img.ravel()
    M = radial_fourier_system(n, lines)
    omega = finite_difference_2d(n)
    y = M.apply(x)
    true_support = np.abs(omega.apply(x)) > 1e-6 * np.linalg.norm(x)
    flags: dict = {}
    iterations = 0
    cosupport = None
    if algorithm == "gap":
        res = gap_solve(M, y, omega, cfg or phantom_gap_config())
        x_hat, status, iterations, cosupport, flags = res.x_hat, res.status, res.iterations, res.cosupport, res.flags
    elif algorithm == "l1":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            x_raw, info = analysis_l1_solve(M, y, omega, tol=l1_tol, max_iter=l1_max_iter, full_output=True)
        res = debias(x_raw, omega, M, y)
        x_hat, cosupport = res.x_hat, res.cosupport
        status = "converged" if info.converged else "max-iter"
        iterations, flags = info.iterations, {"debias": res.status}
    elif algorithm == "backprojection":
        if M.m == 0:
            x_hat, status = np.zeros_like(x), "degenerate"
        else:
            x_hat, status = backprojection(M, y), "converged"
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    missed = None
    if cosupport is not None:
        missed = coefficient_image((true_support & cosupport.mask()).astype(np.uint8), n)
    rel = float(np.linalg.norm(x_hat - x) / np.linalg.norm(x))
    return PhantomRun(
        n, lines, M.m, algorithm, snr_db(x, x_hat), rel, status,
        x_hat.reshape(n, n), missed, iterations, flags,
    )


@dataclass
class SnrRecord:
    n: int
    lines: int
    m: int
    algorithm: str
    snr_db: float
    status: str


def run_snr_vs_lines(n: int, line_counts, algorithms=("gap", "l1", "backprojection"), cfg: GapConfig | None = None, **kw) -> list[SnrRecord]:
    """Recovery SNR of each algorithm as the number of radial lines varies.

    A failing run is recorded with status ``"error: ..."`` and NaN SNR; the
    sweep continues.
    """
    out = []
    for L in line_counts:
        for alg in algorithms:
            try:
                run = run_phantom_recovery(n, int(L), alg, cfg, **kw)
                out.append(SnrRecord(n, int(L), run.m, alg, run.snr_db, run.status))
            except (CosparseError, np.linalg.LinAlgError, ValueError) as exc:
                out.append(SnrRecord(n, int(L), radial_fourier_system(n, int(L)).m, alg, float("nan"), f"error: {exc}"))
    return out


def phantom_statistics(img: np.ndarray) -> dict:
    """Counts describing how cosparse the phantom is under finite differences."""
    from scipy import ndimage

    from .model import subspace_dim_dif

    n = img.shape[0]
    omega = finite_difference_2d(n)
    x = img.ravel()
    cos = cosupport_of(omega, x)
    regions = 0
    sizes = []
    for val in np.unique(img):
        lab, k = ndimage.label(img == val)
        regions += k
        sizes.extend(np.bincount(lab.ravel())[1:].tolist())
    sizes = np.array(sizes)
    return {
        "nonzero_differences": omega.p - len(cos),
        "subspace_dim": subspace_dim_dif(omega.graph, cos),
        "constant_regions": regions,
        "regions_of_two_or_more_pixels": int((sizes >= 2).sum()),
    }
