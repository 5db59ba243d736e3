"""Cosparse analysis modelling and recovery.

Signals are modelled as having many zero analysis coefficients ``Omega x``.
The package builds analysis operators and measurement systems, generates
cosparse signals, computes the subspace dimensions that govern uniqueness,
recovers signals with greedy analysis pursuit or l1 minimization, evaluates
recovery certificates, and runs phase-diagram and phantom experiments.
"""

__version__ = "0.1.0"

from .exceptions import (
    ConvergenceWarning,
    CosparseError,
    DimensionError,
    EnumerationTooLargeError,
    NonFiniteError,
    RankDeficientError,
    ZeroSignalError,
)
from .guarantees import (
    Certificate,
    erc_analysis,
    gap_one_step_check,
    gap_relation_residual,
    heuristic_row_l2,
    nsc_sampled,
)
from .harness import (
    PhantomRun,
    PhaseGrid,
    run_phantom_recovery,
    run_phase_diagram,
    run_phase_diagrams,
    run_snr_vs_lines,
    shepp_logan_phantom,
)
from .model import (
    Cosupport,
    CosparseSignal,
    UniquenessVerdict,
    cosparsity,
    cosupport_of,
    generate_cosparse_signal,
    kappa_brute_force,
    kappa_dif_bounds,
    kappa_general_position,
    kappa_tilde_brute_force,
    subspace_count_log2,
    subspace_dim_dif,
    uniqueness_verdict,
)
from .numerics import (
    LinearMap,
    cg_least_squares,
    least_squares_min_norm,
    null_space_basis,
    op_norm_1_1,
    op_norm_inf_inf,
    pseudo_inverse,
)
from .operators import (
    AnalysisOperator,
    MeasurementSystem,
    PixelGraph,
    finite_difference_2d,
    gaussian_measurement,
    radial_fourier_system,
    random_tight_frame_operator,
    restrict_rows,
)
from .solvers import (
    GapConfig,
    RecoveryResult,
    analysis_l1_solve,
    constrained_analysis_ls,
    debias,
    gap_solve,
    regularized_analysis_ls,
)
