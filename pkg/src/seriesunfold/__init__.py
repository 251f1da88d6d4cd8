"""Series-expansion deconvolution and unfolding of binned densities."""

from .engine import (
    IterationState,
    Smoother,
    StoppingPolicy,
    UnfoldReport,
    cauchy_index,
    gaussian_error_step,
    init_state,
    iterate_step,
    noise_content,
    run_unfold,
    verify_condition,
)
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DimensionMismatchError,
    DivergenceError,
    DivisionBlowupError,
    FileFormatError,
    InvalidCpdfError,
    KindMismatchError,
    KinematicsError,
    UndefinedPseudorapidityError,
    UnfoldError,
)
from .folding import (
    FoldingMatrix,
    GaussianCpdf,
    KernelPdf,
    adjoint_smoother,
    apply,
    compose,
    load_matrix,
    matrix_from_cpdf,
    matrix_from_kernel,
    mc_estimate_matrix,
    parity_reflect,
    save_matrix,
)
from .histogram import (
    Axis,
    GridHistogram,
    from_samples,
    load_histogram,
    normalize,
    poisson_covariance,
)
from .pi0 import (
    DecayConfig,
    FourMomentum,
    MomentumBinning,
    ResolutionModel,
    build_gamma_response,
    decay_to_gammas,
    run_pi0_experiment,
    sample_pi0,
    to_eta_pt,
)
from .spectral import (
    Floor,
    KernelDiagnosis,
    LowPass,
    Spectrum,
    dft,
    diagnose_double_kernel,
    diagnose_kernel,
    double_kernel,
    idft,
    naive_deconvolve,
)

__version__ = "0.1.0"
