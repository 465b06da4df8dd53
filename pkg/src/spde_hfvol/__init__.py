"""High-frequency inference for the damped stochastic heat equation."""

from .constants import (
    DEFAULT_TRUNCATION,
    SeriesTruncation,
    VarianceConstants,
    big_R,
    c0_constants,
    c0_tilde_constants,
    constants_summary,
    gamma_weight,
    gamma_weight_n,
    gamma_weights,
    gamma_weights_n,
    mu_multipower,
    rho_multipower,
    rho_sum,
    tau_sq_exact,
    tau_sq_leading,
)
from .errors import *  # noqa: F401,F403
from .estimators import (
    AlphaEstimate,
    VolatilityEstimate,
    estimate_alpha_cof,
    estimate_alpha_corr,
    estimate_vol_known_alpha,
    estimate_vol_unknown_alpha,
)
from .io import IngestReport, read_path_csv, write_path_csv
from .model import (
    EstimateReport,
    FunctionalKind,
    ModelParams,
    MultipowerSpec,
    NoiseKind,
    ObservedPath,
    SamplingScheme,
)
from .montecarlo import ExperimentConfig, McReport, coverage_ci, ks_against_standard_normal, run_experiment
from .simulate import (
    BoundedOfYVol,
    ConstantVol,
    DeterministicTimeVol,
    FdGridConfig,
    OUFieldVol,
    SeedSpec,
    SinusoidVol,
    balanced_grid,
    derive_stream,
    simulate_exact_stationary,
    simulate_fd,
    simulate_fd_record,
)
from .variation import VariationResult, increments, variation, variation_ratio_cof
