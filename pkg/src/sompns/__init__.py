"""Weighted simultaneous orthogonal matching pursuit (SOMP-NS).

Joint sparse support recovery from several measurement vectors, the
dictionary conditioning quantities that govern it, probability lower
bounds under Gaussian noise, and a seeded Monte Carlo harness.
"""

from ._backend import NAME as BACKEND
from ._common import (
    Bound,
    BudgetExceededError,
    RankDeficiencyError,
    WeightVector,
)
from .bounds import (
    BoundReport,
    ConjecturedBoundParams,
    NoiseSpec,
    b2_bound,
    bias_b,
    combinatorial_c,
    conjectured_bound,
    epsilon_threshold,
    kappa,
    noisy_erc_check,
    optimal_weights,
    signal_metric_lower_bound,
    theorem5_bound,
)
from .dictionary import (
    DictMetricsReport,
    Dictionary,
    babel,
    coherence,
    dict_metrics,
    erc_constant,
    exact_ric,
    generate_gaussian_dictionary,
    generate_rademacher_dictionary,
    greedy_selection_ratio,
    ric_coherence_bound,
    spark_lower_bound,
)
from .experiments import (
    FORMAT_VERSION,
    ExperimentConfig,
    calibrate_mu_x,
    estimate_snr_in,
    fit_conjecture_params,
    generate_noise,
    generate_sparse_signal,
    run_angle_sweep,
    run_k_sweep,
    wilson_interval,
)
from .recovery import (
    RecoveryTrace,
    omp,
    project_residual,
    select_atom,
    somp,
    somp_ns,
    somp_ns_prescaled,
)

__version__ = "0.1.0"
