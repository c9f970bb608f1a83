"""Analytic recurrent kernels (NTK and NNGP) for variable-length time series."""
from .params import (
    Custom,
    ERF,
    RELU,
    RntkParams,
    activation_from_name,
    as_sequence,
    as_sequences,
    erf_reference_params,
    relu_reference_params,
)
from .core import (
    BivariateCov,
    KernelOutput,
    KernelTable,
    backward_table,
    cross_gram,
    forward_table,
    gram,
    output_from_tables,
    rntk_pair,
    vphi,
    vphi_prime,
)
from .learners import (
    GramMatrix,
    MetricsReport,
    RidgeModel,
    fit_ridge,
    last_value_predictions,
    one_hot,
    decode_one_hot,
    predict,
    snr_db,
    summarize_metrics,
)
from .baselines import (
    BaselineParams,
    MlpNtk,
    Polynomial,
    Rbf,
    baseline_cross_gram,
    baseline_gram,
    baseline_pair,
)
from .oracle import (
    ConvergenceReport,
    DriftReport,
    EmpiricalNtkResult,
    FiniteRnn,
    convergence_experiment,
    drift_experiment,
    empirical_gram,
    empirical_ntk,
    forward,
    parameter_gradients,
)
from .sensitivity import SensitivityProfile, sensitivity_profile
from .datasets import (
    WindowedRegressionTask,
    make_csv_task,
    make_sinusoid_task,
    normalize_sequences,
    read_series_csv,
    replay_task,
)
from .rng import derive_seed, substream

__version__ = "0.1.0"
