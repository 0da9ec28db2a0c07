"""Likelihood-free parameter estimation for Levy processes.

Simulators and characteristic functions for four Levy models, classical
characteristic-function estimators (LSQ and maximum empirical
likelihood), an amortized permutation-invariant neural Bayes estimator
with bootstrap and posterior-quantile uncertainty quantification, and a
benchmark harness plus a high-frequency data pipeline.
"""

from .bench import (
    BenchConfig,
    BenchmarkReport,
    Method,
    MetricRow,
    SweepAxis,
    l2f_distance,
    metrics,
    run_benchmark,
    simulate_test_sets,
    sweep,
)
from .data import (
    CsvFormat,
    PriceSeries,
    RescaleMode,
    ReturnWindow,
    load_prices,
    log_returns,
    make_windows,
    read_increments,
    rescaled_estimate,
    write_increments,
)
from .ecf import (
    EcfTable,
    FitResult,
    FrequencyGrid,
    default_grid,
    ecf,
    el_weights,
    lsq_fit,
    lsq_objective,
    mele_fit,
)
from .errors import (
    CorruptArtifact,
    DualInfeasible,
    EmptyInput,
    EmptyWindow,
    FormatVersionMismatch,
    GammaShapeUnderflow,
    InputLengthMismatch,
    LevyNbeError,
    ModelMismatch,
    NonMonotoneTimestamps,
    NonPositivePrice,
    OutOfBox,
    ParseError,
    ZeroScale,
)
from .models import (
    IncrementSeries,
    ModelKind,
    ModelSpec,
    ParamVector,
    PriorBox,
    SeedSpec,
    char_fn,
    default_prior,
    log_char_fn,
    sample_prior,
    simulate_increments,
)
from .nbe import (
    DeepSetsEstimator,
    LossKind,
    TrainConfig,
    TrainReport,
    build_estimator,
    load,
    loss_value,
    save,
    train,
)
from .nets import Activation, Aggregation, DenseNet
from .uq import (
    IntervalMethod,
    IntervalSet,
    QuantileBundle,
    bootstrap_interval,
    credible_interval,
    intervals_disjoint,
    train_quantile_bundle,
)

__version__ = "0.1.0"
