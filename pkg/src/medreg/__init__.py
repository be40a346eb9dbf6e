"""Median bias, confidence-interval/estimator duality and coverage experiments."""

from .constructions import (
    BatchPlan,
    BoostedProcedure,
    CIEstimator,
    ExtractedEstimator,
    HulC,
    MonotoneFamily,
    UnionProcedure,
    batch_count,
    batch_count_bounds,
    boost_level,
    ci_to_estimator,
    extract_median_regular_estimator,
    hulc_interval,
    make_batch_plan,
    monotonize_family,
    union_batch_interval,
)
from .core import (
    DomainError,
    InsufficientDataError,
    Interval,
    IntervalProcedure,
    Level,
    MedianBiasEstimate,
    RandomizedEstimator,
    SlackSequence,
    estimate_median_bias_mc,
    exact_median_bias,
    median_bias_from_probs,
    worst_case_median_bias,
)
from .harness import (
    ExperimentConfig,
    Report,
    run,
    run_coverage,
    run_duality_roundtrip,
    run_medbias,
    run_uniformity_sweep,
)
from .registry import ConfigError, build, build_estimator, build_model, build_procedure

__version__ = "0.1.0"
