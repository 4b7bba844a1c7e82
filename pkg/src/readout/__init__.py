from .jumps import (
    CountBatch,
    CountTrace,
    HyperfineState,
    ReadoutModel,
    Trajectory,
    effective_rate,
    read_trace,
    reference_model,
    sample_counts,
    simulate_counts_batch,
    simulate_trajectory,
    write_trace,
)
from .likelihood import ClassifierResult, choose_bin_count, ml_classify, mlm_errors
from .threshold import (
    DEFAULT_POWER_FACTORS,
    DecisionMap,
    ErrorReport,
    JointPmf,
    best_power_factor,
    count_caps,
    count_pmf,
    decision_map,
    fast_readout_scenario,
    optimize_detection_time,
    tm_errors,
    tm_monte_carlo,
)

__all__ = [
    "DEFAULT_POWER_FACTORS",
    "ClassifierResult",
    "CountBatch",
    "CountTrace",
    "DecisionMap",
    "ErrorReport",
    "HyperfineState",
    "JointPmf",
    "ReadoutModel",
    "Trajectory",
    "best_power_factor",
    "choose_bin_count",
    "count_caps",
    "count_pmf",
    "decision_map",
    "effective_rate",
    "fast_readout_scenario",
    "ml_classify",
    "mlm_errors",
    "optimize_detection_time",
    "read_trace",
    "reference_model",
    "sample_counts",
    "simulate_counts_batch",
    "simulate_trajectory",
    "tm_errors",
    "tm_monte_carlo",
    "write_trace",
]
