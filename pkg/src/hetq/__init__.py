"""Limit analysis, Pareto frontier and simulation of an eager/tolerant two-class queue."""

from .analytics import (
    embedded_from_continuous,
    embedded_prelimit_distribution,
    expected_number,
    limit_blocking,
    limit_transition_probs,
    policy_performance,
    service_profile,
    stability_check,
    stationary_distribution,
)
from .model import EventuallyConstantSeq, PolicySpec, ServiceRateProfile, SystemParams, validate_params
from .pareto import (
    FrontierPoint,
    LoadBounds,
    ThresholdPolicy,
    brute_force_optimum,
    frontier_sweep,
    load_bounds,
    optimal_threshold,
    threshold_policy_performance,
)
from .subpolicy import SubPolicy, blocking_bounds, erlang_b, static_blocking, tune_admission

__version__ = "0.1.0"
