"""Discrete-event simulation of the pre-limit two-class system."""

from .config import SimConfig, static_config, threshold_config
from .engine import (
    BusyStats,
    ConvergenceRow,
    Estimate,
    SimReport,
    busy_period_bound_check,
    convergence_sweep,
    estimate_transition_probs,
    limit_down_probability,
    limit_values,
    mg_inf_busy_period_bound,
    simulate,
)
