from .ekf import EkfTracker, bearing_model, ekf_step, initialize_belief
from .factors import (
    Factor,
    GaussianBelief,
    bearing_kernel,
    cauchy_loss,
    cauchy_weight,
    evaluate_factor,
    range_kernel,
)
from .window import FactorGraphWindow, optimize, push_timestep

__all__ = [
    "EkfTracker",
    "Factor",
    "FactorGraphWindow",
    "GaussianBelief",
    "bearing_kernel",
    "bearing_model",
    "cauchy_loss",
    "cauchy_weight",
    "ekf_step",
    "evaluate_factor",
    "initialize_belief",
    "optimize",
    "push_timestep",
    "range_kernel",
]
