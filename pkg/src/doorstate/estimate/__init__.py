"""Estimators for door configurations and initial temperatures."""
from .baseline import BaselineState, baseline_estimate, bernoulli_jacobian, bernoulli_weights, binary_configurations
from .gradient_method import (
    ArmijoStep,
    DescentDirection,
    EstimationState,
    armijo,
    check_box,
    descent_direction,
    estimate,
)
from .metrics import ErrorMetrics, binarize, error_metrics

__all__ = [
    "ArmijoStep",
    "BaselineState",
    "DescentDirection",
    "ErrorMetrics",
    "EstimationState",
    "armijo",
    "baseline_estimate",
    "bernoulli_jacobian",
    "bernoulli_weights",
    "binarize",
    "binary_configurations",
    "check_box",
    "descent_direction",
    "error_metrics",
    "estimate",
]
