"""Estimation error metrics."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from ..exceptions import DimensionMismatchError
from ..fem.spaces import Field

__all__ = ["ErrorMetrics", "error_metrics", "binarize"]

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, slots=True)
class ErrorMetrics:
    """Door and initial-temperature errors of one estimate.

    ``e_pi0`` is relative to the true field's L2 norm unless that norm is
    zero, in which case it is the absolute error norm and ``relative`` is
    False.
    """

    e_theta: float
    e_pi0: float
    relative: bool
    per_door: tuple[float, ...]

    def as_dict(self) -> dict[str, object]:
        return {
            "e_theta": self.e_theta,
            "e_pi0": self.e_pi0,
            "e_pi0_relative": self.relative,
            "per_door": list(self.per_door),
        }


def error_metrics(
    truth_theta: Sequence[float] | FloatArray,
    est_theta: Sequence[float] | FloatArray,
    truth_pi0: Field,
    est_pi0: Field,
) -> ErrorMetrics:
    """Mean absolute door error and relative L2 error of pi0.

    Raises:
        DimensionMismatchError: If the door vectors or the fields differ in size
    """
    truth = np.asarray(truth_theta, dtype=np.float64)
    est = np.asarray(est_theta, dtype=np.float64)
    if truth.shape != est.shape:
        raise DimensionMismatchError(f"theta shapes differ: {truth.shape} vs {est.shape}")
    if truth_pi0.values.shape != est_pi0.values.shape:
        raise DimensionMismatchError(f"pi0 sizes differ: {truth_pi0.values.size} vs {est_pi0.values.size}")
    per_door = np.abs(truth - est)
    e_theta = float(per_door.mean()) if per_door.size else 0.0
    error = Field(truth_pi0.space, est_pi0.values - truth_pi0.values).l2_norm()
    norm = truth_pi0.l2_norm()
    if norm > 0:
        return ErrorMetrics(e_theta, error / norm, True, tuple(float(d) for d in per_door))
    return ErrorMetrics(e_theta, error, False, tuple(float(d) for d in per_door))


def binarize(theta: Sequence[float] | FloatArray, threshold: float = 0.5) -> FloatArray:
    """Open (1) where theta >= threshold, closed (0) elsewhere."""
    return (np.asarray(theta, dtype=np.float64) >= threshold).astype(np.float64)
