"""Small shared helpers: hashing, time grids, file digests."""
from __future__ import annotations
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .exceptions import PreconditionError


def time_grid(horizon: float, dt: float) -> NDArray[np.float64]:
    """Uniform time levels 0 = t_0 < ... < t_N = horizon.

    Raises:
        PreconditionError: If dt is not positive or does not divide the horizon
    """
    if dt <= 0 or horizon <= 0:
        raise PreconditionError(f"Horizon and dt must be positive (T={horizon}, dt={dt})")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * horizon:
        raise PreconditionError(f"dt={dt} does not divide the horizon T={horizon}")
    return np.arange(n_steps + 1, dtype=np.float64) * dt


def trapezoid_weights(times: NDArray[np.float64]) -> NDArray[np.float64]:
    """Trapezoidal-rule weights on a (possibly nonuniform) time grid."""
    weights = np.zeros_like(times)
    if times.size < 2:
        return weights
    steps = np.diff(times)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    return weights


def sha256_json(payload: Any) -> str:
    """Stable SHA-256 of a JSON-serializable payload (sorted keys)."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def array_digest(*arrays: NDArray[Any]) -> str:
    """SHA-256 over the raw bytes of several arrays, in order."""
    digest = hashlib.sha256()
    for array in arrays:
        contiguous = np.ascontiguousarray(array)
        digest.update(str(contiguous.dtype).encode())
        digest.update(str(contiguous.shape).encode())
        digest.update(contiguous.tobytes())
    return digest.hexdigest()
