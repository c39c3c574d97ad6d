"""Dense vector kernels: finiteness checks, p-norms, weighted p-norms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


def as_vector(v, name="vector", dim=None) -> np.ndarray:
    """Return ``v`` as a 1-D float array, rejecting NaN/Inf."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidInputError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def as_matrix(M, name="matrix") -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _check_power(p) -> float:
    p = float(p)
    if not np.isfinite(p):
        raise InvalidInputError("p = inf is not supported")
    if p < 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    return p


def pnorm(v, p=2.0) -> float:
    """(sum |v_i|^p)^(1/p) for finite p >= 1."""
    v = as_vector(v)
    p = _check_power(p)
    if p == 2.0:
        return float(np.linalg.norm(v))
    if p == 1.0:
        return float(np.sum(np.abs(v)))
    # scale first so |v_i|^p cannot overflow
    scale = np.max(np.abs(v)) if v.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(scale * np.sum((np.abs(v) / scale) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class WeightedPNorm:
    """Weights alpha_1..alpha_m (normalized to sum 1) and power p >= 1."""

    weights: tuple
    power: float = 2.0

    def __post_init__(self):
        w = as_vector(self.weights, "weights")
        if w.size == 0:
            raise InvalidInputError("weights must be nonempty")
        if np.any(w <= 0):
            raise InvalidInputError("weights must be strictly positive")
        w = w / w.sum()
        object.__setattr__(self, "weights", tuple(float(a) for a in w))
        object.__setattr__(self, "power", _check_power(self.power))

    @classmethod
    def uniform(cls, m, power=2.0):
        return cls(tuple([1.0] * m), power)

    @property
    def m(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights)


def weighted_pnorm(u: Sequence, w: WeightedPNorm) -> float:
    """(sum_i alpha_i ||u_i||^p)^(1/p), with ||.|| Euclidean."""
    vecs = [as_vector(ui, f"u[{i}]") for i, ui in enumerate(u)]
    if len(vecs) != w.m:
        raise InvalidInputError(f"got {len(vecs)} vectors for {w.m} weights")
    dims = {v.shape[0] for v in vecs}
    if len(dims) > 1:
        raise InvalidInputError(f"vectors have mixed dimensions {sorted(dims)}")
    norms = np.array([np.linalg.norm(v) for v in vecs])
    return pnorm(np.asarray(w.weights) ** (1.0 / w.power) * norms, w.power)


def positive_part(v) -> np.ndarray:
    """Coordinate-wise max(v_i, 0)."""
    return np.maximum(as_vector(v), 0.0)
