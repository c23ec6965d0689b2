"""Small input-validation helpers shared by the public functions."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class SectorError(ValidationError):
    """Raised when a tensor or operator leaves its particle-number sector."""


def check_order(K: int, minimum: int = 1) -> int:
    if not isinstance(K, (int, np.integer)) or K < minimum:
        raise ValidationError(f"order K must be an integer >= {minimum}, got {K!r}")
    return int(K)


def check_orbital(i: int, K: int) -> int:
    if not 1 <= i <= K:
        raise ValidationError(f"orbital index {i} out of range 1..{K}")
    return int(i)


def check_particle_count(N: int, K: int) -> int:
    if not 0 <= N <= K:
        raise ValidationError(f"particle number N={N} must lie in 0..{K}")
    return int(N)


def check_even_order(K: int) -> int:
    check_order(K, 2)
    if K % 2:
        raise ValidationError(f"odd K={K} is unsupported; the operator constructions assume even K")
    return K


def as_symmetric(T, tol: float = 1e-13) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValidationError(f"one-body coefficients must be square, got shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValidationError("one-body coefficients contain non-finite entries")
    scale = max(1.0, float(np.abs(T).max(initial=0.0)))
    if np.abs(T - T.T).max(initial=0.0) > tol * scale:
        raise ValidationError("one-body coefficient matrix is not symmetric")
    return T


def as_two_body(V, K: int) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != (K, K, K, K):
        raise ValidationError(f"two-body coefficients must have shape {(K,) * 4}, got {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValidationError("two-body coefficients contain non-finite entries")
    return V
