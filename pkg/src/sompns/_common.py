"""Shared validation helpers, norms and exception types."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

#: |R_ii| <= RANK_TOL * max |R_ii| marks a column set as rank deficient.
RANK_TOL = 1e-8
#: float32 rounding sits near 1e-7, so the float64 threshold cannot fire there.
RANK_TOL_SINGLE = 1e-5


class RankDeficiencyError(ValueError):
    """Raised when a selected column set does not have full column rank."""

    def __init__(self, support, message=None, partial=None):
        self.support = tuple(int(i) for i in support)
        self.partial = partial
        super().__init__(message or f"atoms {list(self.support)} are linearly dependent")


class BudgetExceededError(ValueError):
    """Raised when an exhaustive enumeration would exceed its budget."""


class Bound(NamedTuple):
    """A bound value together with a vacuity flag.

    ``vacuous`` is True when the hypothesis behind the bound fails, in which
    case ``value`` is still the raw number the formula produces.
    """

    value: float
    vacuous: bool


def rank_tol_for(dtype) -> float:
    return RANK_TOL_SINGLE if np.dtype(dtype) == np.float32 else RANK_TOL


def as_support(indices, n: int) -> np.ndarray:
    """Validate an atom index set (0-based) against ``n`` atoms."""
    s = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices)
    if s.size == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.issubdtype(s.dtype, np.integer):
        if not np.all(np.equal(np.mod(s, 1), 0)):
            raise ValueError("support indices must be integers")
    s = s.astype(np.int64).ravel()
    if s.min() < 0 or s.max() >= n:
        raise ValueError(f"support indices must lie in [0, {n - 1}]")
    if np.unique(s).size != s.size:
        raise ValueError("support indices must be unique")
    return s


def complement(support: np.ndarray, n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[support] = False
    return np.flatnonzero(mask)


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative per-measurement-vector weights ``q``."""

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64).ravel()
        if q.size == 0 or not np.all(np.isfinite(q)):
            raise ValueError("weights must be a nonempty finite vector")
        if np.any(q < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(q > 0):
            raise ValueError("at least one weight must be positive")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_angle(cls, theta_deg: float, scale: float = 1.0) -> "WeightVector":
        """K=2 weights ``scale * (cos theta, sin theta)``."""
        t = math.radians(theta_deg)
        return cls(scale * np.array([math.cos(t), math.sin(t)]))

    @property
    def K(self) -> int:
        return self.q.size

    @property
    def theta_deg(self) -> float:
        if self.K != 2:
            raise ValueError("polar angle is only defined for K = 2")
        return math.degrees(math.atan2(self.q[1], self.q[0]))

    def __array__(self, dtype=None, copy=None):
        return self.q if dtype is None else self.q.astype(dtype)

    def __len__(self):
        return self.K


def as_weights(weights, K: int | None = None) -> np.ndarray:
    q = weights.q if isinstance(weights, WeightVector) else WeightVector(weights).q
    if K is not None and q.size != K:
        raise ValueError(f"expected {K} weights, got {q.size}")
    return q


def norm_inf(a) -> float:
    """Induced infinity norm: largest absolute row sum."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=1).max())


def norm_1(a) -> float:
    """Induced 1-norm: largest absolute column sum."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=0).max())


def qr_full_rank(a: np.ndarray, support: Sequence[int] = ()):
    """Thin QR of ``a`` after checking full column rank."""
    if a.shape[1] > a.shape[0]:
        raise RankDeficiencyError(support, "more atoms than rows: columns are dependent")
    q, r = np.linalg.qr(a)
    d = np.abs(np.diag(r))
    if d.size and not d.min() > RANK_TOL * d.max():
        raise RankDeficiencyError(support)
    return q, r
