"""Greedy joint-support recovery: OMP, SOMP and weighted SOMP (SOMP-NS).

At iteration ``t`` SOMP-NS picks the atom maximising
``sum_k q_k |<r_k, phi_j>|`` and then projects every measurement vector on
the orthogonal complement of the selected atoms. Already selected atoms are
never rescanned, ties go to the smallest index, and the run length is a
fixed iteration count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ._backend import kernels
from ._common import (
    RankDeficiencyError,
    WeightVector,
    as_support,
    as_weights,
    qr_full_rank,
    rank_tol_for,
)
from .dictionary import Dictionary

__all__ = [
    "RecoveryTrace",
    "WeightVector",
    "somp_ns",
    "somp",
    "omp",
    "somp_ns_prescaled",
    "select_atom",
    "project_residual",
]


@dataclass
class RecoveryTrace:
    """Per-iteration record of a greedy run.

    ``selected`` are 0-based atom indices in pick order.
    ``residual_norms[t]`` is the Frobenius norm of the residual after the
    ``t``-th projection and ``residual_column_norms[t, k]`` its per-column
    breakdown. ``coefficients`` holds the least-squares fit
    ``pinv(Phi_S) Y`` with rows in ``selected`` order.
    """

    selected: np.ndarray
    metric_values: np.ndarray
    residual_norms: np.ndarray
    residual_column_norms: np.ndarray
    coefficients: np.ndarray
    residual: np.ndarray

    @property
    def support(self) -> frozenset:
        return frozenset(int(j) for j in self.selected)

    def __len__(self):
        return len(self.selected)


def _as_measurements(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != m:
        raise ValueError(f"measurements must have {m} rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurements must be finite")
    return y


def _run(d: Dictionary, y, q: np.ndarray, iterations: int, precision: int) -> RecoveryTrace:
    if int(iterations) != iterations or not 1 <= iterations <= min(d.m, d.n):
        raise ValueError(f"iterations must be an integer in [1, {min(d.m, d.n)}]")
    dtype = np.float32 if precision == 32 else np.float64
    if precision not in (32, 64):
        raise ValueError("precision must be 32 or 64")
    phi = d.as_dtype(dtype)
    yy = np.asarray(y, dtype=dtype)
    status, sel, metric, col_norms, basis, tri, residual = kernels.somp_ns_kernel(
        phi, yy, q.astype(dtype), int(iterations), rank_tol_for(dtype)
    )
    coef = solve_triangular(tri, basis.T @ yy) if len(sel) else np.zeros((0, yy.shape[1]))
    trace = RecoveryTrace(
        selected=np.asarray(sel, dtype=np.int64),
        metric_values=np.asarray(metric, dtype=np.float64),
        residual_norms=np.sqrt(np.sum(np.square(col_norms), axis=1)),
        residual_column_norms=np.asarray(col_norms, dtype=np.float64),
        coefficients=np.asarray(coef, dtype=np.float64),
        residual=np.asarray(residual, dtype=np.float64),
    )
    if status != kernels.OK:
        raise RankDeficiencyError(
            list(sel),
            f"atom set {list(map(int, sel))} plus the next pick is rank deficient "
            f"after {len(sel)} iterations",
            partial=trace,
        )
    return trace


def somp_ns(d: Dictionary, y, weights, iterations: int, precision: int = 64) -> RecoveryTrace:
    """Weighted SOMP, first form: weights enter the selection metric.

    Parameters
    ----------
    d : Dictionary
    y : array_like, shape (m, K)
        Measurement vectors as columns.
    weights : WeightVector or array_like, shape (K,)
        Nonnegative weights, not all zero.
    iterations : int
        Number of atoms to select.
    precision : {64, 32}
        Floating point width of the run.

    Raises
    ------
    RankDeficiencyError
        If a selected atom set loses full column rank; ``err.partial``
        carries the trace up to that point.
    """
    y = _as_measurements(y, d.m)
    q = as_weights(weights, y.shape[1])
    return _run(d, y, q, iterations, precision)


def somp(d: Dictionary, y, iterations: int, precision: int = 64) -> RecoveryTrace:
    """Unweighted SOMP (all weights one)."""
    y = _as_measurements(y, d.m)
    return _run(d, y, np.ones(y.shape[1]), iterations, precision)


def omp(d: Dictionary, y, iterations: int, precision: int = 64) -> RecoveryTrace:
    """Classical OMP on a single measurement vector."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 and not (y.ndim == 2 and y.shape[1] == 1):
        raise ValueError("omp takes a single measurement vector")
    return somp(d, y.reshape(-1, 1), iterations, precision)


def somp_ns_prescaled(d: Dictionary, y, weights, iterations: int,
                      precision: int = 64) -> RecoveryTrace:
    """Weighted SOMP, second form: scale column ``k`` of ``y`` by ``q_k`` and
    run plain SOMP. Picks the same atoms as :func:`somp_ns`; residuals and
    coefficients come out column-scaled.
    """
    y = _as_measurements(y, d.m)
    q = as_weights(weights, y.shape[1])
    return somp(d, y * q, iterations, precision)


def select_atom(d: Dictionary, residual, weights, exclude=()) -> tuple[int, float]:
    """Index and value of the largest ``sum_k q_k |<r_k, phi_j>|``.

    Ties resolve to the smallest index. Atoms in ``exclude`` are skipped.
    """
    r = _as_measurements(residual, d.m)
    q = as_weights(weights, r.shape[1])
    scores = kernels.weighted_correlation(d.entries, r, q)
    ex = as_support(exclude, d.n)
    if ex.size:
        if ex.size == d.n:
            raise ValueError("every atom is excluded")
        scores[ex] = -np.inf
    j = int(np.argmax(scores))
    return j, float(scores[j])


def project_residual(d: Dictionary, support, y) -> np.ndarray:
    """``Y - Phi_S pinv(Phi_S) Y`` computed from a QR factorisation."""
    s = as_support(support, d.n)
    yy = _as_measurements(y, d.m)
    if s.size == 0:
        out = yy.copy()
    else:
        q, _ = qr_full_rank(d.entries[:, s], s)
        out = yy - q @ (q.T @ yy)
    return out if np.ndim(y) == 2 else out[:, 0]
