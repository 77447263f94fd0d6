"""Monte Carlo checks of the Gaussian concentration statements behind the
recovery bounds.

Each check draws in fixed-size blocks, each block seeded by
``(seed, check tag, block index)``, so a result depends only on the seed
and the draw count. Every check reports the empirical quantity, the
theoretical value it is compared with, the standard error and the verdict
at the requested slack (in standard errors).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ._common import as_weights
from .bounds import NoiseSpec, bias_b, kappa

__all__ = [
    "CheckResult",
    "tail_frequency_check",
    "union_tail_check",
    "projected_noise_variance_check",
    "half_normal_dominance_check",
]

BLOCK = 10_000
_TAIL, _UNION, _PROJ, _HALF = 11, 12, 13, 14


class CheckResult(NamedTuple):
    empirical: float
    theoretical: float
    stderr: float
    passed: bool


def _blocks(draws: int, seed: int, tag: int):
    if int(draws) != draws or draws < 1:
        raise ValueError("draws must be a positive integer")
    for i, start in enumerate(range(0, int(draws), BLOCK)):
        rng = np.random.default_rng([int(seed), tag, i])
        yield rng, min(BLOCK, int(draws) - start)


def _sigma(noise) -> np.ndarray:
    return noise.sigma if isinstance(noise, NoiseSpec) else NoiseSpec(noise).sigma


def _proportion_se(p: float, draws: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / draws)


def _exceed_frequency(atoms: np.ndarray, q, sigma, eps, draws, seed, tag):
    """Fraction of draws where ``max_j sum_k q_k |<phi_j, e_k>|`` reaches ``b + eps``."""
    m = atoms.shape[0]
    threshold = bias_b(q, sigma) + eps
    hits = 0
    for rng, size in _blocks(draws, seed, tag):
        e = rng.standard_normal((size, m, sigma.size)) * sigma
        corr = np.abs(np.einsum("mj,dmk->djk", atoms, e)) @ q
        hits += int(np.count_nonzero(corr.max(axis=1) >= threshold))
    return hits / draws


def tail_frequency_check(weights, noise, eps: float, *, m: int = 8, draws: int = 100_000,
                         seed: int = 0, slack: float = 3.0) -> CheckResult:
    """Single-atom tail: ``P(sum_k q_k |<phi, e_k>| >= b + eps) <= exp(-kappa eps^2)``.

    The atom is a fixed random unit vector in ``R^m``; noise columns are
    drawn in full dimension.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    sigma = _sigma(noise)
    q = as_weights(weights, sigma.size)
    phi = np.random.default_rng([int(seed), _TAIL]).standard_normal((m, 1))
    phi /= np.linalg.norm(phi)
    freq = _exceed_frequency(phi, q, sigma, eps, draws, seed, _TAIL)
    bound = math.exp(-kappa(q, sigma) * eps * eps)
    se = _proportion_se(freq, draws)
    return CheckResult(freq, bound, se, freq <= bound + slack * se)


def union_tail_check(atoms, weights, noise, eps: float, *, draws: int = 100_000,
                     seed: int = 0, slack: float = 3.0) -> CheckResult:
    """``n`` atoms at once: ``P(||Phi^T E Q||_inf >= b + eps) <= n exp(-kappa eps^2)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = np.asarray(getattr(atoms, "entries", atoms), dtype=np.float64)
    sigma = _sigma(noise)
    q = as_weights(weights, sigma.size)
    freq = _exceed_frequency(a, q, sigma, eps, draws, seed, _UNION)
    bound = a.shape[1] * math.exp(-kappa(q, sigma) * eps * eps)
    se = _proportion_se(freq, draws)
    return CheckResult(freq, bound, se, freq <= bound + slack * se)


def projected_noise_variance_check(m: int, rank: int, sigma: float, *, draws: int = 100_000,
                                   seed: int = 0, slack: float = 5.0) -> CheckResult:
    """Variance of ``<phi, (I - P) e>`` against ``sigma^2`` for a fixed random
    orthogonal projector ``P`` of the given rank and a random unit atom.

    The standard error is relative: ``sqrt(2 / (draws - 1))`` for a Gaussian
    sample variance, so the check is ``var <= sigma^2 (1 + slack * se)``.
    """
    if not 0 <= rank < m:
        raise ValueError("rank must lie in [0, m)")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng([int(seed), _PROJ])
    basis = np.linalg.qr(rng.standard_normal((m, max(rank, 1))))[0][:, :rank]
    phi = rng.standard_normal(m)
    phi /= np.linalg.norm(phi)
    # <phi, (I - P) e> = <(I - P) phi, e>
    phi_t = phi - basis @ (basis.T @ phi)
    vals = []
    for r, size in _blocks(draws, seed, _PROJ):
        vals.append(r.standard_normal((size, m)) @ phi_t * sigma)
    var = float(np.var(np.concatenate(vals), ddof=1))
    se = math.sqrt(2.0 / (draws - 1))
    return CheckResult(var, sigma * sigma, se, var <= sigma * sigma * (1.0 + slack * se))


def half_normal_dominance_check(sigma_x, sigma_y1: float, sigma_y2: float, grid=None, *,
                                draws: int = 100_000, seed: int = 0,
                                slack: float = 3.0) -> CheckResult:
    """``P(X + |Y1| <= t) <= P(X + |Y2| <= t)`` on a grid of ``t`` when
    ``sigma_y1 > sigma_y2``.

    ``X`` is a sum of independent half-normals with deviations
    ``sigma_x`` (empty for ``X = 0``). Reports the worst gap
    ``F1(t) - F2(t)`` and the standard error of that difference.
    """
    if not sigma_y1 > sigma_y2 >= 0:
        raise ValueError("need sigma_y1 > sigma_y2 >= 0")
    sx = np.atleast_1d(np.asarray(sigma_x, dtype=np.float64))
    scale = float(np.sum(sx)) + sigma_y1
    t = np.linspace(0.0, 4.0 * scale, 41) if grid is None else np.asarray(grid, dtype=np.float64)
    c1 = np.zeros(t.size)
    c2 = np.zeros(t.size)
    for rng, size in _blocks(draws, seed, _HALF):
        x = np.abs(rng.standard_normal((size, sx.size)) * sx).sum(axis=1)
        y1 = x + np.abs(rng.standard_normal(size) * sigma_y1)
        y2 = x + np.abs(rng.standard_normal(size) * sigma_y2)
        c1 += np.count_nonzero(y1[:, None] <= t, axis=0)
        c2 += np.count_nonzero(y2[:, None] <= t, axis=0)
    f1, f2 = c1 / draws, c2 / draws
    se = np.sqrt((f1 * (1 - f1) + f2 * (1 - f2)) / draws)
    gap = f1 - f2
    worst = int(np.argmax(gap - slack * se))
    return CheckResult(float(gap[worst]), 0.0, float(se[worst]),
                       bool(np.all(gap <= slack * se)))
