"""Probability lower bounds for correct support recovery by weighted SOMP
under independent Gaussian noise with per-vector deviations ``sigma_k``.

Notation used throughout: ``q`` weights, ``sigma`` noise deviations,
``q_sigma = q * sigma``,

* ``kappa = 1 / (2 ||q_sigma||_2^2)``  (concentration rate)
* ``b = sqrt(2/pi) ||q_sigma||_1``      (mean of the weighted noise sum)
* ``eps``: half the guaranteed signal margin, ``eps_bar = eps - b``.

Bounds are returned raw (possibly negative) with a validity flag; large
combinatorial factors are handled in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._common import (
    Bound,
    WeightVector,
    as_support,
    as_weights,
    norm_inf,
    qr_full_rank,
)
from .dictionary import Dictionary, erc_constant

__all__ = [
    "NoiseSpec",
    "BoundReport",
    "ConjecturedBoundParams",
    "kappa",
    "bias_b",
    "min_weighted_sum",
    "signal_metric_lower_bound",
    "epsilon_threshold",
    "combinatorial_c",
    "theorem5_bound",
    "conjectured_bound",
    "b2_bound",
    "optimal_weights",
    "weight_efficiency",
    "noisy_erc_check",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Per-measurement-vector noise standard deviations (all positive)."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=np.float64).ravel()
        if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("noise deviations must be positive and finite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_angle(cls, theta_deg: float) -> "NoiseSpec":
        """K=2 deviations ``(cos theta, sin theta)``, theta in (0, 90) degrees."""
        if not 0.0 < theta_deg < 90.0:
            raise ValueError("noise angle must lie strictly between 0 and 90 degrees")
        t = math.radians(theta_deg)
        return cls(np.array([math.cos(t), math.sin(t)]))

    @classmethod
    def isotropic(cls, K: int, level: float = math.sqrt(2) / 2) -> "NoiseSpec":
        return cls(np.full(K, level))

    @property
    def K(self) -> int:
        return self.sigma.size

    @property
    def theta_deg(self) -> float:
        if self.K != 2:
            raise ValueError("polar angle is only defined for K = 2")
        return math.degrees(math.atan2(self.sigma[1], self.sigma[0]))


def _as_sigma(noise, K=None) -> np.ndarray:
    s = noise.sigma if isinstance(noise, NoiseSpec) else NoiseSpec(noise).sigma
    if K is not None and s.size != K:
        raise ValueError(f"expected {K} noise deviations, got {s.size}")
    return s


def _q_sigma(weights, noise):
    q = as_weights(weights)
    return q * _as_sigma(noise, q.size)


def kappa(weights, noise) -> float:
    """``1 / (2 ||q * sigma||_2^2)``."""
    qs = _q_sigma(weights, noise)
    ss = float(np.dot(qs, qs))
    if ss == 0.0:
        raise ValueError("kappa is undefined when every q_k sigma_k is zero")
    return 1.0 / (2.0 * ss)


def bias_b(weights, noise) -> float:
    """``sqrt(2/pi) ||q * sigma||_1``, the mean of ``sum_k q_k |<phi, e_k>|``."""
    return math.sqrt(2.0 / math.pi) * float(np.abs(_q_sigma(weights, noise)).sum())


def min_weighted_sum(x, support, weights) -> float:
    """``min_{j in S} sum_k |X_jk| q_k``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    s = as_support(support, x.shape[0])
    if s.size == 0:
        raise ValueError("support must be nonempty")
    q = as_weights(weights, x.shape[1])
    return float((np.abs(x[s]) @ q).min())


def coherence_conditioning(mu: float, support_size: int, t: int = 0) -> float:
    """``(|S| - t - 1) mu``, the coherence stand-in for ``delta_{|S| - t}``."""
    if not 0 <= t < support_size:
        raise ValueError("t must lie in [0, |S| - 1]")
    return (support_size - t - 1) * mu


def signal_metric_lower_bound(x, support, weights, conditioning: float | None = None,
                              mode: str = "ric", mu: float | None = None,
                              t: int = 0) -> Bound:
    """Lower bound on ``||Phi_S^T Z Q||_inf``: ``(1 - c) min-sum``.

    In ``ric`` mode ``conditioning`` is a restricted isometry constant. In
    ``coherence`` mode it may instead be derived from ``mu`` as
    ``(|S| - t - 1) mu``. Conditioning >= 1 makes the bound vacuous.
    """
    s = as_support(support, np.shape(x)[0])
    if mode == "coherence" and conditioning is None:
        if mu is None:
            raise ValueError("coherence mode needs conditioning or mu")
        conditioning = coherence_conditioning(mu, s.size, t)
    elif mode not in ("ric", "coherence"):
        raise ValueError(f"unknown mode {mode!r}")
    if conditioning is None or conditioning < 0:
        raise ValueError("conditioning must be a nonnegative number")
    value = (1.0 - conditioning) * min_weighted_sum(x, s, weights)
    return Bound(value, not conditioning < 1.0)


def epsilon_threshold(x, support, weights, mode: str = "ric", *,
                      erc_norm: float | None = None, ric: float | None = None,
                      mu: float | None = None) -> Bound:
    """Noise threshold below which every pick is guaranteed correct.

    ``ric`` mode: ``0.5 (1 - erc_norm) (1 - ric) min-sum`` with ``ric`` the
    RIC of order ``|S|`` (or any upper bound on it).
    ``coherence`` mode: ``0.5 (1 - mu (2|S| - 1)) min-sum``.
    Nonpositive results, or failed hypotheses, are flagged vacuous.
    """
    s = as_support(support, np.shape(x)[0])
    ms = min_weighted_sum(x, s, weights)
    if mode == "ric":
        if erc_norm is None or ric is None:
            raise ValueError("ric mode needs erc_norm and ric")
        value = 0.5 * (1.0 - erc_norm) * (1.0 - ric) * ms
        vacuous = not (erc_norm < 1.0 and ric < 1.0 and value > 0.0)
    elif mode == "coherence":
        if mu is None:
            raise ValueError("coherence mode needs mu")
        c = mu * (2 * s.size - 1)
        value = 0.5 * (1.0 - c) * ms
        vacuous = not (c < 1.0 and value > 0.0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Bound(value, vacuous)


def combinatorial_c(support_size: int, s: int) -> int:
    """``sum_{i=0}^{s} C(|S|, i)``, exact."""
    if not 0 <= s <= support_size - 1:
        raise ValueError("s must lie in [0, |S| - 1]")
    return sum(math.comb(support_size, i) for i in range(s + 1))


def _one_minus_exp(log_term: float) -> float:
    # 1 - exp(log_term) without overflow for huge prefactors
    if log_term > 700.0:
        return -math.inf
    return -math.expm1(log_term)


@dataclass
class BoundReport:
    kappa: float
    b: float
    epsilon: float
    epsilon_bar: float
    c_s: int
    prob_lower_bound: float | None
    valid: bool

    @property
    def clamped(self) -> float | None:
        if self.prob_lower_bound is None:
            return None
        return min(1.0, max(0.0, self.prob_lower_bound))

    @property
    def failure_upper_bound(self) -> float | None:
        if self.prob_lower_bound is None:
            return None
        return 1.0 - self.prob_lower_bound


def theorem5_bound(epsilon: float, weights, noise, n: int, support_size: int,
                   s: int) -> BoundReport:
    """``1 - n C_s exp(-kappa eps_bar^2)`` for correct picks in iterations 0..s.

    Only meaningful when ``eps_bar = eps - b > 0``; otherwise ``valid`` is
    False and ``prob_lower_bound`` is None.
    """
    k = kappa(weights, noise)
    b = bias_b(weights, noise)
    cs = combinatorial_c(support_size, s)
    eps_bar = epsilon - b
    valid = eps_bar > 0.0
    prob = None
    if valid:
        prob = _one_minus_exp(math.log(n) + math.log(cs) - k * eps_bar * eps_bar)
    return BoundReport(k, b, epsilon, eps_bar, cs, prob, valid)


@dataclass(frozen=True)
class ConjecturedBoundParams:
    """Free parameters of the conjectured bound: effective atom count
    ``n_bar`` and the per-iteration factor ``alpha`` replacing ``C_s / s``.
    """

    n_bar: float
    alpha: float
    drop_bias: bool = False

    def __post_init__(self):
        if not (self.n_bar > 0 and self.alpha > 0):
            raise ValueError("n_bar and alpha must be positive")

    @classmethod
    def degenerate(cls, n: int, support_size: int, s: int) -> "ConjecturedBoundParams":
        """Parameters that make the conjecture coincide with the proven bound."""
        if s < 1:
            raise ValueError("s must be at least 1 for alpha = C_s / s")
        return cls(float(n), combinatorial_c(support_size, s) / s, False)


def conjectured_bound(params: ConjecturedBoundParams, epsilon: float, weights,
                      noise, s: int) -> Bound:
    """``1 - n_bar alpha s exp(-kappa e^2)`` with ``e = eps - b``, or
    ``e = eps`` when ``params.drop_bias``. Flagged vacuous when the bias is
    kept and ``eps <= b``.
    """
    k = kappa(weights, noise)
    if params.drop_bias:
        e, vacuous = epsilon, False
    else:
        e = epsilon - bias_b(weights, noise)
        vacuous = not e > 0.0
    log_term = math.log(params.n_bar) + math.log(params.alpha) + math.log(s) - k * e * e
    return Bound(_one_minus_exp(log_term), vacuous)


def weight_efficiency(weights, noise) -> float:
    """``<q>^2 / <q^2 sigma^2>``; larger is better for the sign-pattern model."""
    q = as_weights(weights)
    sig = _as_sigma(noise, q.size)
    return float(np.mean(q) ** 2 / np.mean(q * q * sig * sig))


def b2_bound(mu_x: float, weights, noise, n: int, support_size: int,
             epsilon_prime: float) -> float:
    """Full-recovery lower bound for signals with entries ``+-mu_x`` on S:
    ``1 - n C_{|S|-1} exp(-K <q>^2 mu_x^2 eps'^2 / (2 <q^2 sigma^2>))``.
    """
    if not mu_x > 0:
        raise ValueError("mu_x must be positive")
    q = as_weights(weights)
    K = q.size
    rate = K * weight_efficiency(q, noise) * mu_x**2 * epsilon_prime**2 / 2.0
    cs = combinatorial_c(support_size, support_size - 1)
    return _one_minus_exp(math.log(n) + math.log(cs) - rate)


def optimal_weights(noise) -> WeightVector:
    """``q_k = 1 / sigma_k^2``; maximises :func:`weight_efficiency`.

    For K=2 the angle is available as ``.theta_deg``.
    """
    sig = _as_sigma(noise)
    return WeightVector(1.0 / sig**2)


def noisy_erc_check(d: Dictionary, support, x, e, weights, t_support=()) -> bool:
    """Whether the noisy sufficient condition for a correct pick holds.

    With ``P`` the projector on the atoms in ``t_support`` (assumed correct
    picks so far), ``Z = (I - P) Phi X`` and ``F = (I - P) E``, checks
    ``(1 - erc) ||Phi_S^T Z Q||_inf > 2 ||Phi^T F Q||_inf``.
    """
    s = as_support(support, d.n)
    ts = as_support(t_support, d.n)
    if not set(ts.tolist()) <= set(s.tolist()):
        raise ValueError("t_support must be a subset of support")
    x = np.asarray(x, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if x.ndim == 1:
        x, e = x[:, None], e[:, None]
    q = as_weights(weights, x.shape[1])
    erc = erc_constant(d, s)
    phi = d.entries
    z = phi @ x
    f = e.copy()
    if ts.size:
        basis, _ = qr_full_rank(phi[:, ts], ts)
        z = z - basis @ (basis.T @ z)
        f = f - basis @ (basis.T @ f)
    left = (1.0 - erc) * norm_inf(phi[:, s].T @ z * q)
    right = 2.0 * norm_inf(phi.T @ f * q)
    return bool(left > right)
