"""Dictionaries of unit-norm atoms and the conditioning quantities the
recovery guarantees are stated in terms of.

All metrics are evaluated in float64 regardless of the precision used for
recovery.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from ._common import (
    Bound,
    BudgetExceededError,
    as_support,
    as_weights,
    complement,
    norm_1,
    norm_inf,
    qr_full_rank,
)
from .io import load_matrix, save_matrix

__all__ = [
    "Dictionary",
    "DictMetricsReport",
    "SelectionRatio",
    "generate_gaussian_dictionary",
    "generate_rademacher_dictionary",
    "coherence",
    "babel",
    "erc_constant",
    "exact_ric",
    "ric_coherence_bound",
    "spark_lower_bound",
    "greedy_selection_ratio",
    "dict_metrics",
]

NORM_TOL = 1e-6
RIC_BUDGET = 200_000


@dataclass(frozen=True, eq=False)
class Dictionary:
    """An ``m x n`` matrix whose columns (atoms) have unit l2 norm.

    The matrix is stored column-major and read-only; instances are safe to
    share between workers.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64, order="F", copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("dictionary must be a nonempty 2-D matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary entries must be finite")
        norms = np.linalg.norm(a, axis=0)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise ValueError(
                f"atoms must have unit norm; column {bad[0]} has norm {norms[bad[0]]:.9g}"
            )
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_matrix(cls, a, normalize: bool = True) -> "Dictionary":
        a = np.asarray(a, dtype=np.float64)
        if normalize:
            norms = np.linalg.norm(a, axis=0)
            if np.any(norms == 0):
                raise ValueError("cannot normalize a zero column")
            a = a / norms
        return cls(a)

    @classmethod
    def load(cls, path) -> "Dictionary":
        return cls(load_matrix(path))

    def save(self, path) -> None:
        save_matrix(path, self.entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    @cached_property
    def gram(self) -> np.ndarray:
        g = self.entries.T @ self.entries
        g.setflags(write=False)
        return g

    def as_dtype(self, dtype) -> np.ndarray:
        """Column-major copy in ``dtype`` (cached for float32)."""
        dtype = np.dtype(dtype)
        if dtype == np.float64:
            return self.entries
        if dtype == np.float32:
            return self._single
        raise ValueError(f"unsupported precision {dtype}")

    @cached_property
    def _single(self) -> np.ndarray:
        a = np.asfortranarray(self.entries.astype(np.float32))
        a.setflags(write=False)
        return a

    @cached_property
    def checksum(self) -> str:
        """SHA-256 over shape and little-endian float64 entries."""
        h = hashlib.sha256()
        h.update(f"{self.m}x{self.n}".encode())
        h.update(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())
        return h.hexdigest()


def generate_gaussian_dictionary(m: int, n: int, seed: int) -> Dictionary:
    """I.i.d. standard normal entries, columns rescaled to unit norm."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    norms = np.linalg.norm(a, axis=0)
    # a zero column has probability zero; redraw it anyway
    while np.any(norms == 0):
        zero = norms == 0
        a[:, zero] = rng.standard_normal((m, int(zero.sum())))
        norms = np.linalg.norm(a, axis=0)
    return Dictionary(a / norms)


def generate_rademacher_dictionary(m: int, n: int, seed: int) -> Dictionary:
    """Entries ``+-1/sqrt(m)`` with equal probability."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(m, n), dtype=np.int8) * 2 - 1
    return Dictionary(signs / math.sqrt(m))


def _check_dims(m, n):
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise ValueError("m and n must be positive integers")


def _abs_offdiag_gram(d: Dictionary) -> np.ndarray:
    g = np.abs(d.gram)
    np.fill_diagonal(g, 0.0)
    return g


def coherence(d: Dictionary) -> float:
    """Largest ``|<phi_i, phi_j>|`` over distinct atoms."""
    if d.n < 2:
        raise ValueError("coherence needs at least two atoms")
    return babel(d, 1)


def babel(d: Dictionary, p: int) -> float:
    """Cumulative coherence ``mu_1(p)``.

    For each atom ``j`` the ``p`` largest ``|<phi_i, phi_j>|`` with
    ``i != j`` are summed; the result is the maximum of these sums, which
    equals the maximum over all index sets of size ``p`` not containing j.
    """
    if int(p) != p or not 1 <= p <= d.n - 1:
        raise ValueError(f"p must be an integer in [1, {d.n - 1}]")
    return float(_babel_curve(d, p)[-1])


def _babel_curve(d: Dictionary, p_max: int) -> np.ndarray:
    """``mu_1(p)`` for ``p = 1..p_max`` via running sums of sorted columns."""
    g = _abs_offdiag_gram(d)
    # the zeroed diagonal is never needed among the top n-1 entries
    top = -np.sort(-g, axis=0)[:p_max]
    return np.cumsum(top, axis=0).max(axis=1)


def _pinv_product(d: Dictionary, support: np.ndarray, cols: np.ndarray) -> np.ndarray:
    a = d.entries
    q, r = qr_full_rank(a[:, support], support)
    return solve_triangular(r, q.T @ a[:, cols])


def erc_constant(d: Dictionary, support) -> float:
    """``||pinv(Phi_S) Phi_Sbar||_1`` (largest absolute column sum).

    Values below one guarantee exact noiseless recovery of any signal
    supported on ``support`` in ``|support|`` iterations.
    """
    s = as_support(support, d.n)
    if s.size == 0:
        raise ValueError("support must be nonempty")
    rest = complement(s, d.n)
    if rest.size == 0:
        return 0.0
    return norm_1(_pinv_product(d, s, rest))


def exact_ric(d: Dictionary, s: int, budget: int = RIC_BUDGET) -> float:
    """Restricted isometry constant of order ``s`` by full enumeration.

    Only meant for tiny dictionaries: the number of Gram eigenproblems is
    ``C(n, s)``.
    """
    if int(s) != s or not 1 <= s <= min(d.m, d.n):
        raise ValueError(f"s must be an integer in [1, {min(d.m, d.n)}]")
    count = math.comb(d.n, s)
    if count > budget:
        raise BudgetExceededError(
            f"C({d.n}, {s}) = {count} supports exceeds the budget of {budget}; "
            "use ric_coherence_bound instead"
        )
    g = d.gram
    lo, hi = np.inf, -np.inf
    combos = itertools.combinations(range(d.n), s)
    chunk = 4096
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        sub = g[block[:, :, None], block[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        lo = min(lo, float(ev[:, 0].min()))
        hi = max(hi, float(ev[:, -1].max()))
    return max(hi - 1.0, 1.0 - lo)


def ric_coherence_bound(d: Dictionary, s: int, use_babel: bool = False) -> Bound:
    """Upper bound on ``delta_s``: ``mu_1(s-1)`` or ``(s-1) mu``.

    Flagged vacuous when the value is not below one.
    """
    if int(s) != s or s < 1:
        raise ValueError("s must be a positive integer")
    if s == 1:
        return Bound(0.0, False)
    if use_babel:
        if s - 1 > d.n - 1:
            raise ValueError(f"s - 1 must not exceed {d.n - 1}")
        value = babel(d, s - 1)
    else:
        value = (s - 1) * coherence(d)
    return Bound(value, not value < 1.0)


def spark_lower_bound(d: Dictionary) -> int:
    """Largest ``s`` with ``(s - 1) mu < 1``, capped at ``m + 1``.

    Every set of ``s`` atoms is then linearly independent. Returns ``m + 1``
    for mutually orthogonal atoms.
    """
    if d.n < 2:
        return d.m + 1
    mu = coherence(d)
    if mu == 0.0:
        return d.m + 1
    s = int(math.floor(1.0 / mu)) + 1
    while (s - 1) * mu >= 1.0:
        s -= 1
    while s * mu < 1.0:
        s += 1
    return min(s, d.m + 1)


class SelectionRatio(NamedTuple):
    ratio: float
    degenerate: bool


def greedy_selection_ratio(d: Dictionary, support, residual, weights) -> SelectionRatio:
    """Off-support over on-support weighted correlation.

    ``||Phi_Sbar^T R Q||_inf / ||Phi_S^T R Q||_inf``; a ratio below one means
    the next SOMP-NS pick lies in ``support``. A zero denominator is reported
    as ``(inf, True)``.
    """
    s = as_support(support, d.n)
    if s.size == 0 or s.size >= d.n:
        raise ValueError("support must be a nonempty proper subset of the atoms")
    r = np.asarray(residual, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    q = as_weights(weights, r.shape[1])
    corr = d.entries.T @ r * q
    num = norm_inf(corr[complement(s, d.n)])
    den = norm_inf(corr[s])
    if den == 0.0:
        return SelectionRatio(math.inf, True)
    return SelectionRatio(num / den, False)


@dataclass
class DictMetricsReport:
    coherence: float
    babel: dict = field(default_factory=dict)
    erc_norm: float | None = None
    ric_coherence_bound: float | None = None
    spark_lower_bound: int | None = None


def dict_metrics(d: Dictionary, p_max: int | None = None, support=None,
                 s: int | None = None, use_babel: bool = False) -> DictMetricsReport:
    """Collect coherence, the Babel function up to ``p_max`` and, when given,
    the ERC constant of ``support`` and the coherence bound on ``delta_s``.
    """
    p_max = min(p_max or 1, d.n - 1)
    sums = _babel_curve(d, p_max)
    report = DictMetricsReport(
        coherence=coherence(d),
        babel={p: float(sums[p - 1]) for p in range(1, p_max + 1)},
        spark_lower_bound=spark_lower_bound(d),
    )
    if support is not None:
        report.erc_norm = erc_constant(d, support)
        if s is None:
            s = len(as_support(support, d.n))
    if s is not None:
        report.ric_coherence_bound = ric_coherence_bound(d, s, use_babel).value
    return report
