"""Seeded Monte Carlo campaigns for weighted SOMP.

Signals follow the sign-pattern model: on a uniformly drawn support every
entry is ``+-mu_x``; pattern 1 shares one sign vector across the K
measurement vectors, pattern 2 draws every sign independently. Noise column
``k`` is i.i.d. ``N(0, sigma_k^2)``.

Reproducibility: every trial draws from its own generator seeded by
``(master seed, stream tag, row, trial)``. All weight cells of an angle
sweep row share the same trials (common random numbers), so weight
comparisons within a row are paired. Counts are merged by integer
addition, so results do not depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from ._common import as_support, rank_tol_for
from .bounds import ConjecturedBoundParams, NoiseSpec
from .dictionary import (
    Dictionary,
    generate_gaussian_dictionary,
    generate_rademacher_dictionary,
)

__all__ = [
    "ExperimentConfig",
    "TrialOutcome",
    "CellResult",
    "ExperimentSummary",
    "KSweepRow",
    "KSweepSummary",
    "FitResult",
    "generate_sparse_signal",
    "generate_noise",
    "run_angle_sweep",
    "replay_angle_trial",
    "run_k_sweep",
    "estimate_snr_in",
    "calibrate_mu_x",
    "fit_conjecture_params",
    "wilson_interval",
    "paper_angle_grid",
    "load_config",
]

FORMAT_VERSION = 1
WILSON_Z = 1.959963984540054  # two-sided 95%

# stream tags keep campaigns of different kinds on disjoint seed streams
_ANGLES, _KSWEEP, _SNR, _CALIB = 1, 2, 3, 4

ANGLE_HEADER = "theta_q_deg,theta_sigma_deg,trials,successes,failure_rate,wilson_lo,wilson_hi"
KSWEEP_HEADER = "K,trials,failures,failure_rate,wilson_lo,wilson_hi"


def paper_angle_grid(lo: float, hi: float, count: int = 21) -> list[float]:
    """``count`` uniformly spaced angles from ``lo`` to ``hi`` degrees."""
    return [float(v) for v in np.linspace(lo, hi, count)]


# -- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    dict_source: str | dict
    sign_pattern: int
    support_size: int
    mu_x: float
    K: int = 2
    theta_q_grid: list = field(default_factory=lambda: paper_angle_grid(5, 85))
    theta_sigma_grid: list = field(default_factory=lambda: paper_angle_grid(20, 70))
    trials: int = 2000
    seed: int = 0
    precision: int = 32

    def __post_init__(self):
        if self.sign_pattern not in (1, 2):
            raise ValueError("sign_pattern must be 1 or 2")
        if int(self.support_size) != self.support_size or self.support_size < 1:
            raise ValueError("support_size must be a positive integer")
        if not (isinstance(self.mu_x, (int, float)) and self.mu_x > 0):
            raise ValueError("mu_x must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        for name in ("theta_q_grid", "theta_sigma_grid"):
            grid = [float(a) for a in getattr(self, name)]
            if not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(not 0.0 < a < 90.0 for a in grid):
                raise ValueError(f"{name} angles must lie strictly between 0 and 90 degrees")
            setattr(self, name, sorted(grid))
        if not isinstance(self.dict_source, (str, dict)):
            raise ValueError("dict_source must be a file path or a generator table")
        self.support_size = int(self.support_size)
        self.K = int(self.K)
        self.trials = int(self.trials)
        self.seed = int(self.seed)
        self.mu_x = float(self.mu_x)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = {"dict_source", "sign_pattern", "support_size", "mu_x"} - set(data)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        return cls(**data)

    def to_mapping(self) -> dict:
        return asdict(self)

    @property
    def checksum(self) -> str:
        blob = json.dumps(self.to_mapping(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_mapping()
        data.update(changes)
        return ExperimentConfig(**data)

    def load_dictionary(self, base_dir=None) -> Dictionary:
        src = self.dict_source
        if isinstance(src, str):
            path = src if base_dir is None or os.path.isabs(src) else os.path.join(base_dir, src)
            return Dictionary.load(path)
        spec = dict(src)
        kind = spec.pop("kind", "gaussian")
        try:
            m, n, seed = int(spec.pop("m")), int(spec.pop("n")), int(spec.pop("seed", 0))
        except KeyError as exc:
            raise ValueError(f"dict_source table is missing {exc.args[0]!r}") from None
        if spec:
            raise ValueError(f"unknown dict_source keys: {sorted(spec)}")
        gen = {"gaussian": generate_gaussian_dictionary,
               "rademacher": generate_rademacher_dictionary}.get(kind)
        if gen is None:
            raise ValueError(f"unknown dictionary kind {kind!r}")
        return gen(m, n, seed)


def load_config(path) -> ExperimentConfig:
    """Read a TOML (``.toml``) or JSON config file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(raw.decode())
    else:
        data = json.loads(raw)
    return ExperimentConfig.from_mapping(data)


# -- ensembles ---------------------------------------------------------------

def _rng(seed, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _signs(rng, size, K, pattern):
    if pattern == 1:
        return np.repeat(rng.integers(0, 2, size=(size, 1)) * 2.0 - 1.0, K, axis=1)
    return rng.integers(0, 2, size=(size, K)) * 2.0 - 1.0


def generate_sparse_signal(n: int, support, mu_x: float, sign_pattern: int, K: int,
                           seed) -> np.ndarray:
    """``n x K`` matrix with entries ``+-mu_x`` on ``support`` and zero elsewhere."""
    if sign_pattern not in (1, 2):
        raise ValueError("sign_pattern must be 1 or 2")
    s = as_support(support, n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.zeros((n, K))
    x[s] = mu_x * _signs(rng, s.size, K, sign_pattern)
    return x


def generate_noise(m: int, noise, seed) -> np.ndarray:
    """``m x K`` matrix whose column ``k`` is i.i.d. ``N(0, sigma_k^2)``."""
    sigma = noise.sigma if isinstance(noise, NoiseSpec) else NoiseSpec(noise).sigma
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((m, sigma.size)) * sigma


def _draw_instance(rng, n, size, mu_x, pattern, K, m):
    """Support, in-support coefficients and unit-variance noise, in that order."""
    support = rng.choice(n, size=size, replace=False)
    coef = mu_x * _signs(rng, size, K, pattern)
    noise = rng.standard_normal((m, K))
    return support, coef, noise


def _recovers(phi, y, q, size, dtype, support_set) -> bool:
    status, sel, *_ = kernels.somp_ns_kernel(phi, y, q, size, rank_tol_for(dtype))
    return status == kernels.OK and set(sel.tolist()) == support_set


# -- statistics --------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _fmt(v: float) -> str:
    return f"{v:.10g}"


# -- angle sweep -------------------------------------------------------------

@dataclass
class CellResult:
    theta_q: float
    theta_sigma: float
    trials: int
    successes: int

    @property
    def failures(self) -> int:
        return self.trials - self.successes

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.successes / self.trials

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.trials)

    @property
    def wilson_halfwidth(self) -> float:
        lo, hi = self.wilson
        return (hi - lo) / 2.0


@dataclass
class ExperimentSummary:
    cells: list
    metadata: dict

    def cell(self, theta_q: float, theta_sigma: float) -> CellResult:
        for c in self.cells:
            if math.isclose(c.theta_q, theta_q) and math.isclose(c.theta_sigma, theta_sigma):
                return c
        raise KeyError((theta_q, theta_sigma))

    def row(self, theta_sigma: float) -> list:
        return [c for c in self.cells if math.isclose(c.theta_sigma, theta_sigma)]

    def to_csv(self) -> str:
        md = self.metadata
        lines = [
            f"# seed={md['seed']} dict_sha={md['dict_sha']} config_sha={md['config_sha']}",
            ANGLE_HEADER,
        ]
        for c in self.cells:
            lo, hi = c.wilson
            lines.append(",".join([_fmt(c.theta_q), _fmt(c.theta_sigma), str(c.trials),
                                   str(c.successes), _fmt(c.failure_rate), _fmt(lo), _fmt(hi)]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrialOutcome:
    """One angle-sweep case: success means the selected set equals the support."""

    success: bool
    trial_index: int
    support: tuple


def replay_angle_trial(config: ExperimentConfig, theta_q: float, theta_sigma: float,
                       trial: int, *, dictionary: Dictionary | None = None,
                       noise_scale: float = 1.0) -> TrialOutcome:
    """Rerun a single case of :func:`run_angle_sweep` and report it.

    ``theta_sigma`` must belong to the config grid since the seed stream is
    keyed by its row.
    """
    grid = config.theta_sigma_grid
    rows = [i for i, a in enumerate(grid) if math.isclose(a, theta_sigma)]
    if not rows:
        raise ValueError("theta_sigma is not on the config grid")
    if not 0 <= trial < config.trials:
        raise ValueError("trial index out of range")
    d = dictionary if dictionary is not None else config.load_dictionary()
    dtype = np.float32 if config.precision == 32 else np.float64
    phi = np.asfortranarray(d.as_dtype(dtype))
    rng = _rng(config.seed, _ANGLES, rows[0], trial)
    support, coef, noise = _draw_instance(rng, d.n, config.support_size, config.mu_x,
                                          config.sign_pattern, config.K, d.m)
    sigma = NoiseSpec.from_angle(theta_sigma).sigma
    y = (phi[:, support].astype(np.float64) @ coef + noise * (sigma * noise_scale)).astype(dtype)
    q = np.array([math.cos(math.radians(theta_q)), math.sin(math.radians(theta_q))], dtype=dtype)
    ok = _recovers(phi, y, q, config.support_size, dtype, set(support.tolist()))
    return TrialOutcome(bool(ok), int(trial), tuple(sorted(int(j) for j in support)))


def _angle_chunk(args):
    (phi, size, mu_x, pattern, K, sigma, weights, seed, row, start, stop,
     precision, noise_scale) = args
    dtype = np.float32 if precision == 32 else np.float64
    m, n = phi.shape
    qs = [np.asarray(w, dtype=dtype) for w in weights]
    wins = np.zeros(len(qs), dtype=np.int64)
    for trial in range(start, stop):
        rng = _rng(seed, _ANGLES, row, trial)
        support, coef, noise = _draw_instance(rng, n, size, mu_x, pattern, K, m)
        y = phi[:, support].astype(np.float64) @ coef + noise * (sigma * noise_scale)
        y = y.astype(dtype)
        target = set(support.tolist())
        for i, q in enumerate(qs):
            wins[i] += _recovers(phi, y, q, size, dtype, target)
    return row, wins


def _chunks(total: int, workers: int):
    step = max(1, math.ceil(total / max(1, workers * 4)))
    return [(a, min(total, a + step)) for a in range(0, total, step)]


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_angle_sweep(config: ExperimentConfig, *, dictionary: Dictionary | None = None,
                    workers: int = 1, noise_scale: float = 1.0,
                    weight_scale: float = 1.0) -> ExperimentSummary:
    """Full-recovery counts over the ``(theta_q, theta_sigma)`` grid.

    Weights are ``weight_scale * (cos theta_q, sin theta_q)`` and noise
    deviations ``noise_scale * (cos theta_sigma, sin theta_sigma)``;
    ``noise_scale=0`` gives the noiseless variant.
    """
    if config.K != 2:
        raise ValueError("the angle sweep uses the K = 2 polar parameterisation")
    d = dictionary if dictionary is not None else config.load_dictionary()
    if config.support_size > min(d.m, d.n):
        raise ValueError("support_size exceeds the dictionary dimensions")
    dtype = np.float32 if config.precision == 32 else np.float64
    phi = np.asfortranarray(d.as_dtype(dtype))
    weights = [weight_scale * np.array([math.cos(math.radians(a)), math.sin(math.radians(a))])
               for a in config.theta_q_grid]
    jobs = []
    for row, ts in enumerate(config.theta_sigma_grid):
        sigma = NoiseSpec.from_angle(ts).sigma
        for a, b in _chunks(config.trials, workers):
            jobs.append((phi, config.support_size, config.mu_x, config.sign_pattern,
                         config.K, sigma, weights, config.seed, row, a, b,
                         config.precision, noise_scale))
    wins = np.zeros((len(config.theta_sigma_grid), len(weights)), dtype=np.int64)
    for row, w in _map(_angle_chunk, jobs, workers):
        wins[row] += w
    cells = [
        CellResult(tq, ts, config.trials, int(wins[r, c]))
        for r, ts in enumerate(config.theta_sigma_grid)
        for c, tq in enumerate(config.theta_q_grid)
    ]
    return ExperimentSummary(cells, _metadata(config, d))


def _metadata(config: ExperimentConfig, d: Dictionary) -> dict:
    return {
        "seed": config.seed,
        "dict_sha": d.checksum[:16],
        "config_sha": config.checksum[:16],
        "config": config.to_mapping(),
        "format_version": FORMAT_VERSION,
    }


# -- K sweep -----------------------------------------------------------------

@dataclass
class KSweepRow:
    K: int
    trials: int
    failures: int

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.trials)

    @property
    def wilson_halfwidth(self) -> float:
        lo, hi = self.wilson
        return (hi - lo) / 2.0


@dataclass
class KSweepSummary:
    rows: list
    metadata: dict

    def to_csv(self) -> str:
        md = self.metadata
        lines = [
            f"# seed={md['seed']} dict_sha={md['dict_sha']} config_sha={md['config_sha']}",
            KSWEEP_HEADER,
        ]
        for r in self.rows:
            lo, hi = r.wilson
            lines.append(",".join([str(r.K), str(r.trials), str(r.failures),
                                   _fmt(r.failure_rate), _fmt(lo), _fmt(hi)]))
        return "\n".join(lines) + "\n"


def _ksweep_chunk(args):
    phi, size, mu_x, pattern, K, level, seed, start, stop, precision = args
    dtype = np.float32 if precision == 32 else np.float64
    m, n = phi.shape
    q = np.ones(K, dtype=dtype)
    fails = 0
    for trial in range(start, stop):
        rng = _rng(seed, _KSWEEP, K, trial)
        support, coef, noise = _draw_instance(rng, n, size, mu_x, pattern, K, m)
        y = (phi[:, support].astype(np.float64) @ coef + level * noise).astype(dtype)
        fails += not _recovers(phi, y, q, size, dtype, set(support.tolist()))
    return K, fails


def run_k_sweep(config: ExperimentConfig, k_list: Sequence[int], *,
                dictionary: Dictionary | None = None, workers: int = 1,
                noise_level: float = math.sqrt(2) / 2) -> KSweepSummary:
    """Failure counts versus the number of measurement vectors.

    Equal weights and ``sigma = noise_level * (1, ..., 1)``; the config's K
    and angle grids are ignored.
    """
    ks = [int(k) for k in k_list]
    if not ks or any(k < 1 for k in ks):
        raise ValueError("k_list must hold positive integers")
    d = dictionary if dictionary is not None else config.load_dictionary()
    dtype = np.float32 if config.precision == 32 else np.float64
    phi = np.asfortranarray(d.as_dtype(dtype))
    jobs = [
        (phi, config.support_size, config.mu_x, config.sign_pattern, k, noise_level,
         config.seed, a, b, config.precision)
        for k in ks for a, b in _chunks(config.trials, workers)
    ]
    fails = {k: 0 for k in ks}
    for k, f in _map(_ksweep_chunk, jobs, workers):
        fails[k] += f
    rows = [KSweepRow(k, config.trials, fails[k]) for k in ks]
    md = _metadata(config, d)
    md["k_list"] = ks
    return KSweepSummary(rows, md)


# -- SNR and calibration -----------------------------------------------------

def _default_noise(K: int) -> NoiseSpec:
    return NoiseSpec.from_angle(45.0) if K == 2 else NoiseSpec.isotropic(K)


def estimate_snr_in(config: ExperimentConfig, cases: int, *, noise=None,
                    dictionary: Dictionary | None = None) -> float:
    """Mean over ``cases`` draws of ``20 log10(||Y||_F / ||Y - Phi X||_F)`` (dB).

    Noise defaults to ``(cos 45, sin 45)`` for K=2, else ``sqrt(2)/2`` per
    vector.
    """
    if int(cases) != cases or cases < 1:
        raise ValueError("cases must be a positive integer")
    d = dictionary if dictionary is not None else config.load_dictionary()
    sigma = (noise if isinstance(noise, NoiseSpec) else
             NoiseSpec(noise) if noise is not None else _default_noise(config.K)).sigma
    if sigma.size != config.K:
        raise ValueError("noise dimension must equal K")
    phi = d.entries
    total = 0.0
    for case in range(int(cases)):
        rng = _rng(config.seed, _SNR, 0, case)
        support, coef, noise_draw = _draw_instance(rng, d.n, config.support_size,
                                                   config.mu_x, config.sign_pattern,
                                                   config.K, d.m)
        e = noise_draw * sigma
        y = phi[:, support] @ coef + e
        total += 20.0 * math.log10(np.linalg.norm(y) / np.linalg.norm(e))
    return total / cases


def calibrate_mu_x(config: ExperimentConfig, target_success: float = 0.2, *,
                   theta_q: float = 45.0, theta_sigma: float = 45.0,
                   trials: int | None = None, lo: float = 0.1, hi: float | None = None,
                   steps: int = 12, dictionary: Dictionary | None = None,
                   workers: int = 1) -> float:
    """Bisect ``mu_x`` so that one cell's success rate is near ``target_success``.

    The same trial seeds are reused at every step, which keeps the measured
    success rate monotone enough for bisection.
    """
    if not 0.0 < target_success < 1.0:
        raise ValueError("target_success must lie in (0, 1)")
    d = dictionary if dictionary is not None else config.load_dictionary()
    base = config.replace(theta_q_grid=[theta_q], theta_sigma_grid=[theta_sigma],
                          trials=trials or config.trials, seed=config.seed + 7919 * _CALIB)

    def rate(mu):
        summary = run_angle_sweep(base.replace(mu_x=mu), dictionary=d, workers=workers)
        return summary.cells[0].success_rate

    if hi is None:
        hi = max(lo * 2, 1.0)
        while rate(hi) < target_success:
            lo, hi = hi, hi * 2
            if hi > 1e6:
                raise RuntimeError("could not bracket the target success rate")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target_success:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- log-linear fit ----------------------------------------------------------

@dataclass
class FitResult:
    """Least-squares line ``log(failure_rate) = intercept + slope * K``."""

    slope: float
    intercept: float
    r_squared: float
    ks: list
    log_rates: list

    @property
    def rate(self) -> float:
        """Empirical exponential decay rate per measurement vector."""
        return -self.slope

    @property
    def prefactor(self) -> float:
        """``exp(intercept)``, the fitted ``n_bar * alpha * s``."""
        return math.exp(self.intercept)

    def params(self, s: int, alpha: float = 1.0) -> ConjecturedBoundParams:
        """Conjectured-bound parameters (bias dropped) reproducing the line;
        only the product ``n_bar * alpha * s`` is identifiable.
        """
        return ConjecturedBoundParams(self.prefactor / (alpha * s), alpha, drop_bias=True)

    def epsilon_prime(self, mu_x: float) -> float:
        """Effective ``eps'`` with ``rate = (eps' mu_x)^2`` under equal weights
        and ``sigma_k = sqrt(2)/2``."""
        if self.rate <= 0:
            raise ValueError("fitted rate is not positive")
        return math.sqrt(self.rate) / mu_x


def fit_conjecture_params(rows, min_failures: int = 1) -> FitResult:
    """Fit ``log(failure_rate)`` against K by ordinary least squares.

    ``rows`` are :class:`KSweepRow` objects or ``(K, trials, failures)``
    tuples; rows with fewer than ``min_failures`` failures are dropped.
    """
    pts = []
    for r in rows:
        k, trials, failures = (r.K, r.trials, r.failures) if isinstance(r, KSweepRow) else r
        if failures >= max(1, min_failures):
            pts.append((float(k), math.log(failures / trials)))
    if len(pts) < 3:
        raise ValueError("need at least three K values with enough failures to fit")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    A = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, x.tolist(), y.tolist())
