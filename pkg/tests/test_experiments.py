import json
import math

import numpy as np
import pytest

from sompns import (
    ExperimentConfig,
    NoiseSpec,
    conjectured_bound,
    estimate_snr_in,
    fit_conjecture_params,
    generate_gaussian_dictionary,
    generate_noise,
    generate_sparse_signal,
    omp,
    run_angle_sweep,
    run_k_sweep,
    wilson_interval,
)
from sompns.bounds import combinatorial_c
from sompns.experiments import (
    ANGLE_HEADER,
    KSWEEP_HEADER,
    KSweepRow,
    _draw_instance,
    _rng,
    _KSWEEP,
    calibrate_mu_x,
    load_config,
    paper_angle_grid,
    replay_angle_trial,
)


def _cfg(**kw):
    base = dict(dict_source={"kind": "gaussian", "m": 32, "n": 64, "seed": 1},
                sign_pattern=1, support_size=3, mu_x=1.5, K=2,
                theta_q_grid=[20, 45, 70], theta_sigma_grid=[30, 45],
                trials=150, seed=5, precision=32)
    base.update(kw)
    return ExperimentConfig(**base)


# -- ensembles ---------------------------------------------------------------

def test_pattern_one_columns_identical():
    x = generate_sparse_signal(50, [1, 7, 30], 2.5, 1, 4, 0)
    assert np.all(x == x[:, [0]])
    assert set(np.abs(x[[1, 7, 30]]).ravel()) == {2.5}
    assert np.count_nonzero(x) == 12


def test_pattern_two_sign_agreement():
    x = generate_sparse_signal(1000, range(1000), 1.0, 2, 2, 3)
    agree = np.mean(np.sign(x[:, 0]) == np.sign(x[:, 1]))
    assert abs(agree - 0.5) <= 0.05


@pytest.mark.parametrize("pattern", [1, 2])
def test_min_sum_is_k_mu(pattern):
    x = generate_sparse_signal(40, [2, 9, 17, 33], 0.7, pattern, 3, 1)
    assert np.abs(x[[2, 9, 17, 33]]).sum(axis=1).min() == pytest.approx(3 * 0.7)


def test_signal_is_deterministic_and_validated():
    a = generate_sparse_signal(20, [1, 2], 1.0, 2, 2, 9)
    assert np.array_equal(a, generate_sparse_signal(20, [1, 2], 1.0, 2, 2, 9))
    with pytest.raises(ValueError):
        generate_sparse_signal(20, [1, 2], 1.0, 3, 2, 9)


def test_noise_statistics():
    e = generate_noise(100_000, NoiseSpec([1.0, 1.0]), 4)
    assert np.all(np.abs(e.var(axis=0, ddof=1) - 1.0) <= 0.02)
    assert abs(np.corrcoef(e.T)[0, 1]) < 0.01
    assert np.array_equal(e, generate_noise(100_000, [1.0, 1.0], 4))
    e2 = generate_noise(50_000, [0.5, 3.0], 1)
    assert np.allclose(e2.std(axis=0), [0.5, 3.0], rtol=0.02)


# -- config ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(theta_q_grid=[0, 45])
    with pytest.raises(ValueError):
        _cfg(theta_sigma_grid=[])
    with pytest.raises(ValueError):
        _cfg(trials=0)
    with pytest.raises(ValueError):
        _cfg(precision=16)
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_mapping({**_cfg().to_mapping(), "extra": 1})
    with pytest.raises(ValueError, match="missing"):
        ExperimentConfig.from_mapping({"sign_pattern": 1})


def test_config_files(tmp_path):
    data = _cfg().to_mapping()
    (tmp_path / "c.json").write_text(json.dumps(data))
    toml = "\n".join([
        "sign_pattern = 1", "support_size = 3", "mu_x = 1.5", "K = 2",
        "theta_q_grid = [20, 45, 70]", "theta_sigma_grid = [30, 45]",
        "trials = 150", "seed = 5", "precision = 32",
        "[dict_source]", 'kind = "gaussian"', "m = 32", "n = 64", "seed = 1",
    ])
    (tmp_path / "c.toml").write_text(toml)
    a, b = load_config(tmp_path / "c.json"), load_config(tmp_path / "c.toml")
    assert a.checksum == b.checksum == _cfg().checksum


def test_default_grids_follow_paper():
    cfg = _cfg(theta_q_grid=paper_angle_grid(5, 85), theta_sigma_grid=paper_angle_grid(20, 70))
    assert len(cfg.theta_q_grid) == 21 and cfg.theta_q_grid[1] == pytest.approx(9.0)
    assert cfg.theta_sigma_grid[-1] == pytest.approx(70.0)


# -- statistics --------------------------------------------------------------

def test_wilson_known_values():
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and hi == pytest.approx(0.27753279, abs=1e-7)
    lo, hi = wilson_interval(50, 100)
    assert (lo + hi) / 2 == pytest.approx(0.5)
    z = 1.959963984540054
    half = z * math.sqrt(0.25 / 100 + z * z / 40000) / (1 + z * z / 100)
    assert hi - lo == pytest.approx(2 * half, rel=1e-12)


def test_wilson_halfwidth_scales_with_trials():
    a = wilson_interval(300, 1000)
    b = wilson_interval(600, 2000)
    ratio = (b[1] - b[0]) / (a[1] - a[0])
    assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.01)


# -- angle sweep -------------------------------------------------------------

def test_angle_sweep_csv_shape_and_order():
    s = run_angle_sweep(_cfg())
    lines = s.to_csv().splitlines()
    assert lines[0].startswith("# seed=5 dict_sha=") and "config_sha=" in lines[0]
    assert lines[1] == ANGLE_HEADER
    cells = [tuple(map(float, ln.split(",")[:2])) for ln in lines[2:]]
    assert cells == [(q, t) for t in (30, 45) for q in (20, 45, 70)]
    for c in s.cells:
        assert c.successes <= c.trials
        assert c.failure_rate == 1 - c.successes / c.trials
        lo, hi = c.wilson
        assert lo <= c.failure_rate <= hi


def test_angle_sweep_reproducible_across_workers():
    cfg = _cfg()
    a = run_angle_sweep(cfg, workers=1).to_csv()
    b = run_angle_sweep(cfg, workers=3).to_csv()
    assert a == b == run_angle_sweep(cfg, workers=1).to_csv()
    assert a != run_angle_sweep(cfg.replace(seed=6)).to_csv()


def test_angle_sweep_noiseless_erc_dims():
    # |S| = 2 at 64 x 256 satisfies the ERC on essentially every support
    cfg = _cfg(dict_source={"kind": "gaussian", "m": 64, "n": 256, "seed": 0},
               support_size=2, trials=200)
    s = run_angle_sweep(cfg, noise_scale=0.0)
    assert all(c.failures == 0 for c in s.cells)


def test_angle_sweep_weight_scale_invariance():
    cfg = _cfg()
    base = [c.successes for c in run_angle_sweep(cfg).cells]
    for c in (1e-3, 7.5):
        assert [x.successes for x in run_angle_sweep(cfg, weight_scale=c).cells] == base


@pytest.mark.parametrize("pattern", [1, 2])
def test_angle_sweep_channel_symmetry(pattern):
    cfg = _cfg(sign_pattern=pattern, theta_q_grid=[15, 30, 60, 75], theta_sigma_grid=[45],
               trials=600, mu_x=1.8)
    s = run_angle_sweep(cfg)
    for tq in (15, 30):
        a, b = s.cell(tq, 45), s.cell(90 - tq, 45)
        assert abs(a.failure_rate - b.failure_rate) <= 3 * (a.wilson_halfwidth + b.wilson_halfwidth)


def test_replay_matches_sweep_counts():
    cfg = _cfg(trials=40, theta_q_grid=[30], theta_sigma_grid=[45])
    d = cfg.load_dictionary()
    wins = sum(replay_angle_trial(cfg, 30, 45, t, dictionary=d).success for t in range(40))
    assert wins == run_angle_sweep(cfg, dictionary=d).cells[0].successes
    out = replay_angle_trial(cfg, 30, 45, 0, dictionary=d)
    assert len(out.support) == 3 and out.trial_index == 0


def test_angle_sweep_requires_two_vectors():
    with pytest.raises(ValueError):
        run_angle_sweep(_cfg(K=3))


# -- K sweep -----------------------------------------------------------------

def test_k_sweep_csv_and_reproducibility():
    cfg = _cfg(trials=100)
    s = run_k_sweep(cfg, [1, 2, 4])
    lines = s.to_csv().splitlines()
    assert lines[1] == KSWEEP_HEADER
    assert [int(ln.split(",")[0]) for ln in lines[2:]] == [1, 2, 4]
    assert s.to_csv() == run_k_sweep(cfg, [1, 2, 4], workers=2).to_csv()
    with pytest.raises(ValueError):
        run_k_sweep(cfg, [0, 1])


def test_k_sweep_single_vector_is_omp():
    cfg = _cfg(trials=60, support_size=3)
    d = cfg.load_dictionary()
    fails = 0
    for trial in range(60):
        rng = _rng(cfg.seed, _KSWEEP, 1, trial)
        s, coef, noise = _draw_instance(rng, d.n, 3, cfg.mu_x, cfg.sign_pattern, 1, d.m)
        y = d.entries[:, s] @ coef + math.sqrt(2) / 2 * noise
        fails += omp(d, y[:, 0], 3, precision=32).support != set(s.tolist())
    assert run_k_sweep(cfg, [1], dictionary=d).rows[0].failures == fails


# -- SNR and calibration -----------------------------------------------------

def test_snr_grows_as_noise_vanishes():
    cfg = _cfg()
    # once noise is negligible, each factor 10 less noise adds 20 dB
    quiet = estimate_snr_in(cfg, 200, noise=[1e-3, 1e-3])
    quieter = estimate_snr_in(cfg, 200, noise=[1e-4, 1e-4])
    assert quieter - quiet == pytest.approx(20.0, abs=1e-3)
    assert quiet > estimate_snr_in(cfg, 200, noise=[1.0, 1.0]) + 40
    with pytest.raises(ValueError):
        estimate_snr_in(cfg, 0)


def test_snr_matches_closed_form_expectation():
    # E||Phi X||^2 = |S| K mu^2, E||E||^2 = m ||sigma||^2
    cfg = _cfg(dict_source={"kind": "gaussian", "m": 250, "n": 1000, "seed": 0},
               support_size=10, mu_x=2.28)
    approx = 10 * math.log10((10 * 2 * 2.28**2 + 250) / 250)
    assert estimate_snr_in(cfg, 3000) == pytest.approx(approx, abs=0.05)


def test_calibration_hits_target():
    cfg = _cfg(trials=300, theta_q_grid=[45], theta_sigma_grid=[45])
    mu = calibrate_mu_x(cfg, 0.3, trials=300, steps=10)
    rate = run_angle_sweep(cfg.replace(mu_x=mu, seed=77)).cells[0].success_rate
    assert abs(rate - 0.3) <= 0.1


# -- fitting -----------------------------------------------------------------

def test_fit_exact_line():
    rows = [(k, 10**9, round(10**9 * math.exp(-1.0 - 0.37 * k))) for k in range(1, 7)]
    fit = fit_conjecture_params(rows)
    assert fit.slope == pytest.approx(-0.37, abs=1e-9)
    assert fit.intercept == pytest.approx(-1.0, abs=1e-8)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_needs_three_nonzero_cells():
    with pytest.raises(ValueError):
        fit_conjecture_params([(1, 100, 50), (2, 100, 0), (3, 100, 4)], min_failures=5)
    fit = fit_conjecture_params([KSweepRow(k, 100, f) for k, f in [(1, 90), (2, 40), (3, 15), (4, 0)]])
    assert fit.ks == [1.0, 2.0, 3.0]


def test_fitted_params_reproduce_line():
    fit = fit_conjecture_params([(1, 1000, 700), (2, 1000, 260), (3, 1000, 90), (4, 1000, 35)])
    s, mu_x = 4, 1.3
    params = fit.params(s)
    eps_prime = fit.epsilon_prime(mu_x)
    for K in range(1, 9):
        q = np.ones(K)
        sigma = np.full(K, math.sqrt(2) / 2)
        # equal weights: min-sum K mu_x, so eps = eps' K mu_x
        bound = conjectured_bound(params, eps_prime * K * mu_x, q, sigma, s)
        assert 1 - bound.value == pytest.approx(math.exp(fit.intercept + fit.slope * K), rel=1e-9)


def test_desk_sweep_fit_direction():
    cfg = _cfg(dict_source={"kind": "gaussian", "m": 64, "n": 256, "seed": 0},
               support_size=4, mu_x=2.0, trials=400)
    rows = run_k_sweep(cfg, range(1, 7)).rows
    fit = fit_conjecture_params(rows, min_failures=5)
    assert fit.slope < 0
    assert fit.prefactor < 256 * combinatorial_c(4, 3)


def test_empirical_failures_respect_theorem5_where_valid():
    from sompns import Dictionary, NoiseSpec, WeightVector, coherence, epsilon_threshold
    from sompns import theorem5_bound

    m, size = 32, 3
    basis = np.linalg.qr(np.random.default_rng(11).standard_normal((m, m)))[0]
    d = Dictionary(basis)
    mu = coherence(d)
    cfg = _cfg(dict_source={"kind": "gaussian", "m": m, "n": m, "seed": 0},
               support_size=size, mu_x=5.0, theta_q_grid=[30, 45, 60, 75],
               theta_sigma_grid=[30, 45, 60], trials=2000, seed=3)
    summary = run_angle_sweep(cfg, dictionary=d)
    x = np.zeros((m, 2))
    x[:size] = cfg.mu_x
    checked = 0
    for cell in summary.cells:
        q = WeightVector.from_angle(cell.theta_q)
        noise = NoiseSpec.from_angle(cell.theta_sigma)
        eps = epsilon_threshold(x, range(size), q, "coherence", mu=mu)
        report = theorem5_bound(eps.value, q, noise, m, size, size - 1)
        if eps.vacuous or not report.valid:
            continue
        checked += 1
        assert cell.failure_rate <= report.failure_upper_bound + 3 * cell.wilson_halfwidth
    assert checked >= 6
