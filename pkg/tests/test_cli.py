import numpy as np
import pytest

from sompns import __version__, generate_gaussian_dictionary, somp_ns
from sompns.cli import main
from sompns.experiments import FORMAT_VERSION
from sompns.io import load_matrix, save_matrix


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _instance(workdir):
    assert main(["gen-dict", "--m", "24", "--n", "60", "--seed", "3", "--out", "d.csv"]) == 0
    d = load_matrix("d.csv")
    x = np.zeros((60, 2))
    x[[4, 17, 40]] = [[2.0, -1.0], [1.5, 1.5], [-2.0, 2.5]]
    save_matrix("x.csv", x)
    save_matrix("y.csv", d @ x)
    return d, x


def _config(workdir, extra=""):
    (workdir / "c.toml").write_text(
        'dict_source = "d.csv"\nsign_pattern = 1\nsupport_size = 3\nmu_x = 2.0\nK = 2\n'
        "theta_q_grid = [20, 45, 70]\ntheta_sigma_grid = [30, 60]\ntrials = 60\nseed = 4\n"
        "precision = 32\n" + extra)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert __version__ in out and f"format {FORMAT_VERSION}" in out


def test_gen_dict_round_trip(workdir, capsys):
    assert main(["gen-dict", "--kind", "gaussian", "--m", "64", "--n", "256", "--seed", "7",
                 "--out", "d.csv"]) == 0
    a = load_matrix("d.csv")
    assert a.shape == (64, 256)
    assert np.array_equal(a, generate_gaussian_dictionary(64, 256, 7).entries)
    assert main(["dict-metrics", "--dict", "d.csv", "--p-max", "2"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "metric,value" and out[2].startswith("coherence,")


def test_gen_dict_stdout_and_rademacher(workdir, capsys):
    assert main(["gen-dict", "--kind", "rademacher", "--m", "4", "--n", "3"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# dims 4 3")
    assert set(text.splitlines()[2].split(",")) <= {"0.5", "-0.5"}


def test_recover_trace(workdir, capsys):
    d, x = _instance(workdir)
    assert main(["recover", "--dict", "d.csv", "--y", "y.csv", "--weights", "1,0.5",
                 "--iters", "3", "--coef-out", "coef.csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,selected_index,metric_value,residual_fro"
    picked = [int(ln.split(",")[1]) for ln in lines[1:]]
    assert sorted(picked) == [5, 18, 41]  # 1-based
    assert [int(ln.split(",")[0]) for ln in lines[1:]] == [1, 2, 3]
    tr = somp_ns(generate_gaussian_dictionary(24, 60, 3), d @ x, [1, 0.5], 3)
    assert picked == [j + 1 for j in tr.selected]
    assert np.allclose(load_matrix("coef.csv"), x[tr.selected], atol=1e-10)


def test_recover_forms_agree(workdir, capsys):
    _instance(workdir)
    main(["recover", "--dict", "d.csv", "--y", "y.csv", "--theta-q", "30", "--iters", "3"])
    a = [ln.split(",")[1] for ln in capsys.readouterr().out.splitlines()]
    main(["recover", "--dict", "d.csv", "--y", "y.csv", "--theta-q", "30", "--iters", "3",
          "--form", "2"])
    b = [ln.split(",")[1] for ln in capsys.readouterr().out.splitlines()]
    assert a == b


def test_recover_rank_deficiency_is_domain_error(workdir, capsys):
    a = np.eye(3)
    save_matrix("d.csv", np.column_stack([a[:, 0], -a[:, 0], a[:, 1]]))
    save_matrix("y.csv", np.array([[1.0], [0.0], [0.0]]))
    assert main(["recover", "--dict", "d.csv", "--y", "y.csv", "--iters", "2"]) == 1
    captured = capsys.readouterr()
    assert captured.out == "" and "partial selection (1-based): 1" in captured.err


@pytest.mark.parametrize("argv", [
    ["recover", "--dict", "missing.csv", "--y", "y.csv", "--iters", "2"],
    ["recover", "--dict", "d.csv", "--y", "y.csv", "--iters", "2", "--weights", "1,1,1"],
    ["recover", "--dict", "d.csv", "--y", "y.csv", "--iters", "2", "--weights=-1,1"],
    ["recover", "--dict", "d.csv", "--y", "y.csv", "--iters", "99"],
    ["dict-metrics", "--dict", "d.csv", "--support", "0,1"],
    ["bound", "--dict", "d.csv", "--support", "5,18,41", "--x", "x.csv"],
])
def test_usage_errors_exit_2(workdir, argv, capsys):
    _instance(workdir)
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_argparse_errors_exit_2(capsys):
    for argv in ([], ["bogus"], ["recover", "--iters", "x"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_bound_vacuous_is_data(workdir, capsys):
    _instance(workdir)
    argv = ["bound", "--dict", "d.csv", "--support", "5,18,41", "--x", "x.csv",
            "--theta-sigma", "30", "--mode", "coherence", "--bound", "theorem5"]
    assert main(argv) == 0
    header, row = capsys.readouterr().out.splitlines()
    fields = dict(zip(header.split(","), row.split(",")))
    assert fields["valid"] == "false" and fields["prob_lower_bound"] == ""
    assert main(argv + ["--require-valid"]) == 1


def test_bound_valid_on_orthonormal(workdir, capsys):
    save_matrix("d.csv", np.eye(8))
    x = np.zeros((8, 2))
    x[[1, 5]] = 10.0
    save_matrix("x.csv", x)
    for extra in (["--bound", "theorem5"], ["--bound", "b2"],
                  ["--bound", "b1", "--n-bar", "2", "--alpha", "1", "--drop-bias"]):
        assert main(["bound", "--dict", "d.csv", "--support", "2,6", "--x", "x.csv",
                     "--sigma", "0.5,0.5", "--ric-source", "exact"] + extra) == 0
        header, row = capsys.readouterr().out.splitlines()
        fields = dict(zip(header.split(","), row.split(",")))
        assert fields["valid"] == "true"
        assert 0.9 < float(fields["prob_lower_bound"]) <= 1.0
        assert fields["conditioning_source"] == "exact"


def test_bound_generated_signal(workdir, capsys):
    _instance(workdir)
    assert main(["bound", "--dict", "d.csv", "--support", "5,18,41", "--mu-x", "2",
                 "--sign-pattern", "2", "--K", "2", "--theta-sigma", "45",
                 "--mode", "ric", "--ric", "0.2"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("ric,theorem5,given,")


def test_experiment_angles_byte_identical(workdir):
    _instance(workdir)
    _config(workdir)
    assert main(["experiment", "angles", "--config", "c.toml", "--out", "r1.csv"]) == 0
    assert main(["experiment", "angles", "--config", "c.toml", "--out", "r2.csv",
                 "--threads", "3"]) == 0
    a, b = (workdir / "r1.csv").read_bytes(), (workdir / "r2.csv").read_bytes()
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0].startswith("# seed=4 dict_sha=")
    assert lines[1] == "theta_q_deg,theta_sigma_deg,trials,successes,failure_rate,wilson_lo,wilson_hi"
    assert len(lines) == 2 + 6


def test_experiment_ksweep_and_overrides(workdir, capsys):
    _instance(workdir)
    _config(workdir)
    assert main(["experiment", "ksweep", "--config", "c.toml", "--k-list", "1,2",
                 "--seed", "9", "--trials", "30"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# seed=9 ")
    assert lines[1] == "K,trials,failures,failure_rate,wilson_lo,wilson_hi"
    assert [ln.split(",")[:2] for ln in lines[2:]] == [["1", "30"], ["2", "30"]]
    assert main(["experiment", "ksweep", "--config", "c.toml"]) == 2


def test_experiment_rejects_unknown_config_keys(workdir, capsys):
    _instance(workdir)
    _config(workdir, "bogus = 1\n")
    assert main(["experiment", "angles", "--config", "c.toml"]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_snr_estimate(workdir, capsys):
    _instance(workdir)
    _config(workdir)
    assert main(["snr-estimate", "--config", "c.toml", "--cases", "50"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "snr_in_db" and float(lines[2]) > 0
    assert main(["snr-estimate", "--config", "c.toml", "--cases", "50", "--sigma", "1,1,1"]) == 2


def test_inputs_not_mutated(workdir):
    _instance(workdir)
    before = {p: (workdir / p).read_bytes() for p in ("d.csv", "y.csv", "x.csv")}
    main(["recover", "--dict", "d.csv", "--y", "y.csv", "--iters", "3"])
    main(["bound", "--dict", "d.csv", "--support", "5,18,41", "--x", "x.csv", "--sigma", "1,1"])
    assert before == {p: (workdir / p).read_bytes() for p in before}
