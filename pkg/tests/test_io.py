import numpy as np
import pytest

from sompns import Dictionary, dict_metrics, generate_gaussian_dictionary
from sompns.io import format_matrix, load_matrix, parse_matrix, save_matrix


def test_round_trip_is_exact(tmp_path):
    d = generate_gaussian_dictionary(7, 11, 2)
    path = tmp_path / "d.csv"
    d.save(path)
    back = Dictionary.load(path)
    assert np.array_equal(back.entries, d.entries)
    a, b = dict_metrics(d, 3, support=[0, 4]), dict_metrics(back, 3, support=[0, 4])
    assert abs(a.coherence - b.coherence) <= 1e-9 and abs(a.erc_norm - b.erc_norm) <= 1e-9


def test_header_and_comments():
    text = format_matrix(np.eye(2), ["hello"])
    assert text.splitlines()[:2] == ["# dims 2 2", "# hello"]
    assert np.array_equal(parse_matrix(text), np.eye(2))


def test_nine_digit_input_is_accepted(tmp_path):
    d = generate_gaussian_dictionary(5, 6, 0)
    rows = [",".join(f"{v:.9g}" for v in r) for r in d.entries]
    path = tmp_path / "short.csv"
    path.write_text("# dims 5 6\n" + "\n".join(rows) + "\n")
    back = Dictionary.load(path)
    assert np.allclose(back.entries, d.entries, atol=1e-8)
    assert abs(dict_metrics(back).coherence - dict_metrics(d).coherence) <= 1e-7


@pytest.mark.parametrize("text", [
    "", "1,2\n", "# dims 2\n1,2\n", "# dims 2 2\n1,2\n", "# dims 1 3\n1,2\n",
    "# dims 1 2\n1,x\n",
])
def test_malformed_files(text):
    with pytest.raises(ValueError):
        parse_matrix(text)


def test_save_load_matrix(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4))
    save_matrix(tmp_path / "a.csv", a)
    assert np.array_equal(load_matrix(tmp_path / "a.csv"), a)
