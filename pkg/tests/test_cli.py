import json

import numpy as np
import pytest

from blockmps import block_mps as bm
from blockmps import cli
from blockmps import experiments as ex
from blockmps import mps_full as mf
from blockmps import serialization as se
from blockmps.coefficients import CoefficientParseError, format_coefficients, parse_coefficients


# ---------------------------------------------------------------- container


def test_block_container_round_trip_is_exact(rng):
    x = bm.random_block_mps(6, 3, "max", rng)
    y = se.loads(se.dumps(x))
    assert y.rho == x.rho
    for a, b in zip(x.cores, y.cores):
        for occ in (0, 1):
            for n in a.blocks(occ):
                assert np.array_equal(a.blocks(occ)[n], b.blocks(occ)[n])


def test_full_container_round_trip_is_exact(rng):
    x = mf.random_mps([2] * 5, [3] * 4, rng)
    y = se.loads(se.dumps(x))
    assert all(np.array_equal(a, b) for a, b in zip(x.cores, y.cores))


def test_container_header_fields(rng):
    doc = json.loads(se.dumps(bm.random_block_mps(4, 2, 1, rng)))
    assert doc["endianness"] == "little" and doc["version"] == se.VERSION
    assert doc["K"] == 4 and doc["N"] == 2 and len(doc["rho"]) == 5


@pytest.mark.parametrize(
    "text",
    ["not json", '{"format": "other"}', '{"format": "blockmps-container", "version": 99}'],
)
def test_container_rejects_bad_input(text):
    with pytest.raises(se.ContainerError):
        se.loads(text)


def test_container_rejects_truncated_payload(rng):
    doc = json.loads(se.dumps(mf.random_mps([2] * 3, [2, 2], rng)))
    doc["cores"][0]["data"] = doc["cores"][0]["data"][:4]
    with pytest.raises(se.ContainerError):
        se.loads(json.dumps(doc))


# ---------------------------------------------------------------- coefficient files


def test_parse_symmetrizes_and_sums():
    f = parse_coefficients("# header\n\nK 3\n1B 1 2 0.5\n1B 1 2 0.25  # again\n1B 3 3 2\n2B 1 2 3 1 1.5\n")
    T = f.T()
    assert T[0, 1] == T[1, 0] == 0.75
    assert T[2, 2] == 2.0
    assert f.V()[0, 1, 2, 0] == 1.5


def test_lower_triangle_entry_feeds_same_coefficient():
    T = parse_coefficients("K 2\n1B 2 1 1.0\n1B 1 2 1.0\n").T()
    assert T[0, 1] == T[1, 0] == 2.0


@pytest.mark.parametrize(
    "text,line",
    [
        ("1B 1 1 1.0\n", 1),
        ("K 3\n1B 1 4 1.0\n", 2),
        ("K 3\n# c\n2B 1 2 3 1.0\n", 3),
        ("K 3\n1B 1 2 abc\n", 2),
        ("K 3\nXX 1\n", 2),
        ("K 3\nK 4\n", 2),
    ],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(CoefficientParseError) as info:
        parse_coefficients(text)
    assert info.value.line == line


def test_format_parse_round_trip(rng):
    T = rng.standard_normal((4, 4))
    T = T + T.T
    V = rng.standard_normal((4,) * 4)
    f = parse_coefficients(format_coefficients(T, V))
    assert np.array_equal(f.T(), T)
    assert np.array_equal(f.V(), V)


# ---------------------------------------------------------------- commands


def test_ranks_command_csv(capsys):
    assert cli.main(["ranks", "--K", "8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "operator,k,r_constructed,r_compressed,r_symbolic"
    one = [line for line in lines if line.startswith("one,")]
    assert [int(line.split(",")[3]) for line in one] == [4, 6, 8, 10, 8, 6, 4]


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["rounding", "--K", "8", "--N", "3", "--max-exponent", "5", "--out", str(a)])
    cli.main(["rounding", "--K", "8", "--N", "3", "--max-exponent", "5", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_json_report_records_rng(capsys):
    assert cli.main(["apply", "--K", "8", "--op", "one", "--eps", "1e-12", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rng"] == ex.RNG_ALGORITHM and doc["seed"] == 0
    assert doc["summary"]["center_untruncated"] == 10


def test_odd_K_is_validation_failure(capsys):
    assert cli.main(["ranks", "--K", "7"]) == cli.EXIT_VALIDATION


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("K 4\n1B 1 9 1.0\n")
    assert cli.main(["groundstate", "--file", str(bad), "--N", "2"]) == cli.EXIT_PARSE
    assert "line 2" in capsys.readouterr().err


def test_groundstate_from_file_checked(tmp_path, capsys):
    rng = np.random.default_rng(5)
    T = rng.standard_normal((4, 4))
    T = T + T.T
    V = rng.standard_normal((4,) * 4)
    V = 0.5 * (V + V.transpose(3, 2, 1, 0))
    path = tmp_path / "c.txt"
    path.write_text(format_coefficients(T, V))
    assert cli.main(["groundstate", "--file", str(path), "--N", "2", "--solver", "dmrg2", "--check", "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)["summary"]
    assert summary["passed"] and summary["error"] <= 1e-8


@pytest.mark.parametrize("N", [0, 4])
def test_groundstate_trivial_sectors(tmp_path, N, capsys):
    rng = np.random.default_rng(6)
    T = rng.standard_normal((4, 4))
    T = T + T.T
    V = rng.standard_normal((4,) * 4)
    V = 0.5 * (V + V.transpose(3, 2, 1, 0))
    path = tmp_path / "c.txt"
    path.write_text(format_coefficients(T, V))
    assert cli.main(["groundstate", "--file", str(path), "--N", str(N), "--check", "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)["summary"]
    if N == 0:
        assert summary["energy"] == 0.0
    assert summary["error"] <= 1e-10


def test_convert_round_trip(tmp_path, capsys, rng):
    x = bm.random_block_mps(6, 2, 2, rng)
    src, full, back = tmp_path / "b.json", tmp_path / "f.json", tmp_path / "b2.json"
    se.save(x, src)
    assert cli.main(["convert", "--in", str(src), "--out", str(full), "--to", "full"]) == 0
    assert cli.main(["convert", "--in", str(full), "--out", str(back), "--to", "block"]) == 0
    y = se.load(back)
    assert y.N == 2
    assert np.abs(bm.evaluate(y) - bm.evaluate(x)).max() <= 1e-12 * np.abs(bm.evaluate(x)).max()


def test_convert_w_state_ranks(tmp_path, capsys):
    w = np.zeros(8)
    w[[1, 2, 4]] = 1 / np.sqrt(3)
    src = tmp_path / "w.json"
    se.save(mf.from_dense(w, [2, 2, 2]), src)
    assert cli.main(["convert", "--in", str(src), "--out", str(tmp_path / "o.json"), "--to", "block"]) == 0
    assert capsys.readouterr().out.splitlines()[1:] == ["1,2", "2,2"]


def test_convert_mixed_state_fails(tmp_path, capsys):
    v = np.zeros(8)
    v[[0, 1]] = 1.0
    src = tmp_path / "m.json"
    se.save(mf.from_dense(v, [2, 2, 2]), src)
    assert cli.main(["convert", "--in", str(src), "--out", str(tmp_path / "o.json"), "--to", "block", "--N", "1"]) == 2
