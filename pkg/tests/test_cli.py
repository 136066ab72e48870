import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fpme import cli
from fpme import solver as S
from fpme.kernel import Params


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return dict(line.split(" = ", 1) for line in text.strip().splitlines())


def test_exponents(capsys):
    code, out, _ = run(capsys, "exponents", "--alpha", "0.5", "--m", "2", "--d", "1")
    assert code == 0
    t = table(out)
    assert float(t["b"]) == pytest.approx(1 / 6) and t["regime"] == "slow"
    code, out, _ = run(capsys, "exponents", "--alpha", "1", "--m", "3", "--d", "3", "--format", "json")
    data = json.loads(out)
    assert data["a"] == pytest.approx(3 / 8) and data["m_c"] == pytest.approx(1 / 3)


def test_constants_fast_and_slow(capsys):
    code, out, _ = run(capsys, "constants", "--alpha", "1", "--m", "0.5")
    t = table(out)
    assert code == 0 and float(t["c_star"]) == pytest.approx(9.0) and float(t["gamma_star"]) == 2.0
    code, out, _ = run(capsys, "constants", "--alpha", "0.5", "--m", "2")
    assert float(table(out)["free_boundary_constant"]) == pytest.approx(0.090450156819783457, rel=1e-13)


def test_kernel_table(capsys):
    code, out, _ = run(capsys, "kernel", "--alpha", "0.5", "--m", "2", "--points", "5")
    lines = out.strip().splitlines()
    assert code == 0 and lines[3] == "eta,Q,dQ" and len(lines) == 9
    code, _, err = run(capsys, "kernel", "--points", "1")
    assert code == 2 and "--points" in err


@pytest.mark.parametrize(
    "argv",
    [
        ("exponents", "--alpha", "0.5", "--m", "0.2", "--d", "3"),  # below m_c
        ("exponents", "--alpha", "1.5"),
        ("exponents", "--d", "x"),
        ("nosuchcommand",),
        ("validate", "--only", "kernel,bogus"),
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.3\nm = 3  # trailing\nformat = json\n")
    code, out, _ = run(capsys, "exponents", "--config", str(cfg), "--m", "2")
    data = json.loads(out)
    # alpha from the file, m from the flag
    assert data["b"] == pytest.approx(0.3 / 3.0)


@pytest.mark.parametrize(
    "body,needle",
    [("alpha 0.3\n", ":1: expected"), ("\nfoo = 1\n", ":2: unknown key"), ("d = two\n", ":1: d expects int")],
)
def test_config_errors_name_the_line(tmp_path, capsys, body, needle):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    code, _, err = run(capsys, "exponents", "--config", str(cfg))
    assert code == 2 and needle in err


def test_missing_config(tmp_path, capsys):
    code, _, err = run(capsys, "exponents", "--config", str(tmp_path / "none.cfg"))
    assert code == 2 and "config" in err


@pytest.fixture(scope="module")
def slow_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "slow.csv"
    code = cli.main(["profile", "--alpha", "0.5", "--m", "2", "--mass", "2.5", "--grid-size", "128", "--out", str(out)])
    assert code == 0
    return out


def test_profile_csv_round_trip(slow_csv):
    text = slow_csv.read_text()
    meta, z, U = cli.read_profile_csv(text)
    assert meta["status"] == "converged" and meta["regime"] == "slow"
    assert float(meta["final_mass"]) == pytest.approx(2.5, rel=1e-12)
    assert meta["mass"] == "2.5"
    assert cli.profile_csv(meta, z, U) == text
    # values agree with a direct solve to the last bit
    u, _ = S.solve_slow(Params(0.5, 2.0, 1), I=128)
    uM = S.rescale_to_mass(u, 2.5)
    assert np.array_equal(z, uM.nodes) and np.array_equal(U, uM.values)
    report = json.loads((slow_csv.parent / "slow.csv.report.json").read_text())
    assert report["status"] == "converged" and report["monotone_certificate"] is True


def test_profile_is_deterministic(slow_csv, tmp_path):
    again = tmp_path / "again.csv"
    assert cli.main(["profile", "--alpha", "0.5", "--m", "2", "--mass", "2.5", "--grid-size", "128", "--out", str(again)]) == 0
    assert again.read_bytes() == slow_csv.read_bytes()


def test_profile_fast_json(tmp_path):
    out = tmp_path / "fast.json"
    code = cli.main(["profile", "--alpha", "0.5", "--m", "0.5", "--grid-size", "128", "--format", "json", "--out", str(out)])
    data = json.loads(out.read_text())
    assert code == 0 and data["meta"]["regime"] == "fast"
    assert float(data["meta"]["c_star"]) == pytest.approx(9 * np.pi)
    assert len(data["z"]) == len(data["U"]) == 129


def test_profile_failure_writes_partial_output(tmp_path, capsys):
    out = tmp_path / "fail.csv"
    code, _, err = run(capsys, "profile", "--grid-size", "64", "--max-iter", "2", "--out", str(out))
    assert code == 3 and "error" in err
    meta, z, U = cli.read_profile_csv(out.read_text())
    assert meta["status"] == "failed" and meta["iterations"] == "2"
    assert z.size == U.size == 65
    report = json.loads((tmp_path / "fail.csv.report.json").read_text())
    assert report["status"] == "failed"


def test_linear_command(capsys):
    code, out, _ = run(capsys, "linear", "--alpha", "1", "--grid-size", "10", "--z-max", "5")
    meta, z, U = cli.read_profile_csv(out)
    assert code == 0 and meta["regime"] == "linear"
    assert np.allclose(U, np.exp(-z * z / 4) / np.sqrt(4 * np.pi), atol=1e-12)


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "x.txt"
    target.write_text("old")

    def broken(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", broken)
    with pytest.raises(OSError):
        cli._atomic_write(str(target), "new")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


def test_workers_env(monkeypatch):
    monkeypatch.setenv("FPME_NUM_THREADS", "3")
    assert cli._workers() == 3
    monkeypatch.setenv("FPME_NUM_THREADS", "0")
    assert cli._workers() >= 1
    monkeypatch.setenv("FPME_NUM_THREADS", "many")
    with pytest.raises(cli.UsageError):
        cli._workers()


def test_validate_subset(tmp_path, capsys):
    out = tmp_path / "v.json"
    code, _, err = run(capsys, "validate", "--only", "kernel,operator", "--out", str(out))
    data = json.loads(out.read_text())
    assert code == 0 and data["passed"] is True
    assert "PASS kernel_closed_form" in err


def test_module_entry_point():
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    proc = subprocess.run(
        [sys.executable, "-m", "fpme", "exponents", "--alpha", "0.5", "--m", "0.2", "--d", "3"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 2 and "error" in proc.stderr
