import configparser
import subprocess
import sys

import pytest

from tempered_hermite.cli import main
from tempered_hermite.kernels import params_from_H
from tempered_hermite.moments import cov_hermite


def run(*argv):
    return main([str(a) for a in argv])


def read_manifest(path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read(path)
    return cp


def test_cov_matches_library(tmp_path, capsys):
    out = tmp_path / "cov.csv"
    assert run("cov", "--t", 1, "--s", 1, "--k", 2, "--H", 0.75, "--lambda", 1, "--out", out) == 0
    value = float(out.read_text().splitlines()[1].split(",")[6])
    assert value == cov_hermite(1.0, 1.0, params_from_H(2, 0.75, 1.0))
    assert f"{value:.17g}" in capsys.readouterr().out
    m = read_manifest(str(out) + ".manifest")
    assert m["run"]["command"] == "cov"
    assert m["options"]["params.H"] == "0.75"
    assert len(m["outputs"]) == 1


def test_cov_zero_time(capsys):
    assert run("cov", "--t", 0) == 0
    assert "= 0 " in capsys.readouterr().out


def test_invalid_input_exit_codes(tmp_path, capsys):
    assert run("cov", "--H", 0.4) == 2
    assert "H must lie" in capsys.readouterr().err
    assert run("cumulants", "--m-max", 5) == 2
    assert run("simulate", "--reps", 0) == 2
    assert run("verify", "no-such-suite") == 2
    assert run("cov", "--t", "abc") == 2
    assert run("nonsense") == 2
    assert run("cov", "--config", tmp_path / "missing.ini") == 2


def test_regress_kappa_violation(capsys):
    assert run("regress", "--ns", "64,128", "--seeds", 1, "--kappa", 0.4) == 2
    assert "kappa < H1/2" in capsys.readouterr().err


def test_tail_bound_exit_code(capsys):
    assert run("simulate", "--lambda", 1e-4, "--M", 32, "--reps", 10) == 3
    assert "tail bound" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[params]\nH = 0.6\nlambda = 0.5\n[cov]\nt = 2\ns = 0.5\n")
    out = tmp_path / "c.csv"
    assert run("cov", "--config", cfg, "--lambda", 1.0, "--out", out) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert row[:5] == ["2.0", "0.5", "2", "0.6", "1.0"]
    assert float(row[6]) == cov_hermite(2.0, 0.5, params_from_H(2, 0.6, 1.0))


def test_cumulants_second_order_is_variance(tmp_path):
    out = tmp_path / "cum.tsv"
    assert run("cumulants", "--m-max", 2, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    c2 = float(lines[1].split("\t")[1])
    assert c2 == pytest.approx(cov_hermite(1.0, 1.0, params_from_H(2, 0.75, 1.0)), rel=1e-6)


def test_verify_suite_passes(tmp_path):
    out = tmp_path / "v.tsv"
    assert run("verify", "lemma-int", "--out", out) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 37 and all(r.endswith("PASS") for r in rows[1:])


def test_simulate_rerun_and_tamper(tmp_path, capsys):
    prefix = tmp_path / "sim" / "paths"
    assert run("simulate", "--M", 64, "--reps", 300, "--seed", 4, "--times", "0,0.5,1", "--out", prefix) == 0
    csv = tmp_path / "sim" / "paths.csv"
    assert csv.exists() and (tmp_path / "sim" / "paths.bin").exists()
    manifest = str(prefix) + ".manifest"
    assert run("rerun", manifest) == 0
    csv.write_text(csv.read_text() + "tampered\n")
    assert run("rerun", manifest) == 1
    assert "DIFFERS" in capsys.readouterr().out


def test_fbm_scheme_and_seeds_one(tmp_path):
    assert run("simulate", "--scheme", "fbm", "--n-grid", 8, "--reps", 200, "--out", tmp_path / "f") == 0
    assert (tmp_path / "f.csv").read_text().splitlines()[0].count(",") == 8
    out = tmp_path / "r.csv"
    assert run("regress", "--ns", "32,64", "--seeds", 1, "--x-eval", "0", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and lines[1].endswith(",1")


@pytest.mark.parametrize("threads", ["1", "4"])
def test_rerun_under_thread_counts(tmp_path, monkeypatch, threads):
    out = tmp_path / "reg.csv"
    assert run("regress", "--ns", "32,64", "--seeds", 2, "--out", out) == 0
    monkeypatch.setenv("TEMPERED_THREADS", threads)
    assert run("rerun", str(out) + ".manifest") == 0


def test_console_script_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tempered_hermite.cli", "cov", "--t", "0.5"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "cov(0.5, 1)" in res.stdout
