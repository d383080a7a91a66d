import csv
import json
import re
import subprocess
import sys

import pytest

from drsd.algorithms import DRLSParams, DRSDParams
from drsd.ambiguity import AmbiguityConfig
from drsd.cli import DEFAULTS, build_parser, main
from helpers import t1_dict


def objective_in(text):
    return float(re.search(r"^objective\s+(\S+)", text, re.M).group(1))


def test_solve_prints_report(capsys):
    assert main(["solve", "--instance", "t1.json", "--method", "drsd", "--ambiguity", "moment",
                 "--q", "1", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "objective" in out
    # T1 estimates are the in-sample optimum 1 + 2 * freq(w = 3); seed 7 draws 136 threes in 256
    assert objective_in(out) == pytest.approx(1.0 + 2.0 * 136 / 256, abs=1e-6)


@pytest.mark.xfail(strict=True, reason="one 256-draw run has standard deviation ~0.06 around 2.0; "
                                       "seed 7 lands at 2.0625")
def test_solve_seed7_within_band(capsys):
    main(["solve", "--instance", "t1.json", "--method", "drsd", "--ambiguity", "moment", "--q", "1", "--seed", "7"])
    assert 1.98 <= objective_in(capsys.readouterr().out) <= 2.02


def test_solve_drls_and_out_file(tmp_path, capsys):
    out = tmp_path / "report.txt"
    assert main(["solve", "--instance", "t2_capacity.json", "--method", "drls", "--N", "50",
                 "--ambiguity", "wasserstein", "--eps", "0.5", "--out", str(out)]) == 0
    assert "DRLS-50" in out.read_text()
    assert "wasserstein(eps=0.5)" in capsys.readouterr().out


def test_validate_ok(capsys):
    assert main(["validate", "--instance", "t4_transship.json"]) == 0
    assert "support=16" in capsys.readouterr().out


def test_validate_broken_file(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text('{\n  "name": "b",\n  "first_stage": {"c": [1.0]\n  "x": 1\n}\n')
    assert main(["validate", "--instance", str(bad)]) == 2
    assert re.search(r"line \d+:", capsys.readouterr().err)


def test_validate_semantic_error(tmp_path, capsys):
    d = t1_dict()
    d["distribution"]["probs"] = [0.5, 0.6]
    bad = tmp_path / "p.json"
    bad.write_text(json.dumps(d, indent=2))
    assert main(["validate", "--instance", str(bad)]) == 2
    assert "line" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["validate", "--instance", "/nonexistent/x.json"]) == 2


def test_replicate_row_count(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["replicate", "--instance", "t1.json", "--method", "drls", "--N", "100", "--reps", "30",
                 "--seed", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) - 1 == 32  # 30 replications + mean + hw95, after the header
    assert rows[1][1] == "1" and rows[30][1] == "30"


def test_replicate_no_timing_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["replicate", "--instance", "t3_yield.json", "--kmin", "16", "--reps", "3", "--no-timing"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_benchmark_prints_both_tables(capsys):
    assert main(["benchmark", "--instance", "t1.json", "--q", "1", "--N", "10", "40", "--reps", "2",
                 "--kmin", "16"]) == 0
    out = capsys.readouterr().out
    assert "# Iterations" in out and "Subproblem" in out
    for label in ("DRSD |", "DRLS-10 |", "DRLS-40 |"):
        assert out.count(label) == 2


@pytest.mark.parametrize("argv", [
    ["solve", "--instance", "t1.json", "--ambiguity", "wasserstein", "--q", "2"],
    ["solve", "--instance", "t1.json", "--eps", "0.5"],
    ["solve", "--instance", "t1.json", "--method", "drsd", "--N", "10"],
    ["solve", "--instance", "t1.json", "--method", "drls", "--kmin", "10"],
    ["solve", "--instance", "t1.json", "--gamma", "1.5"],
    ["solve", "--instance", "t1.json", "--bogus"],
    ["solve"],
    ["replicate", "--instance", "t1.json", "--reps", "0"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert "--instance" in err  # the flag reference is printed


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert "validate" in capsys.readouterr().err


def test_solve_failure_exit_1(tmp_path, capsys):
    d = t1_dict()
    d["first_stage"]["c"] = [-1.0]
    d["second_stage"] = {"g": [1.0], "W": [[1.0]], "r": [0.0], "T": [[1.0]]}  # y = w - x: no recourse once x > w
    path = tmp_path / "norcr.json"
    path.write_text(json.dumps(d))
    assert main(["solve", "--instance", str(path), "--kmin", "5"]) == 1
    err = capsys.readouterr().err
    assert "x=" in err and "omega=" in err


def test_defaults_match_library():
    d = DRSDParams()
    assert (DEFAULTS["tau"], DEFAULTS["gamma"], DEFAULTS["kmin"], DEFAULTS["kmax"]) == (d.tau, d.gamma, d.k_min, d.k_max)
    assert DEFAULTS["eps"] == AmbiguityConfig.wasserstein().eps
    assert DEFAULTS["q"] == AmbiguityConfig().q
    assert DEFAULTS["N"] == DRLSParams().N
    helptext = build_parser().subcommands["solve"].format_help()
    for flag in ("--tau", "--gamma", "--kmin", "--kmax", "--eps", "--q", "--N", "--seed"):
        assert flag in helptext
    assert "default 0.001" in helptext and "default 5000" in helptext


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "drsd", "validate", "--instance", "t1.json"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ok: T1")
