import csv
import io
import json

import pytest

from pmllab import bounds as B
from pmllab.cli import RunConfig, lemma_bound, lemma_check, main, parse_assignment, run
from pmllab.core_prob import ProbError
from pmllab.instances import builtin


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bound_sweep_values(capsys):
    assert main(["bound", "--instance", "noiseless-l2", "--sweep", "L=2,4,8"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [int(r["L"]) for r in rows] == [2, 4, 8]
    got = [float(r["prop1"]) for r in rows]
    assert got == pytest.approx([0.5, 2 / 3, 0.8])
    assert all(r["wall_ms"] == "" for r in rows)


def test_csv_bounds_reproducible_from_echoed_params(capsys):
    main(["bound", "--instance", "bsc-n8-l4", "--sweep", "L=2,16", "--sweep", "n=2,3"])
    inst = builtin("bsc-n8-l4")
    for r in _rows(capsys.readouterr().out):
        rep = B.channel_bounds(inst["p_x"], inst["ch"], int(r["L"]), J=int(r["J"]), n=int(r["n"]))
        assert float(r["prop1"]) == rep["prop1"]
        assert float(r["dt_plus"]) == rep["dt_plus"]


def test_verify_lemma_canonical(capsys):
    assert main(["verify-lemma", "--trials", "200000", "--seed", "1"]) == 0
    row = _rows(capsys.readouterr().out)[0]
    est, lo, hi = float(row["empirical"]), float(row["ci_lo"]), float(row["ci_hi"])
    assert lo <= 1 / 3 <= hi and abs(est - 1 / 3) < 0.01


def test_lemma_check_rows():
    out = lemma_check([1.0, 1.0], [0.75, 0.25], [0.5, 0.5], 1, 1, 50000, 3)
    row = out["atoms"][0]
    assert row["exact"] == pytest.approx(1 / 3) and row["bound"] == pytest.approx(0.6)
    assert row["within_3sigma"] and row["dominated"]
    assert lemma_bound(1.5, 1, 1) == pytest.approx(0.6)


def test_simulate_and_out_dir_byte_identical(tmp_path, capsys):
    args = ["simulate", "--instance", "noiseless-l2", "--trials", "3000", "--seed", "7", "--sweep", "L=2,4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["points"] == 2 and summary["status"] == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["results.csv", "simulate_0000.json", "simulate_0001.json"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    report = json.loads((tmp_path / "a" / "simulate_0000.json").read_text())
    assert report["seed"] == 7 and report["passed"]


def test_timing_fills_wall_ms(capsys):
    main(["bound", "--instance", "noiseless-l2", "--timing"])
    assert float(_rows(capsys.readouterr().out)[0]["wall_ms"]) >= 0


def test_dispersion_gp_and_jscc(capsys):
    assert main(["dispersion", "--instance", "gp-dirty-n6", "--param", "eps=0.3", "--sweep", "n=36,64"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[0]["log_L"]) < float(rows[1]["log_L"])
    assert main(["dispersion", "--instance", "jscc-bsc-n3", "--param", "n=2000", "--param", "k=1000"]) == 0
    row = _rows(capsys.readouterr().out)[0]
    assert row["satisfied"] in ("1.0", "0.0") and float(row["C"]) > 0


@pytest.mark.parametrize(
    "argv",
    [
        ["bound", "--instance", "no-such-instance"],
        ["bound", "--instance", "noiseless-l2", "--sweep", "L=0"],
        ["bound"],
        ["dispersion", "--instance", "noiseless-l2"],
        ["bound", "--instance", "noiseless-l2", "--sweep", "L=1,2,3", "--sweep-cap", "2"],
    ],
)
def test_errors_exit_2_with_json(argv, capsys):
    assert main(argv) == 2
    err = json.loads(capsys.readouterr().out)
    assert err["subcommand"] == argv[0] and err["message"]


def test_parse_assignment():
    assert parse_assignment("L=2,4", True) == ("L", [2, 4])
    assert parse_assignment("eps=0.1", False) == ("eps", 0.1)
    with pytest.raises(ProbError):
        parse_assignment("novalue", False)


def test_run_config_validation():
    with pytest.raises(ProbError):
        RunConfig("bound", "noiseless-l2", trials=0)
    cfg = RunConfig("bound", "noiseless-l2", sweep={"L": [4, 2], "J": [1]})
    assert cfg.points() == [{"J": 1, "L": 4}, {"J": 1, "L": 2}]
    status, results, _ = run(cfg)
    assert status == 0 and results[1].bounds["prop1"] == pytest.approx(0.5)
