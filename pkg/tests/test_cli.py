import csv
import io
import json

import pytest

from proxode.cli import main


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_solve_summary(capsys):
    code, out = run(["solve", "--benchmark", "scalar", "--scheme", "cn", "--step", "0.01",
                     "--inner-tol", "1e-12"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert rows[0]["solver"] == "cn" and float(rows[0]["final_error"]) < 1e-4


def test_solve_trajectory_json(capsys):
    code, out = run(["solve", "--benchmark", "scalar", "--scheme", "be", "--step", "0.25",
                     "--trajectory", "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert data["times"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_solve_adaptive(capsys):
    code, out = run(["solve", "--benchmark", "scalar", "--scheme", "dopri5", "--tol", "1e-8"],
                    capsys)
    assert code == 0 and "dopri5" in out.out


def test_solver_failure_exit(capsys):
    code, out = run(["solve", "--scheme", "be", "--step", "0.0005", "--eta", "0.1",
                     "--tend", "0.01"], capsys)
    assert code == 2
    assert "failed" in out.out


def test_invalid_flag_exit(capsys):
    assert run(["solve", "--scheme", "rk4"], capsys)[0] == 3
    assert run(["solve", "--step", "-1"], capsys)[0] == 3
    assert run(["stability", "--method", "FE", "--re-range", "1"], capsys)[0] == 3


def test_stability_csv(capsys, tmp_path):
    path = tmp_path / "fe.csv"
    code, _ = run(["stability", "--method", "fe", "--re-range=-2.5,0.5", "--im-range=-1,1",
                   "--resolution", "5", "--out", str(path)], capsys)
    assert code == 0
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 25
    for r in rows:
        assert int(r["inside"]) == (abs(1 + complex(float(r["re"]), float(r["im"]))) < 1)


def test_sweep(capsys, tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"benchmark": "scalar", "scheme": ["be", "heun"],
                               "step": [0.1, 0.05], "tol": [1e-4], "format": "json"}))
    code, out = run(["sweep", str(cfg)], capsys)
    assert code == 0
    assert len(json.loads(out.out)["rows"]) == 3


def test_sweep_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"scheme": "be", "colour": "red"}))
    code, out = run(["sweep", str(cfg)], capsys)
    assert code == 3 and "colour" in out.err


def test_sweep_missing_file(capsys, tmp_path):
    assert run(["sweep", str(tmp_path / "nope.json")], capsys)[0] == 3


def test_order(capsys):
    code, out = run(["order", "--benchmark", "scalar", "--scheme", "cn",
                     "--inner-tol", "1e-12"], capsys)
    assert code == 0
    assert 1.7 <= json.loads(out.out)["order"] <= 2.3


def test_compare_backends(capsys):
    code, out = run(["compare-backends", "--n-values", "16,32", "--steps", "5",
                     "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert {r["solver"] for r in data["rows"]} == {"prox-fr", "fp", "newton"}
    assert "prox_time_vs_nfe_r2" in data["metadata"]
