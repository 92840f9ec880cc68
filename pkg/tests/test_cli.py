import json
import subprocess
import sys

import pytest

from unimodal_drcc import cli, errors


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_exit_code_table():
    assert cli.exit_code_for(errors.MasterInfeasible) == cli.EXIT_INFEASIBLE
    assert cli.exit_code_for(errors.SolverFailure) == cli.EXIT_SOLVER
    assert cli.exit_code_for(errors.IterationLimitExceeded) == cli.EXIT_SOLVER
    assert cli.exit_code_for(errors.ParseError) == cli.EXIT_INPUT
    assert cli.exit_code_for(FileNotFoundError) == cli.EXIT_INPUT
    assert cli.exit_code_for(errors.DrccError) == cli.EXIT_ERROR


def test_separate_matches_brute_force(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"R_tilde": 1.0, "c_tilde": 0.0, "h_lo": 0.1, "h_hi": 0.6}))
    code, out, _ = run(["separate", str(inst), "--brute-force", "--grid", "300"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["brute_force"]["violation"] == pytest.approx(res["violation"], abs=1e-6)


def test_separate_bad_instance(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"R_tilde": 1.0, "c_tilde": 0.0, "h_lo": 0.6, "h_hi": 0.1}))
    code, _, err = run(["separate", str(inst)], capsys)
    assert code == cli.EXIT_INPUT and "DomainError" in err


def test_missing_input(capsys):
    code, _, err = run(["separate", "/nonexistent.json"], capsys)
    assert code == cli.EXIT_INPUT


def test_gen_data_then_reliability(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"mode": [0.0], "drift": [1.0], "shape": [[1.0]]}))
    pool = tmp_path / "pool.csv"
    code, out, _ = run(["gen-data", str(spec), "--size", "400", "--seed", "1", "--out", str(pool)], capsys)
    assert code == 0 and json.loads(out)["samples"] == 400
    sol = tmp_path / "sol.json"
    sol.write_text(json.dumps({"epsilon": 0.05, "rows": [{"name": "big", "a": [1.0], "b": 1e6}]}))
    code, out, _ = run(["reliability", str(sol), str(pool), "--batches", "2", "--batch-size", "200"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["joint_reliability_percent"]["min"] == 100.0
    assert res["rows_above_floor"] == []


def test_solve_infeasible_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "case": "case3ring", "load_scale": 1.0, "wind": [[2, 20.0]],
        "line_limits": [[1, 2, 0.01], [1, 3, 0.01], [3, 2, 0.01]],
        "synthetic": {"mode": [-1.0], "drift": [2.0], "shape": [[9.0]], "size": 2000},
        "n_data": 200, "n_groups": 5, "variants": ["D1"], "batches": 2, "batch_size": 500,
        "output_dir": "out",
    }))
    code, _, err = run(["solve", str(cfg)], capsys)
    assert code == cli.EXIT_INFEASIBLE and "MasterInfeasible" in err


def test_solve_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _, _ = run(["solve", str(cfg)], capsys)
    assert code == cli.EXIT_INPUT


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "unimodal_drcc", "--help"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "separate" in res.stdout
