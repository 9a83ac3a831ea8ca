import numpy as np
import pytest
import yaml

from leoalloc.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, _parse_seeds, main
from leoalloc.instance import load_instance


def test_parse_seeds():
    assert _parse_seeds("1-3,7") == [1, 2, 3, 7]
    assert _parse_seeds("5") == [5]


def test_generate_is_deterministic(tmp_path):
    assert main(["generate", "--seed", "4", "--out", str(tmp_path / "a.yaml")]) == EXIT_OK
    assert main(["generate", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "a.yaml").read_text() == (tmp_path / "instance_seed4.yaml").read_text()
    inst = load_instance(tmp_path / "a.yaml")
    assert (inst.M, inst.K, inst.N) == (3, 10, 10)


def test_solve_writes_solution(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("K: 3\nN: 2\n")
    code = main(["solve", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = yaml.safe_load((tmp_path / "solution.yaml").read_text())
    assert doc["status"] == "Converged" and doc["satisfaction"] == 1.0
    assert doc["total_power_dbw"] == pytest.approx(10 * np.log10(doc["total_power_w"]), rel=1e-12)
    assert "alg1: status=Converged" in capsys.readouterr().out


def test_greedy_command(tmp_path):
    assert main(["greedy", "--seed", "1", "--out", str(tmp_path)]) in (EXIT_OK, EXIT_INFEASIBLE)
    doc = yaml.safe_load((tmp_path / "solution.yaml").read_text())
    assert doc["algorithm"] == "greedy"


def test_infeasible_exit_code(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("K: 3\nN: 2\ndemand_per_user: 5.0e10\n")
    assert main(["solve", "--config", str(cfg)]) == EXIT_INFEASIBLE
    assert main(["greedy", "--config", str(cfg)]) == EXIT_INFEASIBLE


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", "--bogus"]) == EXIT_USAGE
    assert main(["solve", "--rho", "0"]) == EXIT_USAGE
    assert main(["solve", "--instance", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    bad = tmp_path / "bad.yaml"
    bad.write_text("M: 3\n")
    assert main(["validate", "--instance", str(bad)]) == EXIT_USAGE
    assert "instance format error" in capsys.readouterr().err
    assert main(["experiment"]) == EXIT_USAGE


def test_validate(tmp_path):
    path = tmp_path / "i.yaml"
    main(["generate", "--seed", "1", "--out", str(path)])
    assert main(["validate", "--instance", str(path)]) == EXIT_OK


def test_experiment_and_manifest_replay(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("K: 3\nN: 2\n")
    out = tmp_path / "demand"
    args = ["experiment", "--experiment", "demand", "--sweep", "80,100", "--seeds", "1-2", "--config", str(cfg)]
    assert main(args + ["--out", str(out)]) == EXIT_OK
    assert main(["experiment", "--manifest", str(out / "manifest.json"), "--out", str(tmp_path / "r")]) == EXIT_OK
    a = (out / "results.csv").read_text().splitlines()[1:]
    b = (tmp_path / "r" / "results.csv").read_text().splitlines()[1:]
    assert a == b and len(a) == 1 + 2 * 2 * 2
    assert "80000000.0" in a[1]
