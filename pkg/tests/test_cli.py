import json

import numpy as np
import pytest

from digimkt.cli import run, state_from_dict, state_to_dict
from digimkt.equilibrium import SolveConfig, solve
from digimkt.model import generate_instance


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / "a.json"
    assert run(["gen", "--agents", "2", "--categories", "1", "--songs", "1", "--seed", "7", "--out", str(path)]) == 0
    return path


def solve_args(tmp_path, instance, *extra):
    return [
        "solve",
        "--instance", str(instance),
        "--state-out", str(tmp_path / "s.json"),
        "--cert-out", str(tmp_path / "c.json"),
        "--log-out", str(tmp_path / "log.csv"),
        *extra,
    ]


def test_gen_is_byte_identical(tmp_path, instance_file):
    again = tmp_path / "b.json"
    run(["gen", "--agents", "2", "--categories", "1", "--songs", "1", "--seed", "7", "--out", str(again)])
    assert again.read_bytes() == instance_file.read_bytes()


def test_solve_then_certify(tmp_path, instance_file):
    code = run(solve_args(tmp_path, instance_file, "--rule", "multiplicative", "--eta", "0.1",
                          "--tol", "1e-6", "--max-iters", "20000"))
    assert code in (0, 2)
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == (
        "iter,p_0,p_1,res_cond1,res_cond2,res_cond3,total_earnings"
    )
    if code == 0:
        out = tmp_path / "cert2.json"
        assert run(["certify", "--instance", str(instance_file), "--state", str(tmp_path / "s.json"),
                    "--tol", "1e-6", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["passed"] is True
        assert run(["welfare1", "--instance", str(instance_file), "--state", str(tmp_path / "s.json"),
                    "--out", str(tmp_path / "p.json")]) == 0


def test_non_convergence_exit(tmp_path):
    inst = tmp_path / "hard.json"
    run(["gen", "--agents", "3", "--categories", "2", "--songs", "2", "--family", "pwl_concave",
         "--seed", "0", "--out", str(inst)])
    report = tmp_path / "r.json"
    assert run(["--report", str(report), *solve_args(tmp_path, inst, "--max-iters", "5")]) == 2
    rep = json.loads(report.read_text())
    assert rep["outcome"] == "max_iters" and rep["command"] == "solve"
    assert len(rep["artifacts"]) == 3


def test_certify_fail_exit(tmp_path, instance_file):
    run(solve_args(tmp_path, instance_file, "--max-iters", "0"))
    code = run(["certify", "--instance", str(instance_file), "--state", str(tmp_path / "s.json"),
                "--out", str(tmp_path / "c2.json")])
    assert code == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--instance", "missing.json"],
        ["solve"],
        ["gen", "--agents", "2", "--categories", "1", "--songs", "1", "--out", "x.json", "--bogus"],
        ["gen", "--agents", "0", "--categories", "1", "--songs", "1", "--out", "x.json"],
        ["frobnicate"],
    ],
)
def test_input_errors_exit_3(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 3


def test_schema_error_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"agents": [], "categories": []}))
    assert run(solve_args(tmp_path, bad)) == 3
    assert "agents" in capsys.readouterr().err


def test_bad_state_exit_3(tmp_path, instance_file):
    state = tmp_path / "s.json"
    state.write_text(json.dumps({"prices": [1.0], "x": [], "d": [], "y": [], "budgets": []}))
    assert run(["certify", "--instance", str(instance_file), "--state", str(state)]) == 3


def test_state_round_trip():
    inst = generate_instance(3, 2, 2, "linear", seed=1)
    r = solve(inst, SolveConfig(max_iters=30))
    doc = json.loads(json.dumps(state_to_dict(inst, r.state)))
    back = state_from_dict(inst, doc)
    assert back.prices.tolist() == r.state.prices.tolist()
    assert back.y.tolist() == r.state.y.tolist()
    assert back.budgets.tolist() == r.state.budgets.tolist()
    assert back.x.bread.tolist() == r.state.x.bread.tolist()
    assert back.x.excess.tolist() == r.state.x.excess.tolist()
    for a, b in zip(back.x.songs, r.state.x.songs):
        assert np.array_equal(a, b)


def test_welfare2(tmp_path, instance_file):
    targets = tmp_path / "t.json"
    targets.write_text(json.dumps({"targets": [0.5, 0.5]}))
    out = tmp_path / "w.json"
    argv = solve_args(tmp_path, instance_file, "--max-iters", "3000")
    code = run(["welfare2", *argv[1:], "--targets", str(targets), "--transfer-out", str(out)])
    assert code in (0, 1, 2)
    doc = json.loads(out.read_text())
    assert sum(doc["w"]) == pytest.approx(doc["gamma"])
    assert set(doc) >= {"alpha", "w", "gamma", "verdict"}


def test_welfare2_bad_targets(tmp_path, instance_file):
    targets = tmp_path / "t.json"
    targets.write_text("[1.0]")
    assert run(["welfare2", "--instance", str(instance_file), "--targets", str(targets)]) == 3


def test_log_env(monkeypatch, tmp_path, instance_file):
    monkeypatch.setenv("DIGIMKT_LOG", "trace")
    assert run(solve_args(tmp_path, instance_file, "--max-iters", "10")) in (0, 2)
