import argparse
import csv
import json

import pytest

from svi2 import game_fn, model_fn
from svi2.console import helper, svi2_tool
from svi2.model import mcore
from svi2.model_fn import Scenario, TwoStageInstance
from svi2.phm_fn import HistoryRow

SMALL = ["--n1", "2", "--n2", "2", "--m1", "2", "--m2", "2", "--scenarios", "4"]


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / "instance.json"
    code = svi2_tool.main(["generate", *SMALL, "--seed", "3", "--out", str(path)])
    assert code == 0
    return path


def test_generate_writes_document(instance_file):
    doc = json.loads(instance_file.read_text())
    assert (doc["n"], doc["m"], len(doc["scenarios"])) == (4, 4, 4)
    assert doc["blocks"]["n1"] == 2


def test_generate_rejects_bad_dimensions(tmp_path):
    code = svi2_tool.main(["generate", "--n1", "0", "--out", str(tmp_path / "x.json")])
    assert code == mcore.ExitCode.INPUT


def test_certify(tmp_path, instance_file):
    out = tmp_path / "cert.json"
    assert svi2_tool.main(["certify", str(instance_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["certificate"]["certified"]
    assert doc["schur"]["certified"]
    assert doc["version"]


def test_solve_writes_report_and_history(tmp_path, instance_file):
    out = tmp_path / "report.json"
    code = svi2_tool.main(["solve", str(instance_file), "--tol", "1e-7", "--out", str(out)])
    assert code == mcore.ExitCode.OK
    doc = json.loads(out.read_text())
    assert doc["report"]["status"] == mcore.Status.CONVERGED.value
    assert doc["config"]["tol"] == 1e-7
    inst = model_fn.load_instance(instance_file)
    expected = game_fn.expected_player_costs(inst, doc["report"]["x"], doc["report"]["y"])
    assert doc["player_costs"] == pytest.approx(list(expected), rel=1e-12, abs=1e-12)

    with open(tmp_path / "report_history.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "#Log svi2"
    assert rows[3][:3] == ["nu", "res", "step"]
    assert len(rows) - 4 == doc["report"]["iterations"]


def test_solve_budget_exit_code(tmp_path, instance_file):
    out = tmp_path / "report.json"
    code = svi2_tool.main(
        ["solve", str(instance_file), "--tol", "1e-14", "--max-iter", "2", "--out", str(out)]
    )
    assert code == mcore.ExitCode.BUDGET


def test_bad_instance_is_an_input_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert svi2_tool.main(["certify", str(bad)]) == mcore.ExitCode.INPUT
    assert svi2_tool.main(["solve", str(tmp_path / "missing.json")]) == mcore.ExitCode.INPUT


def test_oracle_check(tmp_path, instance_file):
    out = tmp_path / "oracle.json"
    assert svi2_tool.main(["oracle-check", str(instance_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["checks"]) == 3


def test_experiment_smoke_profile(tmp_path):
    out_dir = tmp_path / "exp"
    code = svi2_tool.main(
        ["experiment", "--profile", "smoke", "--threads", "2", "--out", str(out_dir)]
    )
    assert code == 0
    for name in ("stats.csv", "trajectories.csv", "metadata.json"):
        assert (out_dir / name).exists()
    meta = json.loads((out_dir / "metadata.json").read_text())
    assert meta["config"]["threads"] == 2


def test_experiment_config_file(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"n_grid": [4], "replications": 1, "eval_scenarios": 5}))
    out_dir = tmp_path / "exp"
    code = svi2_tool.main(
        ["experiment", str(cfg), "--profile", "smoke", "--seed", "11", "--out", str(out_dir)]
    )
    assert code == 0
    meta = json.loads((out_dir / "metadata.json").read_text())
    assert meta["config"]["n_grid"] == [4]
    assert meta["config"]["seed"] == 11
    assert meta["config"]["generator"]["m1"] == 2


def test_experiment_unknown_profile(tmp_path):
    code = svi2_tool.main(["experiment", "--profile", "nope", "--out", str(tmp_path)])
    assert code == mcore.ExitCode.INPUT


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("SVI2_THREADS", "3")
    assert svi2_tool.resolve_threads(argparse.Namespace(threads=None)) == 3
    assert svi2_tool.resolve_threads(argparse.Namespace(threads=5)) == 5
    monkeypatch.setenv("SVI2_THREADS", "many")
    with pytest.raises(svi2_tool.InvalidArgumentError):
        svi2_tool.resolve_threads(argparse.Namespace(threads=None))
    with pytest.raises(svi2_tool.InvalidArgumentError):
        svi2_tool.resolve_threads(argparse.Namespace(threads=0))


def test_output_helper_history_file(tmp_path):
    path = tmp_path / "history.csv"
    with helper.OutputHelper(config={"r": 1.0}) as log:
        log.set_writer(to=path)
        log.write_header(["nu", "res", "step", "x_0"])
        log.write_history_row(HistoryRow(1, float("nan"), 0.5, [0.25]))
        log.write_history_row(HistoryRow(2, 1e-3, 0.125, [0.3]))
        assert log.row_count == 2
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert json.loads(rows[2][1]) == {"r": 1.0}
    assert rows[4] == ["1", "nan", "0.5", "0.25"]
    assert rows[5] == ["2", "0.001", "0.125", "0.3"]


def test_output_helper_csv_document(tmp_path):
    path = tmp_path / "doc.csv"
    helper.OutputHelper(config={"a": 1}).write_document({"res": 0.5}, path, fmt="csv")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["key", "value"]
    assert ["res", "0.5"] in rows


def _one_dim_instance(A, M, h1=0.0):
    """n = m = 1 instance with no coupling (B = L = 0) and unit boxes"""

    return TwoStageInstance(
        n=1,
        m=1,
        A=[[A]],
        h1=[h1],
        a=[-1.0],
        b=[1.0],
        scenarios=[Scenario(B=[[0.0]], L=[[0.0]], M=[[M]], h2=[0.0], l=[-1.0], u=[1.0])],
    )


def test_certify_skew_instance_is_uncertified(tmp_path):
    path = tmp_path / "skew.json"
    inst = TwoStageInstance(
        n=2,
        m=1,
        A=[[0.0, 5.0], [-5.0, 0.0]],
        h1=[0.0, 0.0],
        a=[-1.0, -1.0],
        b=[1.0, 1.0],
        scenarios=[
            Scenario(B=[[0.0], [0.0]], L=[[0.0, 0.0]], M=[[1.0]], h2=[0.0], l=[-1.0], u=[1.0])
        ],
    )
    model_fn.save_instance(inst, path)
    out = tmp_path / "cert.json"
    code = svi2_tool.main(["certify", str(path), "--out", str(out)])
    assert code == mcore.ExitCode.UNCERTIFIED
    doc = json.loads(out.read_text())
    assert not doc["certificate"]["certified"]
    assert doc["schur"] is None


def test_oracle_check_fails_on_indefinite_recourse(tmp_path):
    # M = -1: y in N_[-1,1](y) holds at -1, 0 and 1
    path = tmp_path / "indefinite.json"
    model_fn.save_instance(_one_dim_instance(A=1.0, M=-1.0), path)
    out = tmp_path / "oracle.json"
    with pytest.warns(RuntimeWarning):
        code = svi2_tool.main(["oracle-check", str(path), "--out", str(out)])
    assert code == mcore.ExitCode.NUMERIC
    checks = json.loads(out.read_text())["checks"]
    verdicts = {row["check"]: row["verdict"] for row in checks}
    assert verdicts["second stage vs enumeration"] == "FAIL"
    assert "FAIL" in verdicts.values()


def test_solve_step_failure_writes_error_document(tmp_path):
    # A + rI = 0 at r = 1 makes the first Newton system singular
    path = tmp_path / "singular.json"
    model_fn.save_instance(_one_dim_instance(A=-1.0, M=1.0, h1=0.5), path)
    out = tmp_path / "report.json"
    with pytest.warns(RuntimeWarning):
        code = svi2_tool.main(["solve", str(path), "--r", "1.0", "--out", str(out)])
    assert code == mcore.ExitCode.NUMERIC
    doc = json.loads(out.read_text())
    assert doc["scenario"] == 0
    assert doc["iterations"] == 0
    assert "error" in doc and "report" not in doc
    assert doc["history_csv"].endswith("report_history.csv")


def test_experiment_csv_metadata(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"n_grid": [4], "replications": 1, "eval_scenarios": 5}))
    out_dir = tmp_path / "exp"
    code = svi2_tool.main(
        ["experiment", str(cfg), "--profile", "smoke", "--format", "csv", "--out", str(out_dir)]
    )
    assert code == 0
    assert not (out_dir / "metadata.json").exists()
    with open(out_dir / "metadata.csv", newline="", encoding="utf-8") as fh:
        rows = dict(csv.reader(fh))
    assert rows["key"] == "value"
    assert rows["nesting"] == "independent"
    assert json.loads(rows["config"])["n_grid"] == [4]
    assert len(json.loads(rows["cells"])) == 1
