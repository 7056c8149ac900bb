import pytest

from svi2 import phm_fn
from svi2.model_fn import InvalidArgumentError, Scenario, TwoStageInstance, uniform_weights
from svi2.svi_problem import FAIL, PASS, SKIP, SviProblem

from conftest import decoupled_instance


def test_requires_an_instance():
    with pytest.raises(InvalidArgumentError):
        SviProblem({"n": 1})


def test_info_is_read_only(small_instance):
    problem = SviProblem(small_instance)
    assert problem.info["n"] == 4 and problem.info["n_scenarios"] == 4
    with pytest.raises(TypeError):
        problem.info["n"] = 5


def test_status_tracks_calls(small_instance):
    problem = SviProblem(small_instance)
    cert = problem.certify()
    report = problem.solve(tol=1e-7)
    assert problem.status["certified"] == cert.certified
    assert problem.status["phm"] == report.status.value
    assert problem.status["iterations"] == report.iterations


def test_schur_check_skipped_without_blocks():
    assert SviProblem(decoupled_instance()).schur_check() is None


def test_player_costs(small_instance):
    problem = SviProblem(small_instance)
    report = problem.solve(tol=1e-7)
    costs = problem.player_costs(report.x, report.y)
    assert len(costs) == 2
    assert problem.status["player_costs"] == costs

    inst = decoupled_instance()
    assert SviProblem(inst).player_costs(inst.a, [sc.l for sc in inst.scenarios]) is None


def test_save_and_reload(tmp_path, small_instance):
    path = tmp_path / "inst.json"
    SviProblem(small_instance).save(path)
    again = SviProblem.from_file(path)
    assert dict(again.info["blocks"]) == dict(small_instance.blocks)


def test_oracle_check_passes_on_generated_instance(small_instance):
    rows = SviProblem(small_instance).oracle_check()
    assert [row.verdict for row in rows] == [PASS, PASS, PASS]
    assert all(row.error <= row.tolerance for row in rows)


def test_oracle_check_on_single_scenario_game(game_instance):
    one = uniform_weights(game_instance.scenarios[:1])
    problem = SviProblem(game_instance.with_scenarios(one))
    rows = problem.oracle_check()
    # m = 10 fits the enumeration, 6 + 10 fits the extensive form
    assert rows[0].verdict != SKIP
    assert rows[2].verdict != SKIP
    assert all(row.verdict != FAIL for row in rows)


def test_solve_records_step_failure():
    inst = TwoStageInstance(
        n=1,
        m=1,
        A=[[-1.0]],
        h1=[0.5],
        a=[-1.0],
        b=[1.0],
        scenarios=[Scenario(B=[[0.0]], L=[[0.0]], M=[[1.0]], h2=[0.0], l=[-1.0], u=[1.0])],
    )
    problem = SviProblem(inst)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(phm_fn.PhmStepError):
            problem.solve()
    assert problem.status["phm"] == "aborted at scenario 0"
