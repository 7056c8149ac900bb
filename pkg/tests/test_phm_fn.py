import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from svi2 import generator_fn, model_fn, phm_fn, second_stage_fn
from svi2.generator_fn import GeneratorConfig
from svi2.model import mcore
from svi2.model_fn import InvalidArgumentError, Scenario, TwoStageInstance

from conftest import decoupled_instance


def _uncertified_instance(A):
    return TwoStageInstance(
        n=1,
        m=1,
        A=[[A]],
        h1=[0.5],
        a=[-1.0],
        b=[1.0],
        scenarios=[Scenario(B=[[0.0]], L=[[0.0]], M=[[1.0]], h2=[0.0], l=[-1.0], u=[1.0])],
    )


def test_init_defaults(small_instance):
    state = phm_fn.init(small_instance, r=1.0)
    assert state.nu == 0
    assert_array_equal(state.x_bar, model_fn.mid(np.zeros(4), small_instance.a, small_instance.b))
    assert_array_equal(state.ws, 0.0)
    assert state.xs.shape == (small_instance.n_scenarios, small_instance.n)


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_init_rejects_nonpositive_penalty(small_instance, r):
    with pytest.raises(InvalidArgumentError):
        phm_fn.init(small_instance, r=r)


def test_step_invariants(small_instance):
    state = phm_fn.init(small_instance, r=1.0)
    for _ in range(25):
        state = phm_fn.step(small_instance, state)
        weighted = np.sum(small_instance.weights[:, None] * state.ws, axis=0)
        assert np.max(np.abs(weighted)) <= 1e-10
        for row in state.xs:
            assert_array_equal(row, state.x_bar)
    assert state.nu == 25


def test_decoupled_instance_solves_first_stage_alone():
    inst = decoupled_instance()
    report = phm_fn.solve(inst, tol=1e-8)
    assert report.converged
    assert_allclose(report.x, [0.5, 3.0], atol=1e-7)
    assert report.res <= 1e-8
    assert report.box_violation == 0.0


def test_report_residual_uses_fresh_second_stage(small_instance):
    report = phm_fn.solve(small_instance, tol=1e-7)
    assert report.converged
    sols = second_stage_fn.solve_all(small_instance, report.x)
    y = np.stack([sol.y for sol in sols])
    assert_allclose(report.y, y, atol=1e-9)
    assert model_fn.first_stage_residual(small_instance, report.x, y) <= 1e-7


def test_history_sink_receives_every_row(small_instance):
    rows = []
    report = phm_fn.solve(small_instance, res_every=3, history_sink=rows.append)
    assert len(rows) == report.iterations == len(report.history)
    assert [row.nu for row in rows] == list(range(1, report.iterations + 1))
    checked = [row for row in rows if not np.isnan(row.res)]
    assert all(row.nu % 3 == 0 or row.nu == report.iterations for row in checked)


def test_iteration_budget(small_instance):
    report = phm_fn.solve(small_instance, tol=1e-14, max_iter=3)
    assert report.status is mcore.Status.MAXITER
    assert report.iterations == 3
    assert report.settings["max_iter"] == 3


def test_uncertified_instance_warns():
    with pytest.warns(RuntimeWarning, match="not certified"):
        phm_fn.solve(_uncertified_instance(-0.5), max_iter=3)


def test_step_error_carries_history():
    # A + rI = 0 and an interior first-stage iterate make Step 1 singular
    inst = _uncertified_instance(-1.0)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(phm_fn.PhmStepError) as excinfo:
            phm_fn.solve(inst, r=1.0)
    assert excinfo.value.j == 0
    assert excinfo.value.status is mcore.Status.SINGULAR
    assert excinfo.value.history == ()


def test_extensive_form_structure(small_instance):
    p = phm_fn.extensive_form(small_instance)
    assert p.k == small_instance.n + small_instance.n_scenarios * small_instance.m
    assert model_fn.min_sym_eigenvalue(p.H) > 0.0


def test_extensive_form_solution_zeroes_the_residual(small_instance):
    x, ys, sol = phm_fn.solve_extensive(small_instance)
    assert sol.converged
    assert model_fn.first_stage_residual(small_instance, x, ys) <= 1e-8


@pytest.mark.parametrize("seed", [0, 1])
def test_phm_matches_extensive_form(seed):
    inst = generator_fn.generate(GeneratorConfig(seed=seed))
    report = phm_fn.solve(inst, tol=1e-7)
    x_ext, _, sol = phm_fn.solve_extensive(inst)
    assert report.converged and sol.converged
    assert np.max(np.abs(report.x - x_ext)) <= 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(2, 10))
def test_phm_matches_extensive_form_all_seeds(seed):
    inst = generator_fn.generate(GeneratorConfig(seed=seed))
    report = phm_fn.solve(inst, tol=1e-7)
    x_ext, _, _ = phm_fn.solve_extensive(inst)
    assert np.max(np.abs(report.x - x_ext)) <= 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("n_scenarios", [10, 50])
def test_phm_converges_at_published_configuration(n_scenarios):
    converged = 0
    for seed in range(20):
        cfg = GeneratorConfig(n_scenarios=n_scenarios, seed=seed)
        converged += phm_fn.solve(generator_fn.generate(cfg)).converged
    assert converged >= 19


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_scenario_matches_extensive_form(seed):
    inst = generator_fn.generate(GeneratorConfig(n_scenarios=1, seed=seed))
    report = phm_fn.solve(inst, tol=1e-9)
    x_ext, _, sol = phm_fn.solve_extensive(inst)
    assert report.converged and sol.converged
    assert np.max(np.abs(report.x - x_ext)) <= 1e-6


@pytest.mark.parametrize("r", [0.5, 5.0])
def test_penalty_does_not_change_the_limit(small_instance, r):
    ref = phm_fn.solve(small_instance, r=1.0, tol=1e-9)
    report = phm_fn.solve(small_instance, r=r, tol=1e-9)
    assert ref.converged and report.converged
    assert np.max(np.abs(report.x - ref.x)) <= 1e-6


def _uncoupled_identity():
    """A = I, B = L = 0, M = I: x* = mid(-h1, a, b) and PHM needs no averaging"""

    return TwoStageInstance(
        n=2,
        m=2,
        A=np.eye(2),
        h1=[0.5, -2.0],
        a=[0.0, 0.0],
        b=[1.0, 1.0],
        scenarios=model_fn.uniform_weights(
            [
                Scenario(
                    B=np.zeros((2, 2)),
                    L=np.zeros((2, 2)),
                    M=np.eye(2),
                    h2=[0.1 * j, -0.1],
                    l=[-1.0, -1.0],
                    u=[1.0, 1.0],
                )
                for j in range(3)
            ]
        ),
    )


@pytest.mark.parametrize(
    "make, max_checks",
    [(_uncoupled_identity, 3), (decoupled_instance, 40)],
)
def test_uncoupled_instances_stop_early(make, max_checks):
    report = phm_fn.solve(make(), tol=1e-8)
    assert report.converged
    assert report.iterations <= max_checks
