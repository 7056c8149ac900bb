import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from svi2 import generator_fn, saa_fn
from svi2.generator_fn import GeneratorConfig
from svi2.model import mcore
from svi2.saa_fn import ExperimentConfigError, ResStats


@pytest.fixture(scope="module")
def smoke_result():
    return saa_fn.run(saa_fn.load_profile("smoke"))


def _stats(pairs):
    return [ResStats(n, mean, 0.0, mean, mean, 1, 0) for n, mean in pairs]


def test_smoke_run_layout(smoke_result):
    cfg = saa_fn.load_profile("smoke")
    assert [s.n for s in smoke_result.stats] == list(cfg.n_grid)
    assert len(smoke_result.cells) == cfg.replications * len(cfg.n_grid)
    assert [(c.replication, c.n) for c in smoke_result.cells] == [
        (rep, n) for rep in range(cfg.replications) for n in cfg.n_grid
    ]
    for s in smoke_result.stats:
        assert s.count + s.failures == cfg.replications
        assert s.mean >= 0.0


def test_confidence_interval_width(smoke_result):
    for s in smoke_result.stats:
        if s.count == 0:
            continue
        half = mcore.CI_Z * math.sqrt(s.variance / s.count)
        assert s.ci_hi - s.ci_lo == pytest.approx(2.0 * half, rel=1e-9, abs=1e-14)
        assert s.ci_lo <= s.mean <= s.ci_hi


def test_metadata_records_seeds_and_solver(smoke_result):
    meta = smoke_result.metadata
    assert meta["nesting"] == "independent"
    assert meta["seeds"]["root"] == 7
    assert len(meta["seeds"]["replication_spawn_keys"]) == 2
    assert meta["config"]["profile"] == "smoke"
    assert meta["solver"]["inner_tol"] == mcore.INNER_TOL


def test_trajectories_cover_every_solved_cell(smoke_result):
    rows = smoke_result.trajectories
    solved = [c for c in smoke_result.cells if c.x is not None]
    assert len(rows) == 4 * len(solved)
    assert {row[2] for row in rows} == {0, 1, 2, 3}


def test_stats_file_independent_of_thread_count(tmp_path):
    cfg = saa_fn.load_profile("smoke")
    paths = []
    for threads in (1, 2):
        result = saa_fn.run(dataclasses.replace(cfg, threads=threads))
        path = tmp_path / f"stats_{threads}.csv"
        saa_fn.write_stats_csv(result, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_output_files(tmp_path, smoke_result):
    saa_fn.write_stats_csv(smoke_result, tmp_path / "stats.csv")
    saa_fn.write_trajectories_csv(smoke_result, tmp_path / "trajectories.csv")
    saa_fn.write_metadata(smoke_result, tmp_path / "metadata.json")

    with open(tmp_path / "stats.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "#Log svi2"
    assert rows[1][0] == "#Config"
    assert "threads" not in json.loads(rows[1][1])
    assert rows[2] == ["N", "mean", "variance", "ci_lo", "ci_hi", "failures"]
    assert [int(row[0]) for row in rows[3:]] == [4, 8]
    assert float(rows[3][1]) == smoke_result.stats[0].mean

    with open(tmp_path / "trajectories.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[2] == ["replication", "N", "component_index", "value"]
    assert len(rows) == 3 + len(smoke_result.trajectories)

    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert len(meta["cells"]) == len(smoke_result.cells)
    with pytest.raises(saa_fn.InvalidArgumentError):
        saa_fn.write_metadata(smoke_result, tmp_path / "metadata.xml", fmt="xml")
    assert not (tmp_path / "metadata.xml").exists()


def test_aggregate():
    s = saa_fn._aggregate(10, [1.0, 2.0, 3.0], failures=1)
    assert (s.mean, s.variance, s.count, s.failures) == (2.0, 1.0, 3, 1)
    assert s.ci_lo == pytest.approx(2.0 - 1.96 / math.sqrt(3))

    single = saa_fn._aggregate(10, [0.5], failures=0)
    assert (single.variance, single.ci_lo, single.ci_hi) == (0.0, 0.5, 0.5)

    empty = saa_fn._aggregate(10, [], failures=2)
    assert empty.count == 0 and math.isnan(empty.mean)


def test_out_of_sample_res_properties():
    cfg = GeneratorConfig(n1=2, n2=2, m1=2, m2=2, n_scenarios=6, seed=12)
    inst = generator_fn.generate(cfg)
    rng = np.random.default_rng(12)
    x = rng.uniform(inst.a, inst.b)
    scenarios = list(inst.scenarios)
    ref = saa_fn.out_of_sample_res(inst, x, scenarios)

    order = rng.permutation(len(scenarios))
    permuted = saa_fn.out_of_sample_res(inst, x, [scenarios[j] for j in order])
    assert permuted == pytest.approx(ref, abs=1e-12)

    doubled = saa_fn.out_of_sample_res(inst, x, scenarios + scenarios)
    assert doubled == pytest.approx(ref, abs=1e-12)


def test_out_of_sample_res_rejects_bad_input(small_instance):
    with pytest.raises(saa_fn.InvalidArgumentError):
        saa_fn.out_of_sample_res(small_instance, np.zeros(4), [])
    with pytest.raises(saa_fn.InvalidArgumentError):
        saa_fn.out_of_sample_res(small_instance, np.full(4, np.nan), small_instance.scenarios)


def test_spearman_trend():
    assert saa_fn.spearman_trend(_stats([(10, 3.0), (50, 2.0), (250, 1.0)])) == pytest.approx(-1.0)
    nan = float("nan")
    assert saa_fn.spearman_trend(_stats([(10, 3.0), (50, nan), (250, 1.0)])) == pytest.approx(-1.0)
    assert math.isnan(saa_fn.spearman_trend(_stats([(10, 3.0)])))


def test_profiles():
    cfg = saa_fn.load_profile("default")
    assert cfg.n_grid == (10, 50, 250, 1250, 2250)
    assert cfg.replications == 20
    assert cfg.eval_scenarios == 3000
    assert saa_fn.load_profile("Scaled").profile == "scaled"
    with pytest.raises(ExperimentConfigError):
        saa_fn.load_profile("nope")


def test_config_from_dict_overrides():
    cfg = saa_fn.config_from_dict({"profile": "smoke", "n_grid": [4, 6], "phm": {"tol": 1e-6}})
    assert cfg.n_grid == (4, 6)
    assert cfg.phm.tol == 1e-6
    assert cfg.phm.max_iter == 2000
    assert cfg.generator.n1 == 2
    assert cfg.profile == "smoke"


@pytest.mark.parametrize(
    "doc",
    [
        {"foo": 1},
        {"profile": "smoke", "generator": {"n3": 1}},
        {"profile": "smoke", "phm": {"rho": 1.0}},
        {"profile": "smoke", "n_grid": [8, 4]},
        {"profile": "smoke", "replications": 0},
        {"profile": "smoke", "phm": {"max_iter": 0}},
    ],
)
def test_config_from_dict_rejects(doc):
    with pytest.raises(saa_fn.InvalidArgumentError):
        saa_fn.config_from_dict(doc)


@pytest.mark.slow
def test_scaled_experiment_residual_decreases():
    result = saa_fn.run(saa_fn.load_profile("scaled"))
    first, last = result.stats[0], result.stats[-1]
    assert all(s.failures == 0 for s in result.stats)
    assert last.mean < first.mean
    assert last.variance < first.variance
    assert saa_fn.spearman_trend(result.stats) == pytest.approx(-1.0)


def test_failed_evaluation_counts_as_failure(monkeypatch):
    original = saa_fn.out_of_sample_res
    calls = []

    def flaky(inst_structural, x, eval_scenarios):
        calls.append(x)
        if len(calls) == 1:
            raise saa_fn.NumericalError("** second stage at evaluation scenario 0 ended MaxIter")
        return original(inst_structural, x, eval_scenarios)

    monkeypatch.setattr(saa_fn, "out_of_sample_res", flaky)
    cfg = dataclasses.replace(saa_fn.load_profile("smoke"), threads=1)
    result = saa_fn.run(cfg)

    assert len(result.cells) == cfg.replications * len(cfg.n_grid)
    unevaluated = [
        c
        for c in result.cells
        if c.status is mcore.Status.CONVERGED and math.isnan(c.out_of_sample_res)
    ]
    assert len(unevaluated) == 1
    assert sum(s.failures for s in result.stats) >= 1
    for s in result.stats:
        assert s.count + s.failures == cfg.replications
        assert s.count == 0 or math.isfinite(s.mean)
