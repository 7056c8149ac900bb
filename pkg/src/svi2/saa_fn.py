#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Sample average approximation convergence experiment
Contains:
- PhmSettings, ExperimentConfig, ResStats, CellResult, ExperimentResult
- run() experiment driver and out_of_sample_res()
- load_profile(), config_from_dict() configuration
- write_stats_csv(), write_trajectories_csv(), write_metadata() outputs
- metadata_document() metadata with per-cell status
- spearman_trend()
- Descriptive Exceptions specific to this package

Per replication the structural matrices are drawn once, every sample size
gets its own independently drawn scenario set, and one evaluation set is
drawn for the out-of-sample residual. Each replication owns a child of
numpy.random.SeedSequence(seed), so results do not depend on how
replications are spread over threads.
"""

import csv
import dataclasses
import importlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats
from tqdm import tqdm

from svi2 import __version__, generator_fn, phm_fn, second_stage_fn
from svi2.generator_fn import GeneratorConfig
from svi2.model import mcore
from svi2.model_fn import (
    InvalidArgumentError,
    NumericalError,
    first_stage_residual,
    uniform_weights,
)

NESTING = "independent"


# Custom Exceptions
class ExperimentConfigError(InvalidArgumentError):
    """Exception class for an invalid experiment configuration"""


def _check_keys(cfg, allowed, what):
    if not isinstance(cfg, dict):
        raise ExperimentConfigError(f"** {what} must be a dict: {cfg!r}")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ExperimentConfigError(f"** unknown {what} keys: {unknown}")


def _is_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


@dataclass(frozen=True)
class PhmSettings:
    """PHM parameters used for every cell of the experiment"""

    r: float = mcore.DEFAULT_R
    tol: float = mcore.OUTER_TOL
    max_iter: int = mcore.OUTER_MAX_ITER
    res_every: int = 1

    def __post_init__(self):
        if not float(self.r) > 0.0 or not float(self.tol) > 0.0:
            raise ExperimentConfigError(f"** r and tol must be positive: {self}")
        if not _is_int(self.max_iter) or self.max_iter < 1:
            raise ExperimentConfigError(f"** max_iter must be an integer >= 1: {self.max_iter}")
        if not _is_int(self.res_every) or self.res_every < 1:
            raise ExperimentConfigError(f"** res_every must be an integer >= 1: {self.res_every}")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "tol", float(self.tol))

    @classmethod
    def from_dict(cls, cfg):
        _check_keys(cfg, [f.name for f in dataclasses.fields(cls)], "phm")
        return cls(**cfg)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Full configuration of an SAA experiment

    ...

    Attributes
    ----------
    generator : GeneratorConfig
        structure dimensions; its n_scenarios and seed are not used
    n_grid : tuple of int
        strictly increasing sample sizes
    replications : int
    eval_scenarios : int
        size of the out-of-sample set
    phm : PhmSettings
    seed : int
        root of the SeedSequence
    threads : int
        worker threads over replications
    profile : str or None
        name of the profile the config started from
    """

    generator: GeneratorConfig
    n_grid: tuple
    replications: int
    eval_scenarios: int
    phm: PhmSettings = field(default_factory=PhmSettings)
    seed: int = 0
    threads: int = 1
    profile: str = None

    def __post_init__(self):
        grid = tuple(self.n_grid)
        if not grid or not all(_is_int(n) and n >= 1 for n in grid):
            raise ExperimentConfigError(f"** n_grid must hold integers >= 1: {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ExperimentConfigError(f"** n_grid must be strictly increasing: {grid}")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in grid))
        for name in ("replications", "eval_scenarios", "threads"):
            value = getattr(self, name)
            if not _is_int(value) or value < 1:
                raise ExperimentConfigError(f"** {name} must be an integer >= 1: {value!r}")
        if not _is_int(self.seed) or self.seed < 0:
            raise ExperimentConfigError(f"** seed must be a non-negative integer: {self.seed!r}")

    def as_dict(self, with_threads=True):
        doc = {
            "profile": self.profile,
            "generator": self.generator.as_dict(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "eval_scenarios": self.eval_scenarios,
            "phm": dataclasses.asdict(self.phm),
            "seed": self.seed,
        }
        if with_threads:
            doc["threads"] = self.threads
        return doc


@dataclass(frozen=True)
class ResStats:
    """
    Statistics of the out-of-sample residual at one sample size

    ...

    Attributes
    ----------
    n : int
        sample size N
    mean, variance : float
        over converged replications, variance with ddof=1 (0 for one value)
    ci_lo, ci_hi : float
        mean -+ 1.96 sqrt(variance / count)
    count : int
        replications entering the statistics
    failures : int
        replications excluded because PHM did not converge or the
        out-of-sample evaluation failed
    """

    n: int
    mean: float
    variance: float
    ci_lo: float
    ci_hi: float
    count: int
    failures: int


@dataclass(frozen=True, eq=False)
class CellResult:
    """One (replication, N) run of the experiment"""

    replication: int
    n: int
    status: mcore.Status
    iterations: int
    res: float
    out_of_sample_res: float
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """
    Outcome of run()

    ...

    Attributes
    ----------
    stats : list of ResStats
        in n_grid order
    cells : list of CellResult
        replication-major, n_grid order within a replication
    metadata : dict
        version, config, seeds, solver settings, nesting, wall time
    """

    stats: list
    cells: list
    metadata: dict

    @property
    def trajectories(self):
        """(replication, N, component_index, value) rows for all cells with an x"""
        return [
            (cell.replication, cell.n, i, float(value))
            for cell in self.cells
            if cell.x is not None
            for i, value in enumerate(cell.x)
        ]


def load_profile(name):
    """Return the ExperimentConfig of a profile definition module

    Parameters
    ----------
    name : str
        "default", "scaled", "smoke" (module svi2.model.p<name>)

    Raises
    -------
    ExperimentConfigError
        no such profile
    """

    try:
        pdef = importlib.import_module(f".model.p{name.lower()}", package="svi2")
    except ModuleNotFoundError as exc:
        print(f"** Cannot load experiment profile. Unknown profile: {name}")
        raise ExperimentConfigError(f"unknown profile {name!r}") from exc
    return ExperimentConfig(
        generator=GeneratorConfig(**pdef.GENERATOR),
        n_grid=tuple(pdef.N_GRID),
        replications=pdef.REPLICATIONS,
        eval_scenarios=pdef.EVAL_SCENARIOS,
        phm=PhmSettings(**pdef.PHM),
        seed=pdef.SEED,
        profile=name.lower(),
    )


def config_from_dict(doc, base=None):
    """ExperimentConfig from a JSON document overriding a profile

    The document may name a "profile" (default "default") and override any
    of generator, n_grid, replications, eval_scenarios, phm, seed, threads.
    generator and phm are merged key by key.

    Raises
    -------
    ExperimentConfigError
        unknown keys or invalid values
    """

    _check_keys(
        doc,
        (
            "profile",
            "generator",
            "n_grid",
            "replications",
            "eval_scenarios",
            "phm",
            "seed",
            "threads",
        ),
        "experiment",
    )
    if base is None:
        base = load_profile(doc.get("profile", "default"))
    gen = base.generator.as_dict()
    gen_over = doc.get("generator", {})
    _check_keys(gen_over, gen, "generator")
    gen.update(gen_over)
    phm = dataclasses.asdict(base.phm)
    phm_over = doc.get("phm", {})
    _check_keys(phm_over, phm, "phm")
    phm.update(phm_over)
    try:
        return ExperimentConfig(
            generator=GeneratorConfig.from_dict(gen),
            n_grid=tuple(doc.get("n_grid", base.n_grid)),
            replications=doc.get("replications", base.replications),
            eval_scenarios=doc.get("eval_scenarios", base.eval_scenarios),
            phm=PhmSettings.from_dict(phm),
            seed=doc.get("seed", base.seed),
            threads=doc.get("threads", base.threads),
            profile=base.profile,
        )
    except TypeError as err:
        raise ExperimentConfigError(f"** invalid experiment config: {err}") from err


def out_of_sample_res(inst_structural, x, eval_scenarios):
    """First-stage residual of x against an evaluation scenario set

    Parameters
    ----------
    inst_structural : TwoStageInstance
        supplies A, h1, a, b
    x : array_like (n,)
    eval_scenarios : sequence of Scenario
        reweighted to 1/len(eval_scenarios)

    Returns
    -------
    float
        invariant under permutation of eval_scenarios

    Raises
    -------
    NumericalError
        a second-stage solve failed, message carries the scenario index
    """

    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("** x contains non-finite entries")
    eval_scenarios = list(eval_scenarios)
    if not eval_scenarios:
        raise InvalidArgumentError("** evaluation set is empty")
    inst = inst_structural.with_scenarios(uniform_weights(eval_scenarios))
    sols = second_stage_fn.solve_all(inst, x)
    for j, sol in enumerate(sols):
        if not sol.converged:
            raise NumericalError(
                f"** second stage at evaluation scenario {j} ended {sol.status.value}"
            )
    return first_stage_residual(inst, x, np.stack([sol.y for sol in sols]))


def _aggregate(n, values, failures):
    """ResStats from the converged out-of-sample residuals of one N

    count is len(values), so the confidence interval half-width
    1.96 sqrt(variance / count) uses the converged replications only, not
    the replications requested. failures is reported alongside.
    """

    count = len(values)
    if count == 0:
        nan = float("nan")
        return ResStats(n, nan, nan, nan, nan, 0, failures)
    mean = math.fsum(values) / count
    variance = (
        math.fsum((v - mean) ** 2 for v in values) / (count - 1) if count > 1 else 0.0
    )
    half = mcore.CI_Z * math.sqrt(variance / count)
    return ResStats(n, mean, variance, mean - half, mean + half, count, failures)


def _run_replication(cfg, rep, seeds, verbose):
    """All cells of one replication, in n_grid order"""

    structure_seq, eval_seq, *cell_seqs = seeds
    structure = generator_fn.draw_structure(
        cfg.generator, np.random.default_rng(structure_seq)
    )
    eval_inst = generator_fn.assemble(
        structure,
        generator_fn.draw_scenarios(
            structure, cfg.eval_scenarios, np.random.default_rng(eval_seq)
        ),
    )
    cells = []
    for n, seq in zip(cfg.n_grid, cell_seqs):
        inst = generator_fn.assemble(
            structure,
            generator_fn.draw_scenarios(structure, n, np.random.default_rng(seq)),
        )
        try:
            report = phm_fn.solve(
                inst,
                r=cfg.phm.r,
                tol=cfg.phm.tol,
                max_iter=cfg.phm.max_iter,
                res_every=cfg.phm.res_every,
            )
        except phm_fn.PhmStepError as err:
            print(f"** replication {rep}, N={n}: {err}")
            nan = float("nan")
            cells.append(CellResult(rep, n, err.status, len(err.history), nan, nan, None))
            continue
        oos = float("nan")
        if report.converged:
            try:
                oos = out_of_sample_res(eval_inst, report.x, eval_inst.scenarios)
            except NumericalError as err:
                # kept as a failure of this N, the other cells still run
                print(f"** replication {rep}, N={n}: {err}")
        if verbose:
            print(
                f"rep={rep:3d} N={n:5d} {report.status.value:9s} it={report.iterations:5d} "
                f"res={report.res:.3e} oos={oos:.6e}"
            )
        cells.append(
            CellResult(rep, n, report.status, report.iterations, report.res, oos, report.x)
        )
    return cells


def run(cfg, verbose=False, progress=False):
    """Run the SAA convergence experiment

    Parameters
    ----------
    cfg : ExperimentConfig
    verbose : bool
        If True outputs one line per cell
    progress : bool
        If True shows a tqdm bar over replications

    Returns
    -------
    ExperimentResult
    """

    start = time.perf_counter()
    root = np.random.SeedSequence(cfg.seed)
    rep_seqs = root.spawn(cfg.replications)
    # spawned here so the assignment does not depend on thread scheduling
    rep_seeds = [seq.spawn(len(cfg.n_grid) + 2) for seq in rep_seqs]

    def _task(rep):
        return _run_replication(cfg, rep, rep_seeds[rep], verbose)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        mapped = pool.map(_task, range(cfg.replications))
        if progress:
            mapped = tqdm(mapped, total=cfg.replications, desc="replications")
        per_rep = list(mapped)

    cells = [cell for rep_cells in per_rep for cell in rep_cells]
    stats = []
    for n in cfg.n_grid:
        row = [cell for cell in cells if cell.n == n]
        values = [
            cell.out_of_sample_res
            for cell in row
            if cell.status is mcore.Status.CONVERGED and math.isfinite(cell.out_of_sample_res)
        ]
        stats.append(_aggregate(n, values, len(row) - len(values)))

    metadata = {
        "version": __version__,
        "config": cfg.as_dict(),
        "seeds": {
            "root": cfg.seed,
            "replication_spawn_keys": [list(seq.spawn_key) for seq in rep_seqs],
        },
        "solver": {
            "phm": dataclasses.asdict(cfg.phm),
            "inner_tol": mcore.INNER_TOL,
            "inner_max_iter": mcore.INNER_MAX_ITER,
            "inner_method": "semismooth Newton on the natural map",
        },
        "nesting": NESTING,
        "wall_time_s": time.perf_counter() - start,
    }
    return ExperimentResult(stats=stats, cells=cells, metadata=metadata)


def spearman_trend(stats):
    """Spearman rank correlation between N and mean res (nan means skipped)"""

    pairs = [(s.n, s.mean) for s in stats if not math.isnan(s.mean)]
    if len(pairs) < 2:
        return float("nan")
    rho, _ = scipy.stats.spearmanr([p[0] for p in pairs], [p[1] for p in pairs])
    return float(rho)


def _header_rows(result):
    """Leading comment rows carrying the version and effective config"""

    config = result.metadata["config"]
    config = {key: value for key, value in config.items() if key != "threads"}
    return [
        ["#Log svi2", result.metadata["version"], "nesting", result.metadata["nesting"]],
        ["#Config", json.dumps(config, sort_keys=True)],
    ]


def write_stats_csv(result, path):
    """Write stats.csv: N, mean, variance, ci_lo, ci_hi, failures"""

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, dialect="excel")
        writer.writerows(_header_rows(result))
        writer.writerow(["N", "mean", "variance", "ci_lo", "ci_hi", "failures"])
        for s in result.stats:
            writer.writerow(
                [s.n, repr(s.mean), repr(s.variance), repr(s.ci_lo), repr(s.ci_hi), s.failures]
            )


def write_trajectories_csv(result, path):
    """Write trajectories.csv: replication, N, component_index, value"""

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, dialect="excel")
        writer.writerows(_header_rows(result))
        writer.writerow(["replication", "N", "component_index", "value"])
        for rep, n, i, value in result.trajectories:
            writer.writerow([rep, n, i, repr(value)])


def metadata_document(result):
    """Metadata plus the status and iteration count of every cell"""

    doc = dict(result.metadata)
    doc["cells"] = [
        {
            "replication": cell.replication,
            "N": cell.n,
            "status": cell.status.value,
            "iterations": cell.iterations,
        }
        for cell in result.cells
    ]
    return doc


def write_metadata(result, path, fmt="json"):
    """Write the metadata sidecar

    Parameters
    ----------
    result : ExperimentResult
    path : str or path-like
    fmt : str
        "json", or "csv" with one key, value row per top-level entry and
        nested values JSON encoded
    """

    if fmt not in ("json", "csv"):
        raise InvalidArgumentError(f"** unknown metadata format: {fmt}")
    doc = metadata_document(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "json":
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        else:
            writer = csv.writer(fh, dialect="excel")
            writer.writerow(["key", "value"])
            for key, value in doc.items():
                if isinstance(value, (dict, list)):
                    value = json.dumps(value, sort_keys=True)
                writer.writerow([key, value])
