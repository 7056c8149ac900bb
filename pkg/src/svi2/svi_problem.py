#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Main class that binds a two-stage box SVI instance to the solver modules
Contains:
- SviProblem() class
- OracleCheck record returned by SviProblem.oracle_check()
"""

from collections import namedtuple
from types import MappingProxyType

import numpy as np

from svi2 import boxvi_fn, game_fn, generator_fn, model_fn, phm_fn, second_stage_fn
from svi2.model import mcore

OracleCheck = namedtuple("OracleCheck", "check error tolerance verdict detail")

PASS = "PASS"
FAIL = "FAIL"
SKIP = "SKIP"

# Size limits of the oracle checks
EXTENSIVE_MAX_DIM = 200
FD_DIRECTIONS = 5
FD_STEP = 1e-6
FD_RTOL = 1e-5
PHM_AGREE_TOL = 1e-4
PHM_CHECK_TOL = 1e-7
NAN = float("nan")


class SviProblem:
    """
    SviProblem is the main class composed of a TwoStageInstance and the
    certification, PHM and oracle functions that act on it.

    ...

    Attributes
    ----------
    instance : TwoStageInstance
        the bound instance
    info : MappingProxyType
        dict of dimensions, block metadata and provenance
    status : MappingProxyType
        dict of the latest certification and solve outcomes

    Methods
    -------
    from_file(path, verbose=False)
        Return SviProblem bound to the instance stored in a JSON file

    from_generator(cfg, verbose=False)
        Return SviProblem bound to a generated instance

    save(path)
        Write the instance JSON document

    certify(verbose=False)
        Return MonotonicityCertificate of the sampled scenarios

    schur_check(verbose=False)
        Return SchurReport, or None without block metadata

    solve(**settings)
        Run PHM and return PhmReport

    solve_extensive()
        Solve the extensive form directly, return (x, ys, BoxLviSolution)

    second_stage(x)
        Return second-stage solutions of all scenarios at x

    player_costs(x, ys)
        Return expected player costs, or None without game structure

    oracle_check(x=None, verbose=False)
        Return list of OracleCheck rows comparing solvers against oracles
    """

    def __init__(self, instance, verbose=False):
        """
        Parameters
        ----------
        instance : TwoStageInstance
        verbose : bool
            If True outputs additional debug info
        """

        if not isinstance(instance, model_fn.TwoStageInstance):
            raise model_fn.InvalidArgumentError(
                f"** SviProblem needs a TwoStageInstance, got {type(instance).__name__}"
            )
        self._instance = instance
        self._verbose = verbose
        self._info = {
            "n": instance.n,
            "m": instance.m,
            "n_scenarios": instance.n_scenarios,
            "blocks": dict(instance.blocks) if instance.blocks is not None else None,
            "metadata": dict(instance.metadata),
        }
        self._status = {}
        if verbose:
            print(self)

    def __repr__(self):
        cls = self.__class__.__name__
        return f"{cls}(instance={repr(self._instance)}, verbose={self._verbose})"

    def __str__(self):
        return "".join(
            [
                "\nSVI Problem",
                f"\n  Dimensions (n, m, N): ({self._info['n']}, "
                f"{self._info['m']}, {self._info['n_scenarios']})",
                f"\n  Blocks: {self._info['blocks']}",
                f"\n  Status: {dict(self._status)}",
            ]
        )

    @property
    def instance(self):
        return self._instance

    @property
    def info(self):
        return MappingProxyType(self._info)

    @property
    def status(self):
        return MappingProxyType(self._status)

    @classmethod
    def from_file(cls, path, verbose=False):
        """Load a JSON instance document and bind it"""
        return cls(model_fn.load_instance(path), verbose=verbose)

    @classmethod
    def from_generator(cls, cfg, verbose=False):
        """Generate an instance from a GeneratorConfig and bind it"""
        return cls(generator_fn.generate(cfg, verbose=verbose), verbose=verbose)

    def save(self, path):
        """redirect to model_fn.save_instance()"""
        model_fn.save_instance(self._instance, path)

    def certify(self, verbose=False):
        """redirect to model_fn.certify_strong_monotonicity()"""
        cert = model_fn.certify_strong_monotonicity(self._instance, verbose=verbose)
        self._status["certified"] = cert.certified
        self._status["kappa"] = cert.kappa
        return cert

    def schur_check(self, verbose=False):
        """redirect to generator_fn.schur_check(), None without block metadata"""
        if not self._instance.blocks or "n1" not in self._instance.blocks:
            return None
        report = generator_fn.schur_check(self._instance, verbose=verbose)
        self._status["schur_certified"] = report.certified
        return report

    def solve(self, **settings):
        """redirect to phm_fn.solve()

        Parameters
        ----------
        settings : keyword arguments of phm_fn.solve()
            r, tol, max_iter, res_every, x0, inner_tol, inner_max_iter,
            history_sink, verbose
        """
        settings.setdefault("verbose", self._verbose)
        try:
            report = phm_fn.solve(self._instance, **settings)
        except phm_fn.PhmStepError as err:
            self._status["phm"] = f"aborted at scenario {err.j}"
            raise
        self._status["phm"] = report.status.value
        self._status["res"] = report.res
        self._status["iterations"] = report.iterations
        return report

    def solve_extensive(self):
        """redirect to phm_fn.solve_extensive()"""
        return phm_fn.solve_extensive(self._instance)

    def second_stage(self, x):
        """redirect to second_stage_fn.solve_all()"""
        return second_stage_fn.solve_all(self._instance, x)

    def player_costs(self, x, ys):
        """redirect to game_fn.expected_player_costs()

        Returns None when the instance carries no game block metadata or its
        matrix form is not the gradient of two player costs.
        """
        if not self._instance.blocks or "n1" not in self._instance.blocks:
            return None
        try:
            costs = game_fn.expected_player_costs(self._instance, x, ys)
        except model_fn.InvalidArgumentError as err:
            if self._verbose:
                print(f"no player costs: {err}")
            return None
        self._status["player_costs"] = costs
        return costs

    def _check_brute_force(self, x, verbose):
        """Newton second-stage solutions against active-set enumeration"""

        inst = self._instance
        name = "second stage vs enumeration"
        if inst.m > mcore.BRUTE_MAX_DIM:
            return OracleCheck(name, NAN, mcore.BRUTE_AGREE_TOL, SKIP, f"m={inst.m} > 12")
        worst = 0.0
        for j, sc in enumerate(inst.scenarios):
            problem = second_stage_fn.as_box_lvi(sc, x)
            sol = boxvi_fn.solve(problem)
            try:
                ref = boxvi_fn.brute_force(problem)
            except (boxvi_fn.InfeasibleError, boxvi_fn.NonUniquenessError) as err:
                return OracleCheck(name, NAN, mcore.BRUTE_AGREE_TOL, FAIL, f"scenario {j}: {err}")
            err_j = float(np.max(np.abs(sol.z - ref))) if sol.converged else float("inf")
            if verbose:
                print(f"scenario {j}: |y_newton - y_enum|_inf = {err_j:.3e}")
            worst = max(worst, err_j)
        verdict = PASS if worst <= mcore.BRUTE_AGREE_TOL else FAIL
        return OracleCheck(name, worst, mcore.BRUTE_AGREE_TOL, verdict, f"{inst.n_scenarios} scenarios")

    def _check_jacobian(self, x, verbose):
        """Generalized Jacobian against central differences on one activity piece"""

        inst = self._instance
        name = "second-stage Jacobian vs central differences"
        rng = np.random.default_rng(0)
        worst = 0.0
        checked = 0
        for j, sc in enumerate(inst.scenarios):
            sol = second_stage_fn.solve(sc, x)
            if not (sol.converged and sol.strict_complementarity):
                continue
            jac = second_stage_fn.jacobian(sc, x, sol)
            for _ in range(FD_DIRECTIONS):
                d = rng.standard_normal(inst.n)
                d /= np.linalg.norm(d)
                plus = second_stage_fn.solve(sc, x + FD_STEP * d, y0=sol.y)
                minus = second_stage_fn.solve(sc, x - FD_STEP * d, y0=sol.y)
                # a difference across two pieces is not a derivative
                if plus.active != sol.active or minus.active != sol.active:
                    continue
                fd = (plus.y - minus.y) / (2.0 * FD_STEP)
                exact = jac @ d
                rel = float(np.linalg.norm(fd - exact) / max(1.0, np.linalg.norm(exact)))
                worst = max(worst, rel)
                checked += 1
            if verbose:
                print(f"scenario {j}: worst relative error so far {worst:.3e}")
        if checked == 0:
            return OracleCheck(name, NAN, FD_RTOL, SKIP, "no strictly complementary point")
        verdict = PASS if worst <= FD_RTOL else FAIL
        return OracleCheck(name, worst, FD_RTOL, verdict, f"{checked} directions")

    def _check_extensive(self, verbose):
        """PHM solution against the extensive-form solution"""

        inst = self._instance
        name = "PHM vs extensive form"
        dim = inst.n + inst.n_scenarios * inst.m
        if dim > EXTENSIVE_MAX_DIM:
            return OracleCheck(name, NAN, PHM_AGREE_TOL, SKIP, f"n + N m = {dim} > 200")
        x_ext, _, ext = phm_fn.solve_extensive(inst)
        if not ext.converged:
            return OracleCheck(name, NAN, PHM_AGREE_TOL, FAIL, f"extensive form {ext.status.value}")
        try:
            report = phm_fn.solve(inst, tol=PHM_CHECK_TOL, verbose=verbose)
        except phm_fn.PhmStepError as err:
            return OracleCheck(name, NAN, PHM_AGREE_TOL, FAIL, str(err))
        if not report.converged:
            return OracleCheck(name, NAN, PHM_AGREE_TOL, FAIL, f"PHM {report.status.value}")
        error = float(np.max(np.abs(report.x - x_ext)))
        verdict = PASS if error <= PHM_AGREE_TOL else FAIL
        return OracleCheck(name, error, PHM_AGREE_TOL, verdict, f"{report.iterations} iterations")

    def oracle_check(self, x=None, verbose=False):
        """Compare the solvers of this package against independent oracles

        Parameters
        ----------
        x : array_like or None
            first-stage point for the second-stage checks, default (a + b) / 2
        verbose : bool
            If True outputs per-scenario errors

        Returns
        -------
        list of OracleCheck
            (check, error, tolerance, verdict, detail) with verdict PASS,
            FAIL or SKIP
        """

        inst = self._instance
        if x is None:
            x = 0.5 * (inst.a + inst.b)
        x = np.asarray(x, dtype=np.float64)
        rows = [
            self._check_brute_force(x, verbose),
            self._check_jacobian(x, verbose),
            self._check_extensive(verbose),
        ]
        self._status["oracle"] = all(row.verdict != FAIL for row in rows)
        return rows
