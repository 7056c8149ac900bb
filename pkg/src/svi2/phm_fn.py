#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Progressive Hedging Method for the SAA two-stage box SVI
Contains:
- PhmState, PhmReport value types and HistoryRow
- init(), step(), solve() for the hedging iteration
- extensive_form(), solve_extensive() oracle on the full coupled problem
- Descriptive Exceptions specific to this package

One PHM iteration:

Step 1. For every scenario j solve the regularized coupled box LVI in
        (x_j, y_j) with matrix [[A + rI, B_j], [L_j, M_j + rI]] and
        vector (h1 + w_j - r x_j ; h2_j - r y_j) over [a,b] x [l_j,u_j].
Step 2. Average the first-stage parts into x_bar, reset every x_j to
        x_bar, keep the second-stage parts, and update the multipliers
        w_j += r (x_hat_j - x_bar).
"""

import warnings
from collections import namedtuple
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from svi2 import boxvi_fn, second_stage_fn
from svi2.model import mcore
from svi2.model_fn import (
    BoxLvi,
    InvalidArgumentError,
    box_violation,
    certify_strong_monotonicity,
    first_stage_residual,
    mid,
)


# Custom Exceptions
class PhmStepError(Exception):
    """Exception class for an inner solve failure inside a PHM iteration

    Attributes
    ----------
    j : int
        scenario index of the failed solve
    status : mcore.Status
        inner solver status
    history : tuple of HistoryRow
        rows recorded before the failure (filled in by solve())
    """

    def __init__(self, j, status, message=""):
        super().__init__(message or f"inner solve failed on scenario {j}: {status.value}")
        self.j = j
        self.status = status
        self.history = ()


HistoryRow = namedtuple("HistoryRow", "nu res step x_bar")


@dataclass(frozen=True, eq=False)
class PhmState:
    """
    PHM iterate

    ...

    Attributes
    ----------
    nu : int
        iteration counter
    x_bar : ndarray (n,)
        aggregated first-stage decision
    xs : ndarray (N, n)
        per-scenario first-stage copies
    ys : ndarray (N, m)
        per-scenario second-stage decisions
    ws : ndarray (N, n)
        multipliers, weighted mean zero
    r : float
        penalty parameter
    """

    nu: int
    x_bar: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    ws: np.ndarray
    r: float


@dataclass(frozen=True, eq=False)
class PhmReport:
    """
    Outcome of solve()

    ...

    Attributes
    ----------
    status : mcore.Status
        CONVERGED or MAXITER
    iterations : int
    res : float
        first-stage residual at x
    x : ndarray (n,)
    y : ndarray (N, m)
        second-stage solutions y_hat(x, xi^j)
    history : tuple of HistoryRow
        (nu, res, ||x_bar^{nu+1} - x_bar^nu||, x_bar); res is nan on
        iterations without a residual check
    box_violation : float
    settings : dict
        r, tol, max_iter, res_every, inner_tol, x0
    """

    status: mcore.Status
    iterations: int
    res: float
    x: np.ndarray
    y: np.ndarray
    history: tuple
    box_violation: float
    settings: dict = field(default_factory=dict)

    @property
    def converged(self):
        """True when status is CONVERGED"""
        return self.status is mcore.Status.CONVERGED

    def as_dict(self):
        """JSON-ready representation without the history"""
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "res": self.res,
            "box_violation": self.box_violation,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "settings": dict(self.settings),
        }


def init(inst, r=mcore.DEFAULT_R, x0=None):
    """Initial PHM state

    x_j = x0 for all j (default mid(0, a, b)), w_j = 0, y_j = mid(0, l_j, u_j)

    Raises
    -------
    InvalidArgumentError
        r <= 0 or x0 of the wrong length
    """

    if not r > 0:
        raise InvalidArgumentError(f"** penalty r must be positive: {r}")
    n, big_n = inst.n, inst.n_scenarios
    if x0 is None:
        x0 = mid(np.zeros(n), inst.a, inst.b)
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise InvalidArgumentError(f"** x0 must have length {n}, got {x0.shape}")
    st = inst.stacked
    return PhmState(
        nu=0,
        x_bar=x0,
        xs=np.tile(x0, (big_n, 1)),
        ys=mid(np.zeros_like(st["l"]), st["l"], st["u"]),
        ws=np.zeros((big_n, n)),
        r=float(r),
    )


@lru_cache(maxsize=8)
def _coupled_system(inst, r):
    """Stacked Step 1 matrices and boxes, fixed for a given (inst, r)"""

    n, m, big_n = inst.n, inst.m, inst.n_scenarios
    st = inst.stacked
    H = np.empty((big_n, n + m, n + m))
    H[:, :n, :n] = inst.A + r * np.eye(n)
    H[:, :n, n:] = st["B"]
    H[:, n:, :n] = st["L"]
    H[:, n:, n:] = st["M"] + r * np.eye(m)
    lo = np.hstack([np.tile(inst.a, (big_n, 1)), st["l"]])
    up = np.hstack([np.tile(inst.b, (big_n, 1)), st["u"]])
    return H, lo, up


def step(inst, state, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER):
    """One PHM iteration

    Parameters
    ----------
    inst : TwoStageInstance
    state : PhmState
    tol, max_iter :
        inner solver settings for Step 1

    Returns
    -------
    PhmState
        next iterate

    Raises
    -------
    PhmStepError
        an inner solve did not converge, carries the scenario index
    """

    n, r = inst.n, state.r
    H, lo, up = _coupled_system(inst, r)
    q = np.hstack(
        [
            inst.h1 + state.ws - r * state.xs,
            inst.stacked["h2"] - r * state.ys,
        ]
    )
    z0 = np.hstack([state.xs, state.ys])
    sols = boxvi_fn.solve_many(H, q, lo, up, z0=z0, tol=tol, max_iter=max_iter)
    for j, sol in enumerate(sols):
        if not sol.converged:
            raise PhmStepError(j, sol.status)

    z_hat = np.stack([sol.z for sol in sols])
    x_hat, y_hat = z_hat[:, :n], z_hat[:, n:]
    # fixed scenario order
    x_bar = np.sum(inst.weights[:, None] * x_hat, axis=0)
    return PhmState(
        nu=state.nu + 1,
        x_bar=x_bar,
        xs=np.tile(x_bar, (inst.n_scenarios, 1)),
        ys=y_hat,
        ws=state.ws + r * (x_hat - x_bar),
        r=r,
    )


def _evaluate(inst, x, y0, inner_tol, inner_max_iter):
    """Fresh second-stage solutions at x and the first-stage residual"""

    sols = second_stage_fn.solve_all(
        inst, x, tol=inner_tol, max_iter=inner_max_iter, y0=y0
    )
    for j, sol in enumerate(sols):
        if not sol.converged:
            raise PhmStepError(j, sol.status, f"second stage failed on scenario {j}")
    y = np.stack([sol.y for sol in sols])
    return y, first_stage_residual(inst, x, y)


def solve(
    inst,
    r=mcore.DEFAULT_R,
    tol=mcore.OUTER_TOL,
    max_iter=mcore.OUTER_MAX_ITER,
    res_every=1,
    x0=None,
    inner_tol=mcore.INNER_TOL,
    inner_max_iter=mcore.INNER_MAX_ITER,
    history_sink=None,
    verbose=False,
):
    """Run PHM until res <= tol or max_iter iterations

    Every res_every iterations the residual is evaluated at x_bar with fresh
    second-stage solutions y_hat(x_bar, xi^j), not the PHM internal y_j.

    Parameters
    ----------
    inst : TwoStageInstance
        should be certified strongly monotone; a warning is issued if not
    r : float
        penalty parameter
    tol : float
        stopping threshold on res
    max_iter : int
        iteration budget
    res_every : int
        residual check frequency
    x0 : array_like or None
        starting point, default mid(0, a, b)
    inner_tol, inner_max_iter :
        box LVI solver settings
    history_sink : callable or None
        receives each HistoryRow as it is produced
    verbose : bool
        If True outputs the residual at each check

    Returns
    -------
    PhmReport

    Raises
    -------
    PhmStepError
        inner failure; the exception carries the partial history
    """

    if tol <= 0 or max_iter < 0 or res_every < 1:
        raise InvalidArgumentError(
            f"** invalid PHM settings: tol={tol}, max_iter={max_iter}, res_every={res_every}"
        )
    cert = certify_strong_monotonicity(inst)
    if not cert.certified:
        warnings.warn(
            "instance is not certified strongly monotone "
            f"(min eigenvalue {min(cert.min_eig_sym):.3e}); PHM may not converge",
            RuntimeWarning,
            stacklevel=2,
        )

    state = init(inst, r, x0)
    settings = {
        "r": state.r,
        "tol": tol,
        "max_iter": max_iter,
        "res_every": res_every,
        "inner_tol": inner_tol,
        "x0": state.x_bar.tolist(),
    }
    history = []
    y_eval = None
    res = float("nan")
    status = mcore.Status.MAXITER
    try:
        if max_iter == 0:
            y_eval, res = _evaluate(inst, state.x_bar, None, inner_tol, inner_max_iter)
        for _ in range(max_iter):
            new_state = step(inst, state, tol=inner_tol, max_iter=inner_max_iter)
            delta = float(np.linalg.norm(new_state.x_bar - state.x_bar))
            state = new_state
            row_res = float("nan")
            if state.nu % res_every == 0 or state.nu == max_iter:
                y_eval, res = _evaluate(
                    inst, state.x_bar, y_eval, inner_tol, inner_max_iter
                )
                row_res = res
                if verbose:
                    print(f"nu={state.nu:5d}  res={res:.6e}  step={delta:.3e}")
            row = HistoryRow(state.nu, row_res, delta, state.x_bar.copy())
            history.append(row)
            if history_sink is not None:
                history_sink(row)
            if row_res <= tol:
                status = mcore.Status.CONVERGED
                break
    except PhmStepError as err:
        print(f"** PHM aborted at iteration {state.nu}: {err}")
        err.history = tuple(history)
        raise

    return PhmReport(
        status=status,
        iterations=state.nu,
        res=res,
        x=state.x_bar.copy(),
        y=y_eval,
        history=tuple(history),
        box_violation=box_violation(state.x_bar, inst.a, inst.b),
        settings=settings,
    )


def extensive_form(inst):
    """The SAA problem as one box LVI in (x, y_1, ..., y_N)

    Second-stage block rows are multiplied by their scenario weight. This
    leaves the solution set unchanged (normal cones are cones) and makes the
    symmetric part the weighted sum of the scenario block matrices, so it is
    positive definite whenever every scenario block is.

    Returns
    -------
    BoxLvi
        dimension n + N m
    """

    n, m = inst.n, inst.m
    k = n + inst.n_scenarios * m
    H = np.zeros((k, k))
    q = np.empty(k)
    lo = np.empty(k)
    up = np.empty(k)
    H[:n, :n] = inst.A
    q[:n], lo[:n], up[:n] = inst.h1, inst.a, inst.b
    for j, sc in enumerate(inst.scenarios):
        s = slice(n + j * m, n + (j + 1) * m)
        H[:n, s] = sc.weight * sc.B
        H[s, :n] = sc.weight * sc.L
        H[s, s] = sc.weight * sc.M
        q[s], lo[s], up[s] = sc.weight * sc.h2, sc.l, sc.u
    return BoxLvi(H=H, q=q, lo=lo, up=up)


def solve_extensive(inst, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER):
    """Solve the extensive form directly

    Returns
    -------
    tuple
        (x, ys, BoxLviSolution) with ys of shape (N, m)
    """

    sol = boxvi_fn.solve(extensive_form(inst), tol=tol, max_iter=max_iter)
    x = sol.z[: inst.n]
    ys = sol.z[inst.n :].reshape(inst.n_scenarios, inst.m)
    return x, ys, sol
