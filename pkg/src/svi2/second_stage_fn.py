#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Second-stage solution map y_hat(x, xi) and its generalized Jacobian
Contains:
- SecondStageSolution value type
- solve(), solve_all(), jacobian(), feasible(), lipschitz_estimate()

For fixed x and scenario xi the second stage is the box LVI

    -M y - L x - h2 in N_[l,u](y)

so y_hat(x, xi) is piecewise affine in x with pieces indexed by the
activity pattern of v = y - (M y + L x + h2) against [l, u].
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from svi2 import boxvi_fn
from svi2.model import mcore
from svi2.model.mcore import Activity
from svi2.model_fn import BoxLvi, InvalidArgumentError, NumericalError


@dataclass(frozen=True, eq=False)
class SecondStageSolution:
    """
    Second-stage solution at (x, xi)

    ...

    Attributes
    ----------
    y : ndarray (m,)
    active : tuple of Activity
        LOWER, INTERIOR or UPPER per coordinate
    residual : float
        natural-map norm of the second-stage box LVI
    status : mcore.Status
    iterations : int
    strict_complementarity : bool
        False when some v_i is within the activity tolerance of a bound
    """

    y: np.ndarray
    active: tuple
    residual: float
    status: mcore.Status
    iterations: int
    strict_complementarity: bool

    @property
    def converged(self):
        """True when status is CONVERGED"""
        return self.status is mcore.Status.CONVERGED

    def count(self, activity):
        """Number of coordinates with the given activity"""
        return sum(1 for a in self.active if a is activity)


def _check_x(sc, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (sc.n,):
        raise InvalidArgumentError(f"** x must have length {sc.n}, got {x.shape}")
    return x


def _wrap(sc, x, sol):
    """Classify a box LVI solution of the second stage"""

    y = sol.z
    v = y - (sc.M @ y + sc.L @ x + sc.h2)
    active = tuple(
        Activity.LOWER if vi <= li else Activity.UPPER if vi >= ui else Activity.INTERIOR
        for vi, li, ui in zip(v, sc.l, sc.u)
    )
    near = (np.abs(v - sc.l) <= mcore.ACTIVITY_TOL) | (
        np.abs(v - sc.u) <= mcore.ACTIVITY_TOL
    )
    return SecondStageSolution(
        y=y,
        active=active,
        residual=sol.residual,
        status=sol.status,
        iterations=sol.iterations,
        strict_complementarity=not bool(near.any()),
    )


def as_box_lvi(sc, x):
    """Second stage at x as a BoxLvi with H = M, q = L x + h2, box [l, u]"""

    x = _check_x(sc, x)
    return BoxLvi(H=sc.M, q=sc.L @ x + sc.h2, lo=sc.l, up=sc.u)


def solve(sc, x, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER, y0=None):
    """Solve the second stage of one scenario at x

    Parameters
    ----------
    sc : Scenario
        M should have a positive definite symmetric part
    x : array_like (n,)
    tol, max_iter :
        passed to boxvi_fn.solve()
    y0 : array_like (m,) or None
        warm start

    Returns
    -------
    SecondStageSolution
        MaxIter on an uncertified scenario may mean no solution exists at x
    """

    x = _check_x(sc, x)
    sol = boxvi_fn.solve(as_box_lvi(sc, x), z0=y0, tol=tol, max_iter=max_iter)
    return _wrap(sc, x, sol)


def solve_all(inst, x, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER, y0=None):
    """Solve the second stage of every scenario of inst at one x

    Returns
    -------
    list of SecondStageSolution
        in scenario order
    """

    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.n,):
        raise InvalidArgumentError(f"** x must have length {inst.n}, got {x.shape}")
    st = inst.stacked
    q = np.einsum("jmn,n->jm", st["L"], x) + st["h2"]
    sols = boxvi_fn.solve_many(
        st["M"], q, st["l"], st["u"], z0=y0, tol=tol, max_iter=max_iter
    )
    return [_wrap(sc, x, sol) for sc, sol in zip(inst.scenarios, sols)]


def _selection_matrix(M, d):
    """I - D + D M for a 0/1 diagonal d"""
    return np.where(d[:, None] > 0, M, np.eye(M.shape[0]))


def jacobian(sc, x, sol):
    """Element of the Clarke Jacobian of y_hat(., xi) at x

    J = -(I - D + D M)^{-1} D L with D_ii = 1 for INTERIOR coordinates and
    0 for coordinates at a bound. At strict complementarity this is the
    derivative of the solution map.

    Parameters
    ----------
    sc : Scenario
    x : array_like (n,)
    sol : SecondStageSolution
        converged solution at (x, sc)

    Returns
    -------
    ndarray (m, n)

    Raises
    -------
    InvalidArgumentError
        sol is not converged
    NumericalError
        I - D + D M is singular
    """

    _check_x(sc, x)
    if not sol.converged:
        raise InvalidArgumentError(f"** jacobian() needs a converged solution: {sol.status}")
    d = np.array([a is Activity.INTERIOR for a in sol.active], dtype=np.float64)
    try:
        return -scipy.linalg.solve(_selection_matrix(sc.M, d), d[:, None] * sc.L)
    except np.linalg.LinAlgError as err:
        raise NumericalError("** I - D + DM is singular") from err


def feasible(sc, x, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER):
    """True when the second stage at x is solved within the budget"""

    try:
        return solve(sc, x, tol=tol, max_iter=max_iter).converged
    except (ArithmeticError, ValueError, np.linalg.LinAlgError):
        return False


def lipschitz_estimate(sc, n_samples=64, seed=0):
    """Lipschitz modulus bound of x -> y_hat(x, xi)

    Maximum of ||(I - D + D M)^{-1} D L||_2 over 0/1 diagonal selections D.
    For m <= BRUTE_MAX_DIM all 2^m selections are visited, so the value
    bounds the modulus of the piecewise affine map. Larger m uses D = I,
    D = 0 and n_samples random selections.

    Returns
    -------
    float
    """

    if sc.m <= mcore.BRUTE_MAX_DIM:
        selections = np.array(list(itertools.product((0.0, 1.0), repeat=sc.m)))
    else:
        rng = np.random.default_rng(seed)
        selections = np.vstack(
            [np.ones(sc.m), np.zeros(sc.m), rng.integers(0, 2, size=(n_samples, sc.m))]
        ).astype(np.float64)
    best = 0.0
    for d in selections:
        jac = scipy.linalg.solve(_selection_matrix(sc.M, d), d[:, None] * sc.L)
        best = max(best, float(np.linalg.norm(jac, 2)))
    return best
