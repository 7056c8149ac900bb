#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Box-constrained linear VI solver
Contains:
- BoxLviSolution value type
- solve(), solve_many() semismooth Newton on the natural map
- brute_force() active-set enumeration oracle
- Descriptive Exceptions specific to this package

The natural map of 0 in Hz + q + N_[lo,up](z) is

    F(z) = z - mid(z - (Hz + q), lo, up)

and vanishes exactly at solutions. An element of its generalized Jacobian is
I - D + D H with D diagonal, D_ii = 1 when z_i - (Hz + q)_i lies strictly
inside (lo_i, up_i) and 0 otherwise.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from svi2.model import mcore
from svi2.model_fn import InvalidArgumentError, mid


# Custom Exceptions
class InfeasibleError(Exception):
    """Exception class for an enumeration that accepts no active set"""


class NonUniquenessError(Exception):
    """Exception class for an enumeration that accepts disagreeing solutions"""


@dataclass(frozen=True, eq=False)
class BoxLviSolution:
    """
    Result of a box LVI solve

    ...

    Attributes
    ----------
    z : ndarray (k,)
        solution, or best iterate when not converged
    residual : float
        natural-map norm ||z - mid(z - (Hz + q), lo, up)||
    iterations : int
        Newton iterations performed
    status : mcore.Status
        CONVERGED, MAXITER or SINGULAR
    """

    z: np.ndarray
    residual: float
    iterations: int
    status: mcore.Status

    @property
    def converged(self):
        """True when status is CONVERGED"""
        return self.status is mcore.Status.CONVERGED


def _natural_map(H, q, lo, up, z):
    """Batched natural map, returns (F, v) with v = z - (Hz + q)"""

    v = z - (np.einsum("bij,bj->bi", H, z) + q)
    return z - np.maximum(lo, np.minimum(v, up)), v


def natural_residual(p, z):
    """Return ||F(z)|| for a single BoxLvi"""

    z = np.asarray(z, dtype=np.float64)
    return float(np.linalg.norm(z - mid(z - (p.H @ z + p.q), p.lo, p.up)))


def _newton_directions(J, rhs):
    """Solve the stacked Newton systems J d = rhs

    Returns (d, singular) where singular flags systems with an
    ill-conditioned Newton matrix (cond(J) > 1 / RANK_RTOL); their rows of d
    are zero.
    """

    cond = np.linalg.cond(J)
    singular = ~(np.isfinite(cond) & (cond * mcore.RANK_RTOL <= 1.0))
    d = np.zeros_like(rhs)
    ok = np.flatnonzero(~singular)
    if ok.size:
        try:
            d[ok] = np.linalg.solve(J[ok], rhs[ok][..., None])[..., 0]
        except np.linalg.LinAlgError:
            for i in ok:
                d[i] = scipy.linalg.solve(J[i], rhs[i])
    return d, singular


def solve_many(
    H, q, lo, up, z0=None, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER
):
    """Semismooth Newton over a stack of independent box LVIs

    Every problem follows exactly the iteration of solve(): Newton step on
    the natural map, then Armijo backtracking on ||F|| (factor 0.5, constant
    1e-4). Components of z - (Hz + q) equal to a bound select D_ii = 0; when
    the line search fails at such a kink the step is retried once with
    D_ii = 1 before the problem is given up as MaxIter.

    Parameters
    ----------
    H : array_like (b, k, k)
    q, lo, up : array_like (b, k)
    z0 : array_like (b, k) or None
        starting points, default mid(0, lo, up)
    tol : float
        stop when ||F(z)|| <= tol
    max_iter : int
        Newton iteration budget per problem

    Returns
    -------
    list of BoxLviSolution
        in input order
    """

    if tol <= 0:
        raise InvalidArgumentError(f"** tol must be positive: {tol}")
    H = np.asarray(H, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    if H.ndim != 3 or H.shape[1] != H.shape[2]:
        raise InvalidArgumentError(f"** H must be a stack of square matrices: {H.shape}")
    nb, k = H.shape[0], H.shape[1]
    for name, arr in (("q", q), ("lo", lo), ("up", up)):
        if arr.shape != (nb, k):
            raise InvalidArgumentError(f"** {name} must have shape {(nb, k)}: {arr.shape}")
    if z0 is None:
        z = mid(np.zeros((nb, k)), lo, up)
    else:
        z = np.array(z0, dtype=np.float64)
        if z.shape != (nb, k):
            raise InvalidArgumentError(f"** z0 must have shape {(nb, k)}: {z.shape}")

    eye = np.eye(k, dtype=bool)
    F, v = _natural_map(H, q, lo, up, z)
    norm_f = np.linalg.norm(F, axis=1)
    status = np.full(nb, None, dtype=object)
    iterations = np.zeros(nb, dtype=int)
    tie_one = np.zeros(nb, dtype=bool)

    done = norm_f <= tol
    status[done] = mcore.Status.CONVERGED
    active = ~done

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iterations[idx] += 1
        H_a, q_a, lo_a, up_a = H[idx], q[idx], lo[idx], up[idx]
        v_a, z_a, F_a, nf_a = v[idx], z[idx], F[idx], norm_f[idx]

        inside = (v_a > lo_a) & (v_a < up_a)
        on_bound = (v_a == lo_a) | (v_a == up_a)
        D = inside | (tie_one[idx, None] & on_bound)
        # Rows with D_ii = 1 are rows of H, the others rows of I
        J = np.where(D[:, :, None], H_a, eye[None, :, :].astype(np.float64))
        d, singular = _newton_directions(J, -F_a)

        step = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        pending = ~singular
        for _ in range(mcore.MAX_BACKTRACKS):
            if not pending.any():
                break
            p_idx = np.flatnonzero(pending)
            trial = z_a[p_idx] + step[p_idx, None] * d[p_idx]
            F_t, v_t = _natural_map(
                H_a[p_idx], q_a[p_idx], lo_a[p_idx], up_a[p_idx], trial
            )
            nf_t = np.linalg.norm(F_t, axis=1)
            ok = nf_t <= (1.0 - mcore.ARMIJO_SIGMA * step[p_idx]) * nf_a[p_idx]
            accepted[p_idx[ok]] = True
            ok_idx = idx[p_idx[ok]]
            z[ok_idx] = trial[ok]
            F[ok_idx] = F_t[ok]
            v[ok_idx] = v_t[ok]
            norm_f[ok_idx] = nf_t[ok]
            pending[p_idx[ok]] = False
            step[p_idx[~ok]] *= mcore.BACKTRACK_FACTOR

        sing_idx = idx[singular]
        status[sing_idx] = mcore.Status.SINGULAR
        active[sing_idx] = False

        tie_one[idx[accepted]] = False
        failed = idx[~accepted & ~singular]
        retry = failed[~tie_one[failed]]
        stalled = failed[tie_one[failed]]
        tie_one[retry] = True
        status[stalled] = mcore.Status.MAXITER
        active[stalled] = False

        conv = idx[accepted & (norm_f[idx] <= tol)]
        status[conv] = mcore.Status.CONVERGED
        active[conv] = False

    status[np.flatnonzero(active)] = mcore.Status.MAXITER
    # a stalled problem may already sit below tol
    late = (status == mcore.Status.MAXITER) & (norm_f <= tol)
    status[late] = mcore.Status.CONVERGED

    return [
        BoxLviSolution(
            z=z[i].copy(),
            residual=float(norm_f[i]),
            iterations=int(iterations[i]),
            status=status[i],
        )
        for i in range(nb)
    ]


def solve(p, z0=None, tol=mcore.INNER_TOL, max_iter=mcore.INNER_MAX_ITER):
    """Solve one box LVI by semismooth Newton on the natural map

    Parameters
    ----------
    p : BoxLvi
        H should have a positive definite symmetric part (not verified)
    z0 : array_like or None
        starting point, default mid(0, lo, up)
    tol : float
        convergence threshold on ||F(z)||
    max_iter : int
        Newton iteration budget

    Returns
    -------
    BoxLviSolution
    """

    z0 = None if z0 is None else np.asarray(z0, dtype=np.float64)[None, :]
    return solve_many(
        p.H[None], p.q[None], p.lo[None], p.up[None], z0=z0, tol=tol, max_iter=max_iter
    )[0]


def brute_force(p, verbose=False):
    """Solve a small box LVI by enumerating all 3^k active sets

    Each coordinate is assigned to its lower bound, the interior, or its
    upper bound. Bound coordinates are fixed, the interior system
    H_II z_I = -q_I - H_IB z_B is solved, and the assignment is accepted when
    the interior part lies strictly inside the box and the multipliers
    w = Hz + q have the right signs (w_i >= -1e-10 at lo, w_i <= 1e-10 at up).

    Parameters
    ----------
    p : BoxLvi
        k <= 12, H with positive definite symmetric part
    verbose : bool
        If True outputs each accepted assignment

    Returns
    -------
    ndarray (k,)

    Raises
    -------
    InvalidArgumentError
        k exceeds the enumeration limit
    InfeasibleError
        no assignment accepted
    NonUniquenessError
        accepted assignments disagree by more than 1e-8
    """

    k = p.k
    if k > mcore.BRUTE_MAX_DIM:
        raise InvalidArgumentError(
            f"** brute_force() is limited to k <= {mcore.BRUTE_MAX_DIM}, got {k}"
        )
    accepted = []
    for pattern in itertools.product((0, 1, 2), repeat=k):
        pattern = np.array(pattern)
        at_lo = pattern == 0
        inner = pattern == 1
        at_up = pattern == 2
        z = np.where(at_lo, p.lo, 0.0) + np.where(at_up, p.up, 0.0)
        if inner.any():
            fixed = ~inner
            rhs = -p.q[inner] - p.H[np.ix_(inner, fixed)] @ z[fixed]
            try:
                z[inner] = scipy.linalg.solve(p.H[np.ix_(inner, inner)], rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all((z[inner] > p.lo[inner]) & (z[inner] < p.up[inner])):
                continue
        w = p.H @ z + p.q
        if np.all(w[at_lo] >= -mcore.BRUTE_SIGN_TOL) and np.all(
            w[at_up] <= mcore.BRUTE_SIGN_TOL
        ):
            if verbose:
                print(f"accepted pattern {pattern.tolist()}: z = {z}")
            accepted.append(z)

    if not accepted:
        print("** brute_force(): no active set accepted")
        raise InfeasibleError("no active-set assignment solves the box LVI")
    first = accepted[0]
    for other in accepted[1:]:
        if np.max(np.abs(other - first)) > mcore.BRUTE_AGREE_TOL:
            print("** brute_force(): accepted active sets disagree")
            raise NonUniquenessError(
                f"{len(accepted)} accepted assignments with distinct solutions"
            )
    return first
