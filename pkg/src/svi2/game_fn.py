#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Two-player two-stage stochastic quadratic game
Contains:
- FirstStageGame, GameScenario value types
- first_stage_matrix(), assemble_scenario(), to_instance()
- player_costs(), expected_player_costs()
- split_instance() inverse of to_instance()

Player i picks x_i in [a_i, b_i] to minimize

    theta_i = 1/2 x_i^T H_i x_i + q_i^T x_i + x_i^T P_i x_-i

plus the expected optimal value of its recourse problem over
y_i in [l_i, u_i] with objective

    phi_i = 1/2 y_i^T Q_i y_i + c_i^T y_i + sum_k y_i^T S_ik x_k + y_i^T O_i y_-i

Stacking both players' first-order conditions gives the matrix form
A = [[H1, P1], [P2, H2]], B = diag(S11^T, S22^T), L = [[S11, S12], [S21, S22]],
M = [[Q1, O1], [O2, Q2]], h1 = (q1, q2), h2 = (c1, c2).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from svi2.model_fn import InvalidArgumentError, Scenario, TwoStageInstance


@dataclass(frozen=True, eq=False)
class FirstStageGame:
    """
    Scenario-independent data of the game

    ...

    Attributes
    ----------
    H1 : ndarray (n1, n1)
    H2 : ndarray (n2, n2)
        symmetric positive definite player Hessians
    P1 : ndarray (n1, n2)
    P2 : ndarray (n2, n1)
        first-stage coupling
    q1 : ndarray (n1,)
    q2 : ndarray (n2,)
    a, b : ndarray (n1 + n2,)
        box of the stacked decision x = (x1, x2)
    """

    H1: np.ndarray
    H2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def n1(self):
        return self.H1.shape[0]

    @property
    def n2(self):
        return self.H2.shape[0]


@dataclass(frozen=True, eq=False)
class GameScenario:
    """
    Recourse data of the game for one realization of xi

    ...

    Attributes
    ----------
    S11, S12, S21, S22 : ndarray
        S_ik is (m_i, n_k), coupling of x_k into player i's recourse
    O1 : ndarray (m1, m2)
    O2 : ndarray (m2, m1)
        recourse coupling
    Q1 : ndarray (m1, m1)
    Q2 : ndarray (m2, m2)
        symmetric positive definite recourse Hessians
    c1, c2 : ndarray
    l, u : ndarray (m1 + m2,)
        box of the stacked recourse y = (y1, y2)
    weight : float
    """

    S11: np.ndarray
    S12: np.ndarray
    S21: np.ndarray
    S22: np.ndarray
    O1: np.ndarray
    O2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    l: np.ndarray
    u: np.ndarray
    weight: float = 1.0

    @property
    def m1(self):
        return self.Q1.shape[0]

    @property
    def m2(self):
        return self.Q2.shape[0]


def first_stage_matrix(game):
    """Return (A, h1) with A = [[H1, P1], [P2, H2]] and h1 = (q1, q2)"""

    A = np.block([[game.H1, game.P1], [game.P2, game.H2]])
    h1 = np.concatenate([game.q1, game.q2])
    return A, h1


def assemble_scenario(gs):
    """Matrix form of one game scenario

    Returns
    -------
    Scenario
        B = diag(S11^T, S22^T), L = [[S11, S12], [S21, S22]],
        M = [[Q1, O1], [O2, Q2]], h2 = (c1, c2)
    """

    return Scenario(
        B=scipy.linalg.block_diag(gs.S11.T, gs.S22.T),
        L=np.block([[gs.S11, gs.S12], [gs.S21, gs.S22]]),
        M=np.block([[gs.Q1, gs.O1], [gs.O2, gs.Q2]]),
        h2=np.concatenate([gs.c1, gs.c2]),
        l=gs.l,
        u=gs.u,
        weight=gs.weight,
    )


def to_instance(game, scenarios, alpha=None, metadata=None):
    """Build the TwoStageInstance of a game over the given scenarios

    Parameters
    ----------
    game : FirstStageGame
    scenarios : sequence of GameScenario
        weights must sum to 1
    alpha : float or None
        Hessian shift used to build H2, kept in the block metadata
    metadata : dict or None

    Returns
    -------
    TwoStageInstance
        with blocks {n1, n2, m1, m2, alpha}
    """

    scenarios = list(scenarios)
    if not scenarios:
        raise InvalidArgumentError("** a game instance needs at least one scenario")
    m1, m2 = scenarios[0].m1, scenarios[0].m2
    if any(gs.m1 != m1 or gs.m2 != m2 for gs in scenarios):
        raise InvalidArgumentError("** game scenarios disagree on (m1, m2)")
    A, h1 = first_stage_matrix(game)
    return TwoStageInstance(
        n=game.n1 + game.n2,
        m=m1 + m2,
        A=A,
        h1=h1,
        a=game.a,
        b=game.b,
        scenarios=[assemble_scenario(gs) for gs in scenarios],
        blocks={
            "n1": game.n1,
            "n2": game.n2,
            "m1": m1,
            "m2": m2,
            "alpha": None if alpha is None else float(alpha),
        },
        metadata=metadata or {},
    )


def player_costs(game, gs, x, y):
    """Objective values of both players at (x, y) for one scenario

    Parameters
    ----------
    game : FirstStageGame
    gs : GameScenario
    x : array_like (n1 + n2,)
    y : array_like (m1 + m2,)
        typically the second-stage solution at (x, xi)

    Returns
    -------
    tuple of float
        (theta_1 + phi_1, theta_2 + phi_2)
    """

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, m1 = game.n1, gs.m1
    if x.shape != (n1 + game.n2,) or y.shape != (m1 + gs.m2,):
        raise InvalidArgumentError(f"** x {x.shape} or y {y.shape} does not fit the game")
    x1, x2 = x[:n1], x[n1:]
    y1, y2 = y[:m1], y[m1:]

    theta1 = 0.5 * x1 @ game.H1 @ x1 + game.q1 @ x1 + x1 @ game.P1 @ x2
    theta2 = 0.5 * x2 @ game.H2 @ x2 + game.q2 @ x2 + x2 @ game.P2 @ x1
    phi1 = (
        0.5 * y1 @ gs.Q1 @ y1
        + gs.c1 @ y1
        + y1 @ (gs.S11 @ x1 + gs.S12 @ x2)
        + y1 @ gs.O1 @ y2
    )
    phi2 = (
        0.5 * y2 @ gs.Q2 @ y2
        + gs.c2 @ y2
        + y2 @ (gs.S21 @ x1 + gs.S22 @ x2)
        + y2 @ gs.O2 @ y1
    )
    return float(theta1 + phi1), float(theta2 + phi2)


def _is_symmetric(H):
    return np.allclose(H, H.T, rtol=1e-10, atol=1e-12)


def split_instance(inst):
    """Recover the game data of an instance with block metadata

    Inverse of to_instance(). The Hessian blocks H1, H2, Q1, Q2 must be
    symmetric and every B must equal diag(S11^T, S22^T) with S11, S22 read
    from L, otherwise the matrix form is not the gradient of player costs.

    Parameters
    ----------
    inst : TwoStageInstance
        blocks must carry n1, n2, m1, m2

    Returns
    -------
    tuple
        (FirstStageGame, list of GameScenario) with the instance weights

    Raises
    -------
    InvalidArgumentError
        missing block metadata or a matrix form without player costs
    """

    blocks = inst.blocks or {}
    try:
        n1, n2, m1, m2 = (int(blocks[key]) for key in ("n1", "n2", "m1", "m2"))
    except (KeyError, TypeError) as err:
        raise InvalidArgumentError(f"** instance has no game block metadata: {err!r}") from err
    if n1 + n2 != inst.n or m1 + m2 != inst.m or min(n1, n2, m1, m2) < 1:
        raise InvalidArgumentError(
            f"** blocks {(n1, n2, m1, m2)} do not split n={inst.n}, m={inst.m}"
        )

    A = inst.A
    game = FirstStageGame(
        H1=A[:n1, :n1],
        H2=A[n1:, n1:],
        P1=A[:n1, n1:],
        P2=A[n1:, :n1],
        q1=inst.h1[:n1],
        q2=inst.h1[n1:],
        a=inst.a,
        b=inst.b,
    )
    if not (_is_symmetric(game.H1) and _is_symmetric(game.H2)):
        raise InvalidArgumentError("** first-stage player Hessians are not symmetric")

    scenarios = []
    for j, sc in enumerate(inst.scenarios):
        gs = GameScenario(
            S11=sc.L[:m1, :n1],
            S12=sc.L[:m1, n1:],
            S21=sc.L[m1:, :n1],
            S22=sc.L[m1:, n1:],
            O1=sc.M[:m1, m1:],
            O2=sc.M[m1:, :m1],
            Q1=sc.M[:m1, :m1],
            Q2=sc.M[m1:, m1:],
            c1=sc.h2[:m1],
            c2=sc.h2[m1:],
            l=sc.l,
            u=sc.u,
            weight=sc.weight,
        )
        if not (_is_symmetric(gs.Q1) and _is_symmetric(gs.Q2)):
            raise InvalidArgumentError(f"** scenario {j}: recourse Hessians are not symmetric")
        if not np.allclose(sc.B, scipy.linalg.block_diag(gs.S11.T, gs.S22.T), atol=1e-12):
            raise InvalidArgumentError(f"** scenario {j}: B is not diag(S11^T, S22^T)")
        scenarios.append(gs)
    return game, scenarios


def expected_player_costs(inst, x, ys):
    """Scenario-weighted player costs of a first-stage point and its recourse

    Parameters
    ----------
    inst : TwoStageInstance
        with game block metadata, see split_instance()
    x : array_like (n,)
    ys : array_like (N, m)
        recourse per scenario, typically the second-stage solutions at x

    Returns
    -------
    tuple of float
        (E[theta_1 + phi_1], E[theta_2 + phi_2])
    """

    game, scenarios = split_instance(inst)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.shape != (inst.n_scenarios, inst.m):
        raise InvalidArgumentError(
            f"** ys must have shape {(inst.n_scenarios, inst.m)}, got {ys.shape}"
        )
    costs = np.zeros(2)
    for gs, y in zip(scenarios, ys):
        costs += gs.weight * np.array(player_costs(game, gs, x, y))
    return float(costs[0]), float(costs[1])
