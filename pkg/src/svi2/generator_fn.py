#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Seeded random instances of the two-player game that are strongly monotone
by construction
Contains:
- GeneratorConfig, StructuralData, SchurReport value types
- generate(), draw_structure(), draw_scenarios(), assemble()
- schur_check() block-wise positive definiteness report
- Descriptive Exceptions specific to this package

All randomness comes from one numpy.random.Generator. draw_structure()
consumes it in this order:

    1. standard normal n1 x n1 (orthogonal factor of H1), U[1,2]^n1 spectrum
    2. P1 (n1 x n2), P2 (n2 x n1), entries U[-1,1]
    3. S11 bar, S12 bar, S21 bar, S22 bar, entries U[-1,1]
    4. O1 bar, O2 bar, entries U[-1,1]
    5. Q1 bar, Q2 bar: upper off-diagonal U[-1,1] row by row, then the
       diagonal as m + alpha - U[0,1)
    6. b ~ U[1,50]^n, l bar ~ U[0,1]^m, u bar ~ U[3,50]^m, h1 ~ U[-5,5]^n

and draw_scenarios() then draws xi as an N x 10 block of U[0,1] followed by
an N x m block of U[-1,1] (the h2 part).
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from svi2 import __version__, game_fn
from svi2.game_fn import FirstStageGame, GameScenario
from svi2.model_fn import InvalidArgumentError, NumericalError, min_sym_eigenvalue


# Custom Exceptions
class ConstructionError(Exception):
    """Exception class for a drawn structure that fails the positivity checks"""


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Dimensions and seed of a generated instance

    ...

    Attributes
    ----------
    n1, n2 : int
        first-stage decision sizes of player 1 and 2
    m1, m2 : int
        second-stage decision sizes of player 1 and 2
    alpha : float
        shift of H2 and of the Q bar diagonals, > 0
    n_scenarios : int
        number of scenarios N
    seed : int
        non-negative seed of numpy.random.default_rng
    """

    n1: int = 3
    n2: int = 3
    m1: int = 5
    m2: int = 5
    alpha: float = 1.0
    n_scenarios: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("n1", "n2", "m1", "m2", "n_scenarios"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidArgumentError(f"** {name} must be an integer: {value!r}")
            if value < 1:
                raise InvalidArgumentError(f"** {name} must be >= 1: {value}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise InvalidArgumentError(f"** seed must be an integer: {self.seed!r}")
        if self.seed < 0:
            raise InvalidArgumentError(f"** seed must be non-negative: {self.seed}")
        if not float(self.alpha) > 0.0:
            raise InvalidArgumentError(f"** alpha must be positive: {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def m(self):
        return self.m1 + self.m2

    @classmethod
    def from_dict(cls, cfg):
        """Build from a dict of keyword values, rejecting unknown keys"""

        if not isinstance(cfg, dict):
            raise InvalidArgumentError(f"** generator config must be a dict: {cfg!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise InvalidArgumentError(f"** unknown generator keys: {unknown}")
        return cls(**cfg)

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class StructuralData:
    """
    Scenario-independent draws of a generated game

    ...

    Attributes
    ----------
    cfg : GeneratorConfig
    H1, H2, P1, P2 : ndarray
        first-stage game matrices
    S_bar : tuple of ndarray
        (S11 bar, S12 bar, S21 bar, S22 bar)
    O_bar : tuple of ndarray
        (O1 bar, O2 bar)
    Q_bar : tuple of ndarray
        (Q1 bar, Q2 bar)
    b, l_bar, u_bar, h1 : ndarray
    lam_min_sym : float
        smallest eigenvalue of A + A^T
    """

    cfg: GeneratorConfig
    H1: np.ndarray
    H2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    S_bar: tuple
    O_bar: tuple
    Q_bar: tuple
    b: np.ndarray
    l_bar: np.ndarray
    u_bar: np.ndarray
    h1: np.ndarray
    lam_min_sym: float

    @property
    def game(self):
        """First-stage part as a FirstStageGame with a = 0"""
        n1 = self.cfg.n1
        return FirstStageGame(
            H1=self.H1,
            H2=self.H2,
            P1=self.P1,
            P2=self.P2,
            q1=self.h1[:n1],
            q2=self.h1[n1:],
            a=np.zeros(self.cfg.n),
            b=self.b,
        )

    @property
    def diagonal_shift(self):
        """(n + m)^2 / lam_min(A + A^T), added to both Q blocks"""
        return (self.cfg.n + self.cfg.m) ** 2 / self.lam_min_sym


@dataclass(frozen=True)
class SchurReport:
    """
    Block-wise positive definiteness margins of an instance

    ...

    Attributes
    ----------
    certified : bool
        all margins positive
    h1_margin : float
        lam_min(sym H1)
    first_margin : float
        lam_min(4 sym H2 - C^T (sym H1)^{-1} C), C = P1 + P2^T
    second_margins : tuple of float
        per scenario lam_min(M + M^T - K^T (A + A^T)^{-1} K), K = B + L^T
    min_second_margin : float
    """

    certified: bool
    h1_margin: float
    first_margin: float
    second_margins: tuple
    min_second_margin: float

    def as_dict(self):
        return {
            "certified": self.certified,
            "h1_margin": self.h1_margin,
            "first_margin": self.first_margin,
            "second_margins": list(self.second_margins),
            "min_second_margin": self.min_second_margin,
        }


def _sym(mat):
    return 0.5 * (mat + mat.T)


def _diag_dominant_symmetric(rng, size, m, alpha):
    """Symmetric matrix, off-diagonal U[-1,1], diagonal in (m - 1 + alpha, m + alpha]"""

    upper = np.triu(rng.uniform(-1.0, 1.0, size=(size, size)), k=1)
    mat = upper + upper.T
    mat[np.diag_indices(size)] = m + alpha - rng.random(size)
    return mat


def draw_structure(cfg, rng, verbose=False):
    """Draw the scenario-independent part of a game instance

    Parameters
    ----------
    cfg : GeneratorConfig
    rng : numpy.random.Generator
        consumed in the order documented for this module
    verbose : bool
        If True outputs the positivity margins

    Returns
    -------
    StructuralData

    Raises
    -------
    ConstructionError
        lam_min(A + A^T) <= 0
    """

    n1, n2, m1, m2, alpha = cfg.n1, cfg.n2, cfg.m1, cfg.m2, cfg.alpha
    n, m = cfg.n, cfg.m

    orth, _ = scipy.linalg.qr(rng.standard_normal((n1, n1)))
    spectrum = rng.uniform(1.0, 2.0, size=n1)
    H1 = _sym((orth * spectrum) @ orth.T)
    P1 = rng.uniform(-1.0, 1.0, size=(n1, n2))
    P2 = rng.uniform(-1.0, 1.0, size=(n2, n1))
    coupling = P1 + P2.T
    H2 = _sym(
        0.25 * coupling.T @ scipy.linalg.solve(H1, coupling, assume_a="pos")
        + alpha * np.eye(n2)
    )

    S_bar = (
        rng.uniform(-1.0, 1.0, size=(m1, n1)),
        rng.uniform(-1.0, 1.0, size=(m1, n2)),
        rng.uniform(-1.0, 1.0, size=(m2, n1)),
        rng.uniform(-1.0, 1.0, size=(m2, n2)),
    )
    O_bar = (
        rng.uniform(-1.0, 1.0, size=(m1, m2)),
        rng.uniform(-1.0, 1.0, size=(m2, m1)),
    )
    Q_bar = (
        _diag_dominant_symmetric(rng, m1, m, alpha),
        _diag_dominant_symmetric(rng, m2, m, alpha),
    )
    b = rng.uniform(1.0, 50.0, size=n)
    l_bar = rng.uniform(0.0, 1.0, size=m)
    u_bar = rng.uniform(3.0, 50.0, size=m)
    h1 = rng.uniform(-5.0, 5.0, size=n)

    A = np.block([[H1, P1], [P2, H2]])
    lam = 2.0 * min_sym_eigenvalue(A)
    if verbose:
        print(f"lam_min(A + A^T) = {lam:.6e}")
    if not lam > 0.0:
        print(f"** lam_min(A + A^T) = {lam:.3e} is not positive")
        raise ConstructionError(f"A + A^T is not positive definite (seed {cfg.seed})")

    return StructuralData(
        cfg=cfg,
        H1=H1,
        H2=H2,
        P1=P1,
        P2=P2,
        S_bar=S_bar,
        O_bar=O_bar,
        Q_bar=Q_bar,
        b=b,
        l_bar=l_bar,
        u_bar=u_bar,
        h1=h1,
        lam_min_sym=lam,
    )


def draw_scenarios(structure, n_scenarios, rng):
    """Draw n_scenarios iid game scenarios of weight 1/n_scenarios

    xi is uniform on [0,1]^10 x [-1,1]^m: xi_1..xi_6 scale S11, S12, S21,
    S22, O1, O2; xi_7, xi_8 shift Q1, Q2; xi_9, xi_10 scale the bounds and
    the remaining m components form h2.

    Returns
    -------
    list of GameScenario
    """

    if n_scenarios < 1:
        raise InvalidArgumentError(f"** n_scenarios must be >= 1: {n_scenarios}")
    cfg = structure.cfg
    xi = rng.uniform(0.0, 1.0, size=(n_scenarios, 10))
    h2 = rng.uniform(-1.0, 1.0, size=(n_scenarios, cfg.m))
    S11, S12, S21, S22 = structure.S_bar
    O1, O2 = structure.O_bar
    Q1, Q2 = structure.Q_bar
    shift = structure.diagonal_shift
    weight = 1.0 / n_scenarios

    scenarios = []
    for j in range(n_scenarios):
        s = xi[j]
        scenarios.append(
            GameScenario(
                S11=s[0] * S11,
                S12=s[1] * S12,
                S21=s[2] * S21,
                S22=s[3] * S22,
                O1=s[4] * O1,
                O2=s[5] * O2,
                Q1=Q1 + (s[6] + shift) * np.eye(cfg.m1),
                Q2=Q2 + (s[7] + shift) * np.eye(cfg.m2),
                c1=h2[j, : cfg.m1],
                c2=h2[j, cfg.m1 :],
                l=(1.0 + s[8]) * structure.l_bar,
                u=(1.0 + s[9]) * structure.u_bar,
                weight=weight,
            )
        )
    return scenarios


def assemble(structure, game_scenarios, metadata=None):
    """TwoStageInstance of a drawn structure over the given game scenarios"""

    meta = {"generator": structure.cfg.as_dict(), "seed": structure.cfg.seed}
    meta["version"] = __version__
    meta.update(metadata or {})
    return game_fn.to_instance(
        structure.game, game_scenarios, alpha=structure.cfg.alpha, metadata=meta
    )


def generate(cfg, verbose=False):
    """Generate a strongly monotone two-stage box SVI instance

    Parameters
    ----------
    cfg : GeneratorConfig
    verbose : bool
        If True outputs the positivity margins

    Returns
    -------
    TwoStageInstance
        with block metadata {n1, n2, m1, m2, alpha}; identical for equal cfg
    """

    rng = np.random.default_rng(cfg.seed)
    structure = draw_structure(cfg, rng, verbose=verbose)
    scenarios = draw_scenarios(structure, cfg.n_scenarios, rng)
    return assemble(structure, scenarios)


def schur_check(inst, verbose=False):
    """Block-wise positive definiteness margins of an instance

    Parameters
    ----------
    inst : TwoStageInstance
        must carry block metadata with n1 and n2
    verbose : bool
        If True outputs the margins

    Returns
    -------
    SchurReport

    Raises
    -------
    InvalidArgumentError
        block metadata missing or inconsistent with n
    NumericalError
        a block needed for the complement is singular
    """

    blocks = inst.blocks
    if not blocks or "n1" not in blocks or "n2" not in blocks:
        raise InvalidArgumentError("** schur_check() needs block metadata n1, n2")
    n1 = int(blocks["n1"])
    if n1 + int(blocks["n2"]) != inst.n:
        raise InvalidArgumentError(
            f"** block metadata n1 + n2 = {n1 + int(blocks['n2'])} differs from n = {inst.n}"
        )
    A = inst.A
    H1s = _sym(A[:n1, :n1])
    H2s = _sym(A[n1:, n1:])
    coupling = A[:n1, n1:] + A[n1:, :n1].T
    sym_a = A + A.T
    try:
        h1_margin = min_sym_eigenvalue(H1s)
        first_margin = min_sym_eigenvalue(
            4.0 * H2s - coupling.T @ scipy.linalg.solve(H1s, coupling, assume_a="sym")
        )
        second = []
        for sc in inst.scenarios:
            cross = sc.B + sc.L.T
            second.append(
                min_sym_eigenvalue(
                    sc.M + sc.M.T
                    - cross.T @ scipy.linalg.solve(sym_a, cross, assume_a="sym")
                )
            )
    except (np.linalg.LinAlgError, ValueError) as err:
        raise NumericalError("** Schur complement blocks are singular") from err

    min_second = min(second)
    if verbose:
        print(f"h1_margin={h1_margin:.6e} first_margin={first_margin:.6e}")
        print(f"min_second_margin={min_second:.6e}")
    return SchurReport(
        certified=h1_margin > 0.0 and first_margin > 0.0 and min_second > 0.0,
        h1_margin=h1_margin,
        first_margin=first_margin,
        second_margins=tuple(second),
        min_second_margin=min_second,
    )
