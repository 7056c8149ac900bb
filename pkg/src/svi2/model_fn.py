#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Data model for two-stage stochastic box-constrained VIs
Contains:
- Scenario, TwoStageInstance, BoxLvi, MonotonicityCertificate value types
- mid(), first_stage_residual(), box_violation(), certify_strong_monotonicity()
- JSON instance codec
- Descriptive Exceptions specific to this package
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

import numpy as np
import scipy.linalg

from svi2.model import mcore


# Custom Exceptions
class InvalidArgumentError(ValueError):
    """Exception class for malformed or dimension-inconsistent input"""


class NumericalError(ArithmeticError):
    """Exception class for failure of a dense linear algebra routine"""


def _as_array(value, name, ndim):
    """Return a read-only float64 copy of value with the expected rank"""

    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise InvalidArgumentError(f"** {name} is not numeric") from err
    if arr.ndim != ndim:
        raise InvalidArgumentError(
            f"** {name} must have {ndim} dimension(s), got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"** {name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    One realization xi^j of the second-stage data

    ...

    Attributes
    ----------
    B : ndarray (n, m)
        coupling of the second-stage decision into the first stage
    L : ndarray (m, n)
        coupling of the first-stage decision into the second stage
    M : ndarray (m, m)
        second-stage operator
    h2 : ndarray (m,)
    l, u : ndarray (m,)
        second-stage box, l < u componentwise
    weight : float
        probability mass of the scenario
    """

    B: np.ndarray
    L: np.ndarray
    M: np.ndarray
    h2: np.ndarray
    l: np.ndarray
    u: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        for name, ndim in (("B", 2), ("L", 2), ("M", 2), ("h2", 1), ("l", 1), ("u", 1)):
            object.__setattr__(self, name, _as_array(getattr(self, name), name, ndim))
        m = self.h2.shape[0]
        n = self.B.shape[0]
        if self.M.shape != (m, m):
            raise InvalidArgumentError(f"** M must be {m}x{m}, got {self.M.shape}")
        if self.B.shape != (n, m) or self.L.shape != (m, n):
            raise InvalidArgumentError(
                f"** B {self.B.shape} and L {self.L.shape} are not transposed shapes"
            )
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise InvalidArgumentError("** second-stage bounds must have length m")
        if not np.all(self.l < self.u):
            raise InvalidArgumentError("** second-stage bounds require l < u")
        weight = float(self.weight)
        if not 0.0 <= weight <= 1.0:
            raise InvalidArgumentError(f"** scenario weight out of [0, 1]: {weight}")
        object.__setattr__(self, "weight", weight)

    @property
    def n(self):
        """first-stage dimension"""
        return self.B.shape[0]

    @property
    def m(self):
        """second-stage dimension"""
        return self.M.shape[0]


@dataclass(frozen=True, eq=False)
class TwoStageInstance:
    """
    First-stage data plus an ordered list of scenarios

    The scenario order is the sample order xi^1, ..., xi^N and every
    reduction over scenarios iterates in it.

    ...

    Attributes
    ----------
    n, m : int
        first and second stage dimensions
    A : ndarray (n, n)
    h1 : ndarray (n,)
    a, b : ndarray (n,)
        first-stage box, a < b componentwise
    scenarios : tuple of Scenario
    blocks : MappingProxyType or None
        player block split n1, n2, m1, m2, alpha (generator output carries it)
    metadata : MappingProxyType
        free-form provenance (generator config, seed, tool version)
    """

    n: int
    m: int
    A: np.ndarray
    h1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    scenarios: tuple
    blocks: dict = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = int(self.n), int(self.m)
        if n < 1 or m < 1:
            raise InvalidArgumentError(f"** dimensions must be positive: n={n}, m={m}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        for name, ndim in (("A", 2), ("h1", 1), ("a", 1), ("b", 1)):
            object.__setattr__(self, name, _as_array(getattr(self, name), name, ndim))
        if self.A.shape != (n, n):
            raise InvalidArgumentError(f"** A must be {n}x{n}, got {self.A.shape}")
        for name in ("h1", "a", "b"):
            if getattr(self, name).shape != (n,):
                raise InvalidArgumentError(f"** {name} must have length {n}")
        if not np.all(self.a < self.b):
            raise InvalidArgumentError("** first-stage bounds require a < b")

        scenarios = tuple(self.scenarios)
        if not scenarios:
            raise InvalidArgumentError("** an instance needs at least one scenario")
        for j, sc in enumerate(scenarios):
            if not isinstance(sc, Scenario):
                raise InvalidArgumentError(f"** scenario {j} is not a Scenario")
            if sc.n != n or sc.m != m:
                raise InvalidArgumentError(
                    f"** scenario {j} has dimensions ({sc.n}, {sc.m}), expected ({n}, {m})"
                )
        total = math.fsum(sc.weight for sc in scenarios)
        if abs(total - 1.0) > mcore.WEIGHT_SUM_TOL:
            raise InvalidArgumentError(f"** scenario weights sum to {total!r}, not 1")
        object.__setattr__(self, "scenarios", scenarios)

        if self.blocks is not None:
            object.__setattr__(self, "blocks", MappingProxyType(dict(self.blocks)))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata or {})))

    def __repr__(self):
        cls = self.__class__.__name__
        return f"{cls}(n={self.n}, m={self.m}, N={self.n_scenarios})"

    def __str__(self):
        string_val = "".join(
            [
                "\nTwo-Stage Box SVI",
                f"\n  First stage dim n: {self.n}",
                f"\n  Second stage dim m: {self.m}",
                f"\n  Scenarios N: {self.n_scenarios}",
                f"\n  Blocks: {dict(self.blocks) if self.blocks else None}",
            ]
        )
        return string_val

    @property
    def n_scenarios(self):
        """number of scenarios N"""
        return len(self.scenarios)

    @cached_property
    def weights(self):
        """scenario weights as ndarray (N,)"""
        arr = np.array([sc.weight for sc in self.scenarios])
        arr.setflags(write=False)
        return arr

    @cached_property
    def stacked(self):
        """scenario data stacked along a leading axis for batched work"""
        return MappingProxyType(
            {
                key: np.stack([getattr(sc, key) for sc in self.scenarios])
                for key in ("B", "L", "M", "h2", "l", "u")
            }
        )

    def with_scenarios(self, scenarios, **changes):
        """Return a copy of the instance on another scenario list"""
        return dataclasses.replace(self, scenarios=tuple(scenarios), **changes)


@dataclass(frozen=True, eq=False)
class BoxLvi:
    """
    Box-constrained linear VI  0 in Hz + q + N_[lo,up](z)

    ...

    Attributes
    ----------
    H : ndarray (k, k)
    q : ndarray (k,)
    lo, up : ndarray (k,)
        box, lo < up componentwise
    """

    H: np.ndarray
    q: np.ndarray
    lo: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        for name, ndim in (("H", 2), ("q", 1), ("lo", 1), ("up", 1)):
            object.__setattr__(self, name, _as_array(getattr(self, name), name, ndim))
        k = self.q.shape[0]
        if self.H.shape != (k, k):
            raise InvalidArgumentError(f"** H must be {k}x{k}, got {self.H.shape}")
        if self.lo.shape != (k,) or self.up.shape != (k,):
            raise InvalidArgumentError("** box bounds must match q")
        if not np.all(self.lo < self.up):
            raise InvalidArgumentError("** box requires lo < up")

    @property
    def k(self):
        """problem dimension"""
        return self.q.shape[0]


@dataclass(frozen=True, eq=False)
class MonotonicityCertificate:
    """
    Sampled strong monotonicity certificate of an instance

    ...

    Attributes
    ----------
    min_eig_sym : tuple of float
        smallest eigenvalue of sym([[A, B_j], [L_j, M_j]]) for each scenario j
    kappa : float
        min over scenarios of max(min_eig_sym, 0)
    certified : bool
        kappa > 0
    """

    min_eig_sym: tuple
    kappa: float
    certified: bool

    def as_dict(self):
        """JSON-ready representation"""
        return {
            "min_eig_sym": list(self.min_eig_sym),
            "kappa": self.kappa,
            "certified": self.certified,
        }


def mid(v, lo, up):
    """Componentwise median of (v, lo, up), i.e. the projection onto [lo, up]

    Parameters
    ----------
    v, lo, up : array_like
        equal-length vectors (or equal-shape stacks), lo <= up

    Returns
    -------
    ndarray
        max(lo, min(v, up))

    Raises
    -------
    InvalidArgumentError
        shapes of v, lo, up disagree
    """

    v = np.asarray(v, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    if not v.shape == lo.shape == up.shape:
        raise InvalidArgumentError(
            f"** mid() dimension mismatch: {v.shape}, {lo.shape}, {up.shape}"
        )
    return np.maximum(lo, np.minimum(v, up))


def box_violation(x, a, b):
    """Return sum of [a - x]_+ + [x - b]_+ over the components of x"""

    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(np.maximum(a - x, 0.0)) + np.sum(np.maximum(x - b, 0.0)))


def expected_recourse(inst, y):
    """Return sum_j weight_j B_j y_j, exactly rounded per component

    Parameters
    ----------
    inst : TwoStageInstance
    y : array_like (N, m)
        one second-stage vector per scenario, in scenario order

    Returns
    -------
    ndarray (n,)
    """

    y = np.asarray(y, dtype=np.float64)
    if y.shape != (inst.n_scenarios, inst.m):
        raise InvalidArgumentError(
            f"** expected {inst.n_scenarios} second-stage vectors of length "
            f"{inst.m}, got shape {y.shape}"
        )
    terms = inst.weights[:, None] * np.einsum("jnm,jm->jn", inst.stacked["B"], y)
    # fsum rounds exactly, so the value does not depend on scenario order
    return np.array([math.fsum(terms[:, i]) for i in range(inst.n)])


def first_stage_residual(inst, x, y):
    """Natural-map residual of the first-stage VI

    res = || x - mid(x - A x - sum_j w_j B_j y_j - h1, a, b) ||_2

    Parameters
    ----------
    inst : TwoStageInstance
    x : array_like (n,)
    y : array_like (N, m)
        second-stage solutions at (x, xi^j), supplied by the caller

    Returns
    -------
    float
        0 iff x solves the SAA first-stage VI for the supplied y

    Raises
    -------
    InvalidArgumentError
        x or y dimension mismatch
    """

    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.n,):
        raise InvalidArgumentError(f"** x must have length {inst.n}, got {x.shape}")
    grad = inst.A @ x + expected_recourse(inst, y) + inst.h1
    return float(np.linalg.norm(x - mid(x - grad, inst.a, inst.b)))


def scenario_block_matrix(inst, sc):
    """Return G = [[A, B], [L, M]] for one scenario"""
    return np.block([[inst.A, sc.B], [sc.L, sc.M]])


def min_sym_eigenvalue(mat):
    """Smallest eigenvalue of the symmetric part of mat"""
    sym = 0.5 * (mat + mat.T)
    return float(scipy.linalg.eigh(sym, eigvals_only=True, subset_by_index=[0, 0])[0])


def certify_strong_monotonicity(inst, verbose=False):
    """Certify strong monotonicity on the sampled scenarios

    For each scenario forms G_j = [[A, B_j], [L_j, M_j]] and computes the
    smallest eigenvalue of (G_j + G_j^T)/2. Since z^T G_j z >= that value
    times ||z||^2, a positive minimum over scenarios certifies the
    quadratic-form condition with kappa equal to it.

    Parameters
    ----------
    inst : TwoStageInstance
    verbose : bool
        If True outputs per-scenario eigenvalues

    Returns
    -------
    MonotonicityCertificate

    Raises
    -------
    NumericalError
        eigenvalue routine failed, message carries the scenario index
    """

    min_eigs = []
    for j, sc in enumerate(inst.scenarios):
        try:
            lam = min_sym_eigenvalue(scenario_block_matrix(inst, sc))
        except (np.linalg.LinAlgError, ValueError) as err:
            raise NumericalError(f"** eigenvalue routine failed on scenario {j}") from err
        if verbose:
            print(f"scenario {j}: lambda_min(sym G) = {lam:+.6e}")
        min_eigs.append(lam)
    kappa = min(max(lam, 0.0) for lam in min_eigs)
    return MonotonicityCertificate(
        min_eig_sym=tuple(min_eigs), kappa=kappa, certified=kappa > 0.0
    )


def uniform_weights(scenarios):
    """Return the scenarios re-weighted to 1/N"""

    scenarios = list(scenarios)
    weight = 1.0 / len(scenarios)
    return tuple(dataclasses.replace(sc, weight=weight) for sc in scenarios)


def instance_to_dict(inst):
    """JSON-ready dict of an instance (row-major nested lists)"""

    return {
        "n": inst.n,
        "m": inst.m,
        "A": inst.A.tolist(),
        "h1": inst.h1.tolist(),
        "a": inst.a.tolist(),
        "b": inst.b.tolist(),
        "scenarios": [
            {
                "B": sc.B.tolist(),
                "L": sc.L.tolist(),
                "M": sc.M.tolist(),
                "h2": sc.h2.tolist(),
                "l": sc.l.tolist(),
                "u": sc.u.tolist(),
                "weight": sc.weight,
            }
            for sc in inst.scenarios
        ],
        "blocks": dict(inst.blocks) if inst.blocks is not None else None,
        "metadata": dict(inst.metadata),
    }


def instance_from_dict(doc):
    """Build a TwoStageInstance from its JSON dict

    Raises
    -------
    InvalidArgumentError
        missing fields, wrong types, or violated invariants
    """

    try:
        raw = doc["scenarios"]
        default_weight = 1.0 / len(raw)
        scenarios = [
            Scenario(
                B=item["B"],
                L=item["L"],
                M=item["M"],
                h2=item["h2"],
                l=item["l"],
                u=item["u"],
                weight=item.get("weight", default_weight),
            )
            for item in raw
        ]
        return TwoStageInstance(
            n=doc["n"],
            m=doc["m"],
            A=doc["A"],
            h1=doc["h1"],
            a=doc["a"],
            b=doc["b"],
            scenarios=scenarios,
            blocks=doc.get("blocks"),
            metadata=doc.get("metadata") or {},
        )
    except (KeyError, TypeError, ZeroDivisionError, AttributeError) as err:
        raise InvalidArgumentError(f"** malformed instance document: {err!r}") from err


def save_instance(inst, path):
    """Write the instance JSON document to path"""

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1)
        fh.write("\n")


def load_instance(path):
    """Read an instance JSON document from path

    Raises
    -------
    InvalidArgumentError
        the file is not valid JSON or not a valid instance
    """

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise InvalidArgumentError(f"** {path} is not valid JSON") from err
    return instance_from_dict(doc)
