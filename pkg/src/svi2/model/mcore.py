# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Constant and definition for all svi2 modules"""

from enum import Enum, IntEnum

# Inner (box LVI) solver
INNER_TOL = 1e-10
INNER_MAX_ITER = 100
ARMIJO_SIGMA = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 40
RANK_RTOL = 1e-13

# Outer (PHM) stopping rule
OUTER_TOL = 1e-5
OUTER_MAX_ITER = 5000
DEFAULT_R = 1.0

# Second stage activity classification
ACTIVITY_TOL = 1e-9

# Brute-force oracle
BRUTE_MAX_DIM = 12
BRUTE_SIGN_TOL = 1e-10
BRUTE_AGREE_TOL = 1e-8

# Scenario weights must sum to one within this
WEIGHT_SUM_TOL = 1e-12

# Normal-approximation 95% quantile used for confidence intervals
CI_Z = 1.96


class Status(Enum):
    """Solver termination status"""

    CONVERGED = "Converged"
    MAXITER = "MaxIter"
    SINGULAR = "Singular"


class Activity(Enum):
    """Per-coordinate status of a box LVI solution"""

    LOWER = "Lower"
    INTERIOR = "Interior"
    UPPER = "Upper"


class ExitCode(IntEnum):
    """svi2 command line exit codes"""

    OK = 0
    INPUT = 2
    BUDGET = 3
    NUMERIC = 4
    UNCERTIFIED = 5
