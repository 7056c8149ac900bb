# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Experiment profile: reduced grid sized for acceptance runs"""

GENERATOR = {
    "n1": 3,
    "n2": 3,
    "m1": 5,
    "m2": 5,
    "alpha": 1.0,
}

N_GRID = (10, 50, 250)
REPLICATIONS = 10
EVAL_SCENARIOS = 500
SEED = 20240101

PHM = {
    "r": 1.0,
    "tol": 1e-5,
    "max_iter": 5000,
    # residual checks cost a full second-stage sweep
    "res_every": 5,
}
