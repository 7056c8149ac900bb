# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Experiment profile: tiny grid for quick checks"""

GENERATOR = {
    "n1": 2,
    "n2": 2,
    "m1": 2,
    "m2": 2,
    "alpha": 1.0,
}

N_GRID = (4, 8)
REPLICATIONS = 2
EVAL_SCENARIOS = 20
SEED = 7

PHM = {
    "r": 1.0,
    "tol": 1e-5,
    "max_iter": 2000,
    "res_every": 1,
}
