# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Experiment profile: configuration of the published SAA study"""

# Game dimensions of the generated structure
GENERATOR = {
    "n1": 3,
    "n2": 3,
    "m1": 5,
    "m2": 5,
    "alpha": 1.0,
}

N_GRID = (10, 50, 250, 1250, 2250)
REPLICATIONS = 20
EVAL_SCENARIOS = 3000
SEED = 20240101

PHM = {
    "r": 1.0,
    "tol": 1e-5,
    "max_iter": 5000,
    "res_every": 1,
}
