"""
Top level of svi2 package source files
============

Python toolkit for two-stage stochastic box-constrained variational inequalities

console - folder containing the svi2 command line tool and its output helper
model - folder containing shared constants and experiment profile definitions
model_fn.py contains the instance data model, mid operator, residual and certification
boxvi_fn.py contains the semismooth Newton box LVI solver and brute-force oracle
second_stage_fn.py contains the second-stage solution map and its Jacobian
phm_fn.py contains the Progressive Hedging Method and the extensive-form oracle
game_fn.py contains the two-player game assembly into matrix form
generator_fn.py contains the seeded strongly monotone instance generator
saa_fn.py contains the sample average approximation experiment
svi_problem.py contains the SviProblem class composing the modules above
"""

__version__ = "1.0.0"
