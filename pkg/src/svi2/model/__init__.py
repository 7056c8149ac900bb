"""
model
=====

Definition modules imported by the svi2 function modules

These definitions include the following:

Definitions
-----------
Solver status and activity enums
Default tolerances and iteration budgets
Command line exit codes

Core
----
mcore (Used by all modules)

Experiment profiles
-------------------
pdefault (configuration of the published experiment)
pscaled (reduced grid used for acceptance runs)
psmoke (tiny grid for quick checks)

Profiles are loaded by name through saa_fn.load_profile()
"""
