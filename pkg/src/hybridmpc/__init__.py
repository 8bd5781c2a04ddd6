"""Hybrid (mixed-integer) and nonlinear MPC for emergency evasive vehicle
maneuvers, with a closed-loop benchmark harness.

Subpackage map: vehicle (plant + tire model), mmps (piecewise-affine
models/regions + file I/O), fitting (model/region identification), problem/
simplex/solver (LP + branch-and-bound core), encoder (big-M mixed-integer
encoding), nlp (sequential-convexification baseline), simloop (closed loop,
maneuvers, scenarios), controllers, bench/report/cli (benchmark harness).
"""

__version__ = "0.1.0"
