"""
Steering a crowd with one leader
================================

Followers are pulled towards a single leader whose velocity we control,
bounded by kappa.  The cost is the W1 distance of the crowd to a Dirac at
x = 2 plus a small quadratic control penalty.
"""

import numpy as np
from mfcontrol import OptProblem, optimize
from mfcontrol.benchmarks import steering_problem

problem = steering_problem(n_u=4)
result = optimize(OptProblem(problem, objective="mckean", samples=2, iterations=25, starts=4, threads=4))

print("zero-control cost:", round(result.baseline_cost, 4))
print("optimised cost:   ", round(result.cost_value, 4), "+-", round(result.stderr, 4))
print("leader velocity on each quarter of [0, T]:", np.round(result.controls.values[0, :, 0], 3))
print("evaluations:", len(result.evaluations))
