"""
Followers and leaders as a finite particle system
=================================================

Simulate M followers attracted to their mean and to two leaders, while the
leaders move under a constant control.
"""

import numpy as np
from mfcontrol import ControlSchedule, EmpiricalMeasure, moment, simulate_finite
from mfcontrol.benchmarks import chaos_problem

problem = chaos_problem().replace(M=500)
controls = ControlSchedule.constant(0.5, problem.m, problem.n_u, problem.d, problem.T, problem.gain, problem.kappa)
traj = simulate_finite(problem, controls, problem.noise_plan(), stride=10)

for t, xs, ys in zip(traj.times, traj.followers, traj.leaders):
    mu = EmpiricalMeasure.uniform(xs)
    print(f"t={t:4.2f}  follower mean {mu.mean()[0]:+.3f}  m2 {moment(mu, 2):.3f}  leaders {np.round(ys[:, 0], 3)}")

# the same seed gives the same paths, bit for bit
again = simulate_finite(problem, controls, problem.noise_plan(), stride=10)
print("reproducible:", np.array_equal(again.followers, traj.followers))
