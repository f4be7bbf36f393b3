"""
The mean-field law two ways
===========================

For dX = -X dt + sqrt(2 sigma) dW the law of X solves a Fokker-Planck
equation.  We compute it by Picard iteration on a Monte Carlo cloud and by a
finite-volume scheme, then compare both with the stationary Gaussian.
"""

import math

from mfcontrol import FPGrid, fp_solve, quantize, solve_mckean, wasserstein1, wasserstein1_gaussian
from mfcontrol.benchmarks import ou_problem

problem = ou_problem(N=10_000)
sol = solve_mckean(problem, None)
print("Picard sweeps:", sol.iterations, "residual:", sol.residual)

density = fp_solve(problem, None, FPGrid(-4.0, 4.0, 400))
std = math.sqrt(problem.sigma)
for k in (0, problem.n_steps // 2, problem.n_steps):
    law, rho = sol.law_flow[k], quantize(density[k])
    print(f"t={sol.times[k]:.1f}  W1(cloud, grid)={wasserstein1(law, rho):.4f}"
          f"  W1(grid, stationary)={wasserstein1_gaussian(rho, 0.0, std):.4f}")
