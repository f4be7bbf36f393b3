"""
Empirical measures and the Wasserstein-1 distance
=================================================

Clouds of atoms, exact transport distances, and the closed form against
a one-dimensional Gaussian.
"""

import numpy as np
from mfcontrol import EmpiricalMeasure, moment, subsample, wasserstein1, wasserstein1_gaussian

rng = np.random.default_rng(0)

# two equal-size clouds on the line: the optimal plan matches sorted atoms
a = EmpiricalMeasure.uniform(rng.normal(0.0, 1.0, size=500))
b = EmpiricalMeasure.uniform(rng.normal(0.5, 1.0, size=500))
print("W1 between N(0,1) and N(0.5,1) samples:", round(wasserstein1(a, b), 4), "(exact law value 0.5)")

# the same cloud against the Gaussian it was drawn from
print("W1 to N(0,1) itself:", round(wasserstein1_gaussian(a, 0.0, 1.0), 4))
print("first and second moments:", round(moment(a, 1), 4), round(moment(a, 2), 4))

# in the plane the distance is an assignment problem; big clouds are thinned first
p = EmpiricalMeasure.uniform(rng.normal(size=(2000, 2)))
q = p.translate(np.array([1.0, 0.0]))
small_p, small_q = subsample(p, 256), subsample(q, 256)
print("2D translation by e1, W1 on 256-atom subsamples:", round(wasserstein1(small_p, small_q), 4))
