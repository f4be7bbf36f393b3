"""Counter-based random streams keyed by (seed, run, sample, particle).

Each follower owns one Philox stream.  The first ``d + 1`` normals of the
stream feed the initial position, the next ``n_steps * d`` are the Brownian
increments, so a given (seed, ids, step) always maps to the same number no
matter how many steps or particles are requested.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LEADER_TAG = 0xFFFF_FFF0
OPTIMIZER_TAG = 0xFFFF_FFF1


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=24)
def _draws(seed, run_id, common, sample_id, n_particles, n_steps, d):
    init = np.empty((n_particles, d + 1))
    incr = np.empty((n_steps, n_particles, d))
    for i in range(n_particles):
        z = stream(seed, run_id, sample_id, i).standard_normal(d + 1 + n_steps * d)
        init[i] = z[: d + 1]
        incr[:, i, :] = z[d + 1:].reshape(n_steps, d)
    if common and n_particles > 1:
        incr[:] = incr[:, :1, :]
    init.flags.writeable = False
    incr.flags.writeable = False
    return init, incr


@dataclass(frozen=True)
class NoisePlan:
    """Reproducible noise source for one family of runs.

    ``common=True`` feeds every follower the Brownian path of follower 0
    (initial positions stay independent); it exists for ablations only.
    """

    seed: int
    run_id: int = 0
    common: bool = False

    def draws(self, sample_id: int, n_particles: int, n_steps: int, d: int):
        """Return (initial normals (n, d+1), increments (n_steps, n, d)), read-only."""
        return _draws(int(self.seed), int(self.run_id), bool(self.common), int(sample_id),
                      int(n_particles), int(n_steps), int(d))

    def with_run(self, run_id: int) -> "NoisePlan":
        return NoisePlan(self.seed, run_id, self.common)


def leader_normals(seed: int, draw_id: int, m: int, d: int) -> np.ndarray:
    """Standard normals for leader j of draw ``draw_id``; prefix-stable in m."""
    out = np.empty((m, d))
    for j in range(m):
        out[j] = stream(seed, LEADER_TAG, draw_id, j).standard_normal(d)
    return out
