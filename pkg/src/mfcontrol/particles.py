"""Euler-Maruyama integration of the coupled follower/leader particle system.

Followers:  X_i <- X_i + v(X_i, mu, nu) dt + sqrt(2 sigma dt) xi_i
Leaders:    y_j <- y_j + (w(y_j, mu, nu) + u_j g(mu)) dt

with mu, nu the empirical measures of the state at the start of the step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .controls import ControlSchedule
from .errors import BlowUpError, ParameterError
from .fields import FieldSpec, GainSpec, eval_field, eval_gain
from .measures import EmpiricalMeasure, MeasureFlow
from .noise import NoisePlan


@dataclass(frozen=True, eq=False)
class EnsembleState:
    followers: np.ndarray
    leaders: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        f = np.array(self.followers, dtype=float)
        d = f.shape[1] if f.ndim == 2 else None
        if f.ndim != 2 or f.shape[0] < 1:
            raise ParameterError("followers must be a non-empty (M, d) array")
        l = np.array(self.leaders, dtype=float).reshape(-1, d)
        object.__setattr__(self, "followers", f)
        object.__setattr__(self, "leaders", l)
        _check_finite(f, l, self.t)

    @property
    def M(self) -> int:
        return self.followers.shape[0]

    @property
    def m(self) -> int:
        return self.leaders.shape[0]

    @property
    def d(self) -> int:
        return self.followers.shape[1]


def _check_finite(followers, leaders, t):
    bad = ~np.all(np.isfinite(followers), axis=1)
    if bad.any():
        raise BlowUpError(f"follower {int(np.argmax(bad))} became non-finite at t={t:.6g}")
    bad = ~np.all(np.isfinite(leaders), axis=1)
    if bad.any():
        raise BlowUpError(f"leader {int(np.argmax(bad))} became non-finite at t={t:.6g}")


def empirical_of(state: EnsembleState, which: str = "followers") -> EmpiricalMeasure:
    """Uniform empirical measure of one population."""
    if which == "followers":
        pts = state.followers
    elif which == "leaders":
        pts = state.leaders
    else:
        raise ParameterError(f"which must be 'followers' or 'leaders', got {which!r}")
    if pts.shape[0] == 0:
        raise ParameterError(f"the {which} population is empty")
    return EmpiricalMeasure.uniform(pts)


def em_step(state: EnsembleState, vfield: FieldSpec, wfield: FieldSpec, controls_at_t,
            gain: GainSpec, sigma: float, dt: float, noise) -> EnsembleState:
    """One explicit Euler-Maruyama step of the particle system."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if sigma < 0:
        raise ParameterError("sigma must be non-negative")
    mu = empirical_of(state, "followers")
    nu = empirical_of(state, "leaders") if state.m else None
    x = state.followers + eval_field(vfield, state.t, state.followers, mu, nu) * dt
    if sigma > 0:
        x = x + math.sqrt(2.0 * sigma * dt) * np.asarray(noise, dtype=float)
    y = state.leaders
    if state.m:
        u = np.asarray(controls_at_t, dtype=float).reshape(state.m, state.d)
        y = y + (eval_field(wfield, state.t, y, mu, nu) + u * eval_gain(gain, mu)) * dt
    t = state.t + dt
    _check_finite(x, y, t)
    return EnsembleState(x, y, t)


@dataclass(frozen=True, eq=False)
class EnsembleTrajectory:
    """Recorded states of one realisation.

    ``followers`` has shape (n_rec, M, d), ``leaders`` (n_rec, m, d);
    ``steps`` holds the integration step index of every record.
    """

    times: np.ndarray
    steps: np.ndarray
    followers: np.ndarray
    leaders: np.ndarray
    n_steps: int
    sample_id: int = 0

    def follower_flow(self) -> MeasureFlow:
        return MeasureFlow.from_paths(self.times, self.followers)

    def leader_flow(self) -> Optional[MeasureFlow]:
        if self.leaders.shape[1] == 0:
            return None
        return MeasureFlow.from_paths(self.times, self.leaders)

    def csv_rows(self):
        d = self.followers.shape[2]
        for k, t in enumerate(self.times):
            for kind, block in (("F", self.followers[k]), ("L", self.leaders[k])):
                for i, x in enumerate(block):
                    yield [self.sample_id, repr(float(t)), kind, i] + [repr(float(v)) for v in x[:d]]


def write_trajectories_csv(path, trajs) -> None:
    trajs = list(trajs)
    d = trajs[0].followers.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "t", "kind", "index"] + [f"x_{k + 1}" for k in range(d)])
        for tr in trajs:
            writer.writerows(tr.csv_rows())


def initial_state(problem, noise: NoisePlan, sample_id: int = 0, n_particles: Optional[int] = None):
    """Initial followers drawn from the problem's initial law, plus leaders."""
    n = problem.M if n_particles is None else n_particles
    init, _ = noise.draws(sample_id, n, problem.n_steps, problem.d)
    return EnsembleState(problem.follower_init.sample(init), problem.initial_leaders(), 0.0)


def simulate_finite(problem, controls: ControlSchedule, noise: NoisePlan, sample_id: int = 0,
                    stride: Optional[int] = None) -> EnsembleTrajectory:
    """Integrate the particle system over [0, T] for one realisation.

    Follower i uses stream (seed, run, sample_id, i) for both its initial
    position and its Brownian increments.
    """
    n_steps = problem.n_steps
    stride = problem.stride if stride is None else stride
    if n_steps % stride:
        raise ParameterError(f"stride {stride} does not divide {n_steps} steps")
    controls.check_grid(n_steps)
    if controls.m != problem.m or controls.d != problem.d:
        raise ParameterError("control schedule does not match the leader population")
    _, incr = noise.draws(sample_id, problem.M, n_steps, problem.d)
    state = initial_state(problem, noise, sample_id)
    n_rec = n_steps // stride + 1
    fol = np.empty((n_rec, problem.M, problem.d))
    lead = np.empty((n_rec, problem.m, problem.d))
    fol[0], lead[0] = state.followers, state.leaders
    for n in range(n_steps):
        state = em_step(state, problem.vfield, problem.wfield, controls.at_step(n, n_steps),
                        controls.gain, problem.sigma, problem.dt, incr[n])
        # recompute the clock from the step index so records sit exactly on the grid
        state = EnsembleState(state.followers, state.leaders, (n + 1) * problem.dt)
        if (n + 1) % stride == 0:
            r = (n + 1) // stride
            fol[r], lead[r] = state.followers, state.leaders
    steps = np.arange(n_rec) * stride
    return EnsembleTrajectory(steps * problem.dt, steps, fol, lead, n_steps, sample_id)
