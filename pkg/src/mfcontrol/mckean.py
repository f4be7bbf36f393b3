"""McKean-Vlasov solver: Picard iteration on the follower law.

The law is represented by a cloud of N samples whose initial positions and
Brownian increments are frozen across sweeps, so the fixed-point map is
deterministic.  One sweep maps the current iterate (law flow, leader paths)
to

* N follower copies driven by the frozen law and frozen leader paths, and
* leader paths solving their own ODE against the frozen law.

Leader paths are updated Jacobi-style: followers in sweep k see the leaders
of sweep k-1, never the ones being computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .controls import ControlSchedule
from .errors import BlowUpError, ConvergenceError, ParameterError
from .fields import eval_field, eval_gain
from .measures import MAX_ATOMS, EmpiricalMeasure, MeasureFlow, subsample, wasserstein1
from .noise import NoisePlan

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True, eq=False)
class MckeanSolution:
    times: np.ndarray
    law_flow: MeasureFlow
    paths: np.ndarray
    leaders: Optional[np.ndarray]
    iterations: int
    residual: float
    history: tuple = ()
    nu_flow: Optional[MeasureFlow] = None

    @property
    def steps(self) -> np.ndarray:
        return np.arange(len(self.times))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def leader_flow(self) -> Optional[MeasureFlow]:
        if self.nu_flow is not None:
            return self.nu_flow
        if self.leaders is None or self.leaders.shape[1] == 0:
            return None
        return MeasureFlow.from_paths(self.times, self.leaders)


def _w1(a, b, cap):
    if a.dim > 1 and max(a.size, b.size) > cap:
        a, b = subsample(a, cap), subsample(b, cap)
    return wasserstein1(a, b, max_atoms=cap)


def picard_residual(a: MeasureFlow, b: MeasureFlow, max_atoms: int = MAX_ATOMS) -> float:
    """sup over grid times of W1(a_t, b_t).

    In d >= 2 clouds above ``max_atoms`` are replaced by their stratified
    subsamples before the exact distance is taken.
    """
    if len(a) != len(b) or not np.array_equal(a.times, b.times):
        raise ParameterError("flows live on different time grids")
    return max(_w1(p, q, max_atoms) for p, q in zip(a.measures, b.measures))


def _paths_residual(p1, p2, max_atoms):
    if p1.shape[2] == 1 and p1.shape[1] == p2.shape[1]:
        # sorted coupling for every grid time at once
        gaps = np.abs(np.sort(p1[:, :, 0], axis=1) - np.sort(p2[:, :, 0], axis=1))
        return float(np.max(gaps.mean(axis=1)))
    return max(_w1(EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b), max_atoms)
               for a, b in zip(p1, p2))


def picard_sweep(problem, controls: Optional[ControlSchedule], x0, incr, law_paths,
                 leader_paths=None, nu_flow: Optional[MeasureFlow] = None):
    """Drive follower copies and leaders through one sweep of the fixed-point map.

    ``law_paths`` (n_t, N', d) or a :class:`MeasureFlow` is the frozen
    follower law (passing the flow reuses its memoised means); ``leader_paths``
    (n_t, m, d) the frozen leaders, or ``nu_flow`` a prescribed leader law.
    Returns (follower paths (n_t, n, d), leader paths (n_t, m, d) or None).
    """
    n_steps, dt, sigma = problem.n_steps, problem.dt, problem.sigma
    n, d = x0.shape
    noise_scale = math.sqrt(2.0 * sigma * dt)
    x = np.empty((n_steps + 1, n, d))
    x[0] = x0
    has_leaders = leader_paths is not None and leader_paths.shape[1] > 0
    y = None
    if has_leaders:
        m = leader_paths.shape[1]
        y = np.empty((n_steps + 1, m, d))
        y[0] = leader_paths[0]
    for k in range(n_steps):
        t = k * dt
        mu = law_paths[k] if isinstance(law_paths, MeasureFlow) else EmpiricalMeasure.uniform(law_paths[k])
        if has_leaders:
            nu = EmpiricalMeasure.uniform(leader_paths[k])
        elif nu_flow is not None:
            nu = nu_flow.at(t)
        else:
            nu = None
        step = x[k] + eval_field(problem.vfield, t, x[k], mu, nu) * dt
        if sigma > 0:
            step = step + noise_scale * incr[k]
        x[k + 1] = step
        if has_leaders:
            own = EmpiricalMeasure.uniform(y[k])
            u = controls.at_step(k, n_steps)
            y[k + 1] = y[k] + (eval_field(problem.wfield, t, y[k], mu, own) + u * eval_gain(controls.gain, mu)) * dt
            if not np.all(np.isfinite(y[k + 1])):
                bad = int(np.argmax(~np.all(np.isfinite(y[k + 1]), axis=1)))
                raise BlowUpError(f"leader {bad} became non-finite at t={(k + 1) * dt:.6g}")
        if not np.all(np.isfinite(x[k + 1])):
            bad = int(np.argmax(~np.all(np.isfinite(x[k + 1]), axis=1)))
            raise BlowUpError(f"follower sample {bad} became non-finite at t={(k + 1) * dt:.6g}")
    return x, y


def _iterate(problem, controls, N, tol, max_iter, noise, sample_id, init, nu_flow, max_atoms):
    if N < 2:
        raise ParameterError("the law needs at least two samples")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if max_iter < 2:
        raise ParameterError("max_iter must be at least 2")
    noise = problem.noise_plan() if noise is None else noise
    init_normals, incr = noise.draws(sample_id, N, problem.n_steps, problem.d)
    x0 = problem.follower_init.sample(init_normals)
    n_t = problem.n_steps + 1
    if init is not None:
        law_paths, leader_paths = init
        law_paths = np.asarray(law_paths, dtype=float)
        if law_paths.shape[0] != n_t:
            raise ParameterError("warm start has the wrong number of grid times")
    else:
        law_paths = np.broadcast_to(x0, (n_t,) + x0.shape)
        leader_paths = None
    if nu_flow is None and problem.m:
        controls.check_grid(problem.n_steps)
        y0 = problem.initial_leaders()
        if leader_paths is None:
            leader_paths = np.broadcast_to(y0, (n_t,) + y0.shape)
        else:
            # a warm start guesses the trajectory, never the initial condition
            leader_paths = np.array(leader_paths, dtype=float)
            leader_paths[0] = y0
    elif nu_flow is None:
        leader_paths = None
    history = []
    for it in range(1, max_iter + 1):
        new_x, new_y = picard_sweep(problem, controls, x0, incr, law_paths, leader_paths, nu_flow)
        if it >= 2:
            res = _paths_residual(new_x, law_paths, max_atoms)
            if new_y is not None:
                res = max(res, _paths_residual(new_y, leader_paths, max_atoms))
            history.append(res)
        law_paths, leader_paths = new_x, new_y
        if history and history[-1] <= tol:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not reach tol={tol} in {max_iter} sweeps (last residual {history[-1]:.3e})",
            history,
        )
    times = problem.step_times()
    return MckeanSolution(
        times=times,
        law_flow=MeasureFlow.from_paths(times, law_paths),
        paths=law_paths,
        leaders=leader_paths,
        iterations=it,
        residual=history[-1],
        history=tuple(history),
        nu_flow=nu_flow,
    )


def solve_mckean(problem, controls: ControlSchedule, N: Optional[int] = None, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, noise: Optional[NoisePlan] = None, sample_id: int = 0,
                 init=None, max_atoms: int = MAX_ATOMS) -> MckeanSolution:
    """Solve the representative-follower McKean-Vlasov system with m leaders.

    ``init`` optionally warm-starts the iteration with (law paths, leader
    paths); by default the law is frozen at the initial cloud and the
    leaders at their starting points.
    """
    N = problem.N if N is None else N
    if problem.m and controls is None:
        raise ParameterError("controls required when leaders are present")
    return _iterate(problem, controls, N, tol, max_iter, noise, sample_id, init, None, max_atoms)


def solve_fixed_nu(problem, nu_flow: MeasureFlow, N: Optional[int] = None, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, noise: Optional[NoisePlan] = None, sample_id: int = 0,
                   init=None, max_atoms: int = MAX_ATOMS) -> MckeanSolution:
    """Solve the follower McKean-Vlasov SDE against a prescribed leader law flow."""
    N = problem.N if N is None else N
    if nu_flow.dim != problem.d:
        raise ParameterError("leader flow dimension does not match the problem")
    if nu_flow.horizon < problem.T - 1e-12 * max(1.0, problem.T):
        raise ParameterError("leader flow does not cover the horizon")
    if init is not None:
        init = (init, None)
    return _iterate(problem, None, N, tol, max_iter, noise, sample_id, init, nu_flow, max_atoms)
