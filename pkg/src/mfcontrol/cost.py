"""Running costs and the finite-particle / mean-field cost functionals.

Time integrals use the left-endpoint rule on the recorded grid, matching the
explicit state update.  The control cost is evaluated either directly,
(1/m) sum_j phi(u_j, g), or through the atomic density of the control
measure with respect to the leader law.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .fields import eval_gain
from .measures import EmpiricalMeasure, wasserstein1

LAGRANGIANS = ("w1_target", "w1_target_sq", "leader_follower", "zero")
PHIS = ("quadratic", "weighted")


class AtomicCoincidenceWarning(UserWarning):
    """Two leaders share a position while carrying different controls."""


@dataclass(frozen=True)
class CostSpec:
    """Running cost L(mu, nu) and control cost phi(u, xi).

    ``lagrangian`` is one of ``w1_target`` (W1(mu, target)), ``w1_target_sq``
    (its square), ``leader_follower`` (W1(mu, nu)) or ``zero``.  ``phi`` is
    ``quadratic`` (c |u|^2) or ``weighted`` (c |u|^2 (1 + xi^2)) with
    c = ``control_weight``.
    """

    lagrangian: str = "w1_target"
    target: Optional[EmpiricalMeasure] = None
    phi: str = "quadratic"
    control_weight: float = 1.0

    def __post_init__(self):
        if self.lagrangian not in LAGRANGIANS:
            raise ParameterError(f"unknown lagrangian {self.lagrangian!r}; choose from {LAGRANGIANS}")
        if self.phi not in PHIS:
            raise ParameterError(f"unknown phi {self.phi!r}; choose from {PHIS}")
        if self.lagrangian.startswith("w1_target") and self.target is None:
            raise ParameterError("target measure required for target-tracking costs")
        if not self.control_weight > 0:
            raise ParameterError("control weight must be positive")


def lagrangian(spec: CostSpec, mu: EmpiricalMeasure, nu: Optional[EmpiricalMeasure]) -> float:
    kind = spec.lagrangian
    if kind == "zero":
        return 0.0
    if kind == "leader_follower":
        if nu is None:
            raise ParameterError("leader-follower cost needs leaders")
        return wasserstein1(mu, nu)
    if mu.dim != spec.target.dim:
        raise ParameterError("measure and target dimensions disagree")
    w = wasserstein1(mu, spec.target)
    return w * w if kind == "w1_target_sq" else w


def phi(spec: CostSpec, u, xi: float) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sq = math.fsum(u * u)
    if spec.phi == "weighted":
        sq *= 1.0 + xi * xi
    return spec.control_weight * sq


def _phi_rows(spec, u, xi):
    """phi evaluated on each row of u (m, d)."""
    sq = np.einsum("jk,jk->j", u, u)
    if spec.phi == "weighted":
        sq = sq * (1.0 + xi * xi)
    return spec.control_weight * sq


@dataclass(frozen=True)
class CostBreakdown:
    lagrangian: float
    control: float
    total: float
    per_sample: tuple = ()
    stderr: float = 0.0

    def to_dict(self) -> dict:
        return {"lagrangian": self.lagrangian, "control": self.control, "total": self.total,
                "stderr": self.stderr, "samples": len(self.per_sample)}


def _path_cost(times, steps, n_steps, measures, leaders, controls, spec):
    """Return (running part, control part) for one realisation."""
    widths = np.diff(np.asarray(times, dtype=float))
    run_terms, ctrl_terms = [], []
    m = 0 if leaders is None else leaders.shape[1]
    for k, h in enumerate(widths):
        mu = measures(k)
        nu = EmpiricalMeasure.uniform(leaders[k]) if m else None
        run_terms.append(h * lagrangian(spec, mu, nu))
        if m:
            xi = eval_gain(controls.gain, mu)
            u = controls.at_step(int(steps[k]), n_steps)
            ctrl_terms.append(h * math.fsum(_phi_rows(spec, u, xi)) / m)
    return math.fsum(run_terms), math.fsum(ctrl_terms)


def finite_cost_breakdown(trajs: Sequence, controls, spec: CostSpec) -> CostBreakdown:
    """Sample-mean estimate of the finite-particle cost with its breakdown."""
    trajs = list(trajs)
    if not trajs:
        raise ParameterError("cost needs at least one trajectory")
    parts = []
    for tr in trajs:
        parts.append(_path_cost(
            tr.times, tr.steps, tr.n_steps,
            lambda k, tr=tr: EmpiricalMeasure.uniform(tr.followers[k]),
            tr.leaders, controls, spec,
        ))
    run = np.array([p[0] for p in parts])
    ctrl = np.array([p[1] for p in parts])
    totals = run + ctrl
    n = len(trajs)
    stderr = float(np.std(totals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostBreakdown(math.fsum(run) / n, math.fsum(ctrl) / n, math.fsum(totals) / n,
                         tuple(totals.tolist()), stderr)


def cost_finite(trajs: Sequence, controls, spec: CostSpec) -> float:
    return finite_cost_breakdown(trajs, controls, spec).total


def chaos_cost_breakdown(sol, controls, spec: CostSpec) -> CostBreakdown:
    """Mean-field cost of a McKean solution: the law flow replaces the empirical measure."""
    run, ctrl = _path_cost(sol.times, sol.steps, sol.n_steps, lambda k: sol.law_flow[k],
                           sol.leaders, controls, spec)
    return CostBreakdown(run, ctrl, run + ctrl, (run + ctrl,), 0.0)


def cost_chaos(sol, controls, spec: CostSpec) -> float:
    return chaos_cost_breakdown(sol, controls, spec).total


def _admissible_controls(controls, times, gains):
    """Controls on the grid with u_j(t) forced to 0 wherever the gain vanishes."""
    us = np.array([controls.at_time(t) for t in times[:-1]])
    zero = np.asarray(gains[:-1]) == 0.0
    us[zero] = 0.0
    return us


def direct_control_cost(controls, gains, spec: CostSpec, times) -> float:
    """(1/m) sum_j int phi(u_j, g(mu_t)) dt with the same admissibility rule."""
    times = np.asarray(times, dtype=float)
    us = _admissible_controls(controls, times, gains)
    widths = np.diff(times)
    m = us.shape[1]
    return math.fsum(h * math.fsum(_phi_rows(spec, us[k], gains[k])) / m for k, h in enumerate(widths))


def phi_atomic_identity(controls, leaders, gains, spec: CostSpec, times) -> float:
    """Control cost through the density of theta_t = (1/m) sum_j u_j delta_{y_j}.

    At every time the leaders are grouped by position; each group of size c
    carries mass c/m and density (sum of its controls)/c.  If a group holds
    distinct controls the result can differ from the direct average and an
    :class:`AtomicCoincidenceWarning` is emitted.
    """
    times = np.asarray(times, dtype=float)
    leaders = np.asarray(leaders, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if leaders.shape[0] != times.shape[0] or gains.shape[0] != times.shape[0]:
        raise ParameterError("leaders and gains must be sampled on the time grid")
    us = _admissible_controls(controls, times, gains)
    m = leaders.shape[1]
    widths = np.diff(times)
    terms = []
    coincident = False
    for k, h in enumerate(widths):
        pos, inverse, counts = np.unique(leaders[k], axis=0, return_inverse=True, return_counts=True)
        inverse = np.asarray(inverse).reshape(-1)
        density = np.zeros((pos.shape[0], us.shape[2]))
        np.add.at(density, inverse, us[k])
        density /= counts[:, None]
        if np.any(counts > 1):
            spread = np.abs(us[k] - density[inverse]).max()
            coincident |= bool(spread > 0)
        terms.append(h * math.fsum(counts / m * _phi_rows(spec, density, gains[k])))
    if coincident:
        warnings.warn("coinciding leaders carry different controls; the atomic identity may not hold",
                      AtomicCoincidenceWarning, stacklevel=2)
    return math.fsum(terms)
