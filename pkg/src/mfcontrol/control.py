"""Control optimisation over piecewise-constant leader controls and the gain.

The search space is the box K^(m n_u) for the controls, optionally extended
by the gain parameters (theta0, theta1) in [-delta, delta] x [-lam, lam].
Costs are Monte Carlo estimates under common random numbers: every
evaluation in one optimisation reuses the same noise plan, so differences
between candidates come from the controls alone.

The default search is SPSA with the standard gain sequences
a_k = a0 / (k + 1 + A)^0.602 and c_k = c0 / (k + 1)^0.101, run from several
starts (the zero control is always one of them); coordinate central
differences are available for small problems.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controls import ControlSchedule
from .cost import CostSpec, chaos_cost_breakdown, finite_cost_breakdown
from .errors import ParameterError
from .mckean import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_mckean
from .noise import OPTIMIZER_TAG, NoisePlan, stream
from .particles import simulate_finite

ALPHA = 0.602
GAMMA = 0.101


def project_K(u, kappa: float) -> np.ndarray:
    """Component-wise clamp onto the box [-kappa, kappa]^d."""
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    return np.clip(np.asarray(u, dtype=float), -kappa, kappa)


@dataclass(frozen=True)
class OptProblem:
    problem: object
    cost: Optional[CostSpec] = None
    objective: str = "mckean"
    n_u: Optional[int] = None
    kappa: Optional[float] = None
    samples: int = 1
    noise: Optional[NoisePlan] = None
    optimize_gain: bool = False
    method: str = "spsa"
    iterations: int = 60
    starts: int = 4
    budget: Optional[int] = None
    c0: float = 0.1
    first_step: float = 0.1
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    threads: int = 1

    def __post_init__(self):
        if self.objective not in ("finite", "mckean"):
            raise ParameterError(f"objective must be 'finite' or 'mckean', got {self.objective!r}")
        if self.method not in ("spsa", "fd"):
            raise ParameterError(f"method must be 'spsa' or 'fd', got {self.method!r}")
        if self.cost is None:
            object.__setattr__(self, "cost", self.problem.cost)
        if self.n_u is None:
            object.__setattr__(self, "n_u", self.problem.n_u)
        if self.kappa is None:
            object.__setattr__(self, "kappa", self.problem.kappa)
        if self.noise is None:
            object.__setattr__(self, "noise", self.problem.noise_plan())
        if not self.kappa > 0 or self.n_u < 1 or self.samples < 1:
            raise ParameterError("need kappa > 0, n_u >= 1 and samples >= 1")
        if self.problem.n_steps % self.n_u:
            raise ParameterError(f"n_u={self.n_u} does not divide the step count")
        if self.starts < 1 or self.iterations < 0:
            raise ParameterError("need at least one start and a non-negative iteration count")


@dataclass
class OptResult:
    controls: ControlSchedule
    cost_value: float
    stderr: float
    baseline_cost: float
    baseline_stderr: float
    trace: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    budget_exhausted: bool = False

    def to_dict(self) -> dict:
        return {
            "controls": self.controls.to_dict(),
            "cost_value": self.cost_value,
            "stderr": self.stderr,
            "baseline_cost": self.baseline_cost,
            "baseline_stderr": self.baseline_stderr,
            "budget_exhausted": self.budget_exhausted,
            "n_evaluations": len(self.evaluations),
            "trace": self.trace,
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OptResult":
        data = json.loads(text)
        return cls(
            controls=ControlSchedule.from_dict(data["controls"]),
            cost_value=data["cost_value"],
            stderr=data["stderr"],
            baseline_cost=data["baseline_cost"],
            baseline_stderr=data["baseline_stderr"],
            trace=data.get("trace", []),
            budget_exhausted=data.get("budget_exhausted", False),
        )


def estimate_cost(opt: OptProblem, controls: ControlSchedule):
    """Monte Carlo (mean, stderr) of the chosen objective under the plan's noise.

    The finite objective averages ``samples`` particle realisations; the
    mean-field objective averages ``samples`` independent law clouds.
    """
    p = opt.problem
    if opt.objective == "finite":
        trajs = [simulate_finite(p, controls, opt.noise, s) for s in range(opt.samples)]
        b = finite_cost_breakdown(trajs, controls, opt.cost)
        return b.total, b.stderr
    values = []
    for s in range(opt.samples):
        sol = solve_mckean(p, controls, tol=opt.tol, max_iter=opt.max_iter, noise=opt.noise, sample_id=s)
        values.append(chaos_cost_breakdown(sol, controls, opt.cost).total)
    values = np.asarray(values)
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return math.fsum(values) / len(values), se


class _Objective:
    """Maps normalised parameters z in [-1, 1]^n to costs, with memoisation."""

    def __init__(self, opt: OptProblem):
        p = opt.problem
        self.opt = opt
        self.shape = (p.m, opt.n_u, p.d)
        self.n_u_params = p.m * opt.n_u * p.d
        gain = p.gain
        scales = [opt.kappa] * self.n_u_params
        if opt.optimize_gain:
            scales += [gain.delta, max(gain.lam, 0.0)]
        self.scale = np.asarray(scales, dtype=float)
        self.cache = {}

    @property
    def size(self):
        return self.scale.shape[0]

    def schedule(self, z) -> ControlSchedule:
        x = np.clip(z, -1.0, 1.0) * self.scale
        p = self.opt.problem
        gain = p.gain
        if self.opt.optimize_gain:
            gain = gain.with_params(np.clip(x[-2], -gain.delta, gain.delta), np.clip(x[-1], -gain.lam, gain.lam))
        values = project_K(x[: self.n_u_params].reshape(self.shape), self.opt.kappa)
        return ControlSchedule(values, p.T, gain, self.opt.kappa)

    def params_of(self, controls: ControlSchedule) -> np.ndarray:
        x = list(np.asarray(controls.values, dtype=float).ravel())
        if self.opt.optimize_gain:
            x += [controls.gain.theta0, controls.gain.theta1]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.scale > 0, np.asarray(x) / self.scale, 0.0)
        return np.clip(z, -1.0, 1.0)

    def __call__(self, z):
        key = np.asarray(z, dtype=float).tobytes()
        if key not in self.cache:
            self.cache[key] = estimate_cost(self.opt, self.schedule(z))
        return self.cache[key]


def _run_start(obj: _Objective, start_id: int, z0, budget: Optional[int]):
    opt = obj.opt
    rng = stream(opt.noise.seed, OPTIMIZER_TAG, start_id)
    n = obj.size
    evals, trace = [], []

    def f(z):
        z = np.clip(z, -1.0, 1.0)
        mean, se = obj(z)
        sched = obj.schedule(z)
        evals.append({"start": start_id, "cost": mean, "stderr": se,
                      "max_abs_u": float(np.max(np.abs(sched.values), initial=0.0)), "z": z.copy()})
        return mean

    z = np.clip(np.asarray(z0, dtype=float), -1.0, 1.0)
    fz = f(z)
    best = fz
    trace.append({"start": start_id, "iteration": 0, "cost": fz, "step": 0.0, "best": best})
    per_iter = 3 if opt.method == "spsa" else 2 * n + 1
    A = 0.1 * max(opt.iterations, 1)
    a0 = None
    exhausted = False
    for k in range(opt.iterations):
        if budget is not None and len(evals) + per_iter > budget:
            exhausted = True
            break
        ck = opt.c0 / (k + 1) ** GAMMA
        if opt.method == "spsa":
            delta = rng.choice((-1.0, 1.0), size=n)
            zp, zm = np.clip(z + ck * delta, -1, 1), np.clip(z - ck * delta, -1, 1)
            fp, fm = f(zp), f(zm)
            span = zp - zm
            grad = np.where(span != 0, (fp - fm) / np.where(span != 0, span, 1.0), 0.0)
        else:
            grad = np.zeros(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = ck
                zp, zm = np.clip(z + e, -1, 1), np.clip(z - e, -1, 1)
                span = zp[i] - zm[i]
                grad[i] = (f(zp) - f(zm)) / span if span else 0.0
        if a0 is None:
            gmax = float(np.max(np.abs(grad)))
            a0 = opt.first_step * (1 + A) ** ALPHA / gmax if gmax > 0 else 0.0
        ak = a0 / (k + 1 + A) ** ALPHA
        z = np.clip(z - ak * grad, -1.0, 1.0)
        fz = f(z)
        best = min(best, min(e["cost"] for e in evals))
        trace.append({"start": start_id, "iteration": k + 1, "cost": fz,
                      "step": float(ak * np.max(np.abs(grad), initial=0.0)), "best": best})
    return evals, trace, exhausted


def optimize(opt: OptProblem, initial: Optional[ControlSchedule] = None) -> OptResult:
    """Best-seen controls over all starts under common random numbers.

    Start 0 is the zero control with the problem's gain, so the result is
    never worse than that baseline.  ``initial`` adds a warm start.
    """
    obj = _Objective(opt)
    n = obj.size
    starts = [obj.params_of(ControlSchedule.zeros(opt.problem.m, opt.n_u, opt.problem.d, opt.problem.T,
                                                  opt.problem.gain, opt.kappa))]
    if initial is not None:
        starts.append(obj.params_of(initial))
    while len(starts) < max(opt.starts, len(starts)):
        rng = stream(opt.noise.seed, OPTIMIZER_TAG, 10_000 + len(starts))
        z = rng.uniform(-1.0, 1.0, size=n)
        if opt.optimize_gain:
            z[-2:] = starts[0][-2:]
        starts.append(z)
    budget = None if opt.budget is None else max(1, opt.budget // len(starts))

    def run(args):
        sid, z0 = args
        # each start gets its own memo so thread scheduling cannot change results
        local = _Objective(opt)
        return _run_start(local, sid, z0, budget)

    jobs = list(enumerate(starts))
    if opt.threads > 1:
        with ThreadPoolExecutor(max_workers=opt.threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]
    evaluations, trace = [], []
    exhausted = False
    for ev, tr, ex in outcomes:
        evaluations.extend(ev)
        trace.extend(tr)
        exhausted |= ex
    baseline = evaluations[0]
    best = min(evaluations, key=lambda e: (e["cost"], e["start"]))
    running = math.inf
    for entry in trace:
        running = min(running, entry["cost"], entry["best"])
        entry["best"] = running
    return OptResult(
        controls=obj.schedule(best["z"]),
        cost_value=best["cost"],
        stderr=best["stderr"],
        baseline_cost=baseline["cost"],
        baseline_stderr=baseline["stderr"],
        trace=trace,
        evaluations=[{k: v for k, v in e.items() if k != "z"} for e in evaluations],
        budget_exhausted=exhausted,
    )
