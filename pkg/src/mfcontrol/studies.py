"""Reproducible convergence studies.

Each study returns a :class:`StudyReport` holding per-point statistics,
least-squares slopes where meaningful, and pass/fail flags against its own
thresholds.  Work items are independent and keyed by disjoint noise streams,
so they may run on a thread pool; results are always assembled in a fixed
order and never depend on the thread count.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import linregress

from .control import OptProblem, optimize
from .controls import ControlSchedule
from .cost import chaos_cost_breakdown, finite_cost_breakdown
from .errors import ParameterError
from .fokker_planck import FPGrid, fp_solve, quantize
from .measures import EmpiricalMeasure, wasserstein1, wasserstein1_gaussian
from .mckean import DEFAULT_MAX_ITER, DEFAULT_TOL, picard_sweep, solve_fixed_nu, solve_mckean
from .particles import simulate_finite
from .problem import GaussianInit

REFERENCE_RUN = 1


@dataclass
class StudyReport:
    kind: str
    axis_name: str
    axis: list
    points: list
    checks: dict
    seed: int
    config: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        # runtime is left out on purpose: reports must be byte-reproducible
        return {
            "kind": self.kind,
            "seed": self.seed,
            "axis_name": self.axis_name,
            "axis": self.axis,
            "points": self.points,
            "fits": self.fits,
            "checks": self.checks,
            "passed": self.passed,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        keys = sorted({k for p in self.points for k, v in p.items() if not isinstance(v, (list, dict))})
        yield keys
        for p in self.points:
            yield [_fmt(p.get(k, "")) for k in keys]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def mean_stderr(values) -> tuple:
    values = np.asarray(values, dtype=float)
    mean = math.fsum(values) / len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def loglog_fit(xs, ys) -> dict:
    """Least-squares slope of log y against log x, with R^2."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(xs) < 2 or np.any(ys <= 0):
        return {"slope": None, "intercept": None, "r2": None}
    fit = linregress(np.log(xs), np.log(ys))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r2": float(fit.rvalue**2)}


def _pmap(fn, items, threads):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _zero_controls(problem):
    return ControlSchedule.zeros(problem.m, problem.n_u, problem.d, problem.T, problem.gain, problem.kappa)


# ---------------------------------------------------------------- chaos


def run_chaos_study(problem, M_list: Sequence[int], replicates: int, batch: int = 32,
                    N_ref: int = 1 << 16, controls: Optional[ControlSchedule] = None,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    slope_max: float = -0.35, threads: int = 1) -> StudyReport:
    """Couple the particle system to independent McKean copies with shared noise.

    The mean-field law comes from a reference cloud of ``N_ref`` samples
    driven by a separate run id, so it is independent of every particle run.
    Particle i of realisation s and its McKean copy share initial datum and
    Brownian increments.  A replicate averages ``batch`` realisations.
    """
    started = time.perf_counter()
    if replicates < 1 or batch < 1 or len(M_list) < 2:
        raise ParameterError("need replicates >= 1, batch >= 1 and at least two population sizes")
    controls = _zero_controls(problem) if controls is None else controls
    noise = problem.noise_plan()
    ref = solve_mckean(problem, controls, N=N_ref, tol=tol, max_iter=max_iter,
                       noise=noise.with_run(REFERENCE_RUN))
    ref_cost = chaos_cost_breakdown(ref, controls, problem.cost).total
    ref_leaders = ref.leaders

    def task(item):
        M, sample = item
        p = problem.replace(M=M)
        traj = simulate_finite(p, controls, noise, sample, stride=1)
        init, incr = noise.draws(sample, M, p.n_steps, p.d)
        x0 = p.follower_init.sample(init)
        copies, _ = picard_sweep(p, controls, x0, incr, ref.law_flow, ref_leaders)
        err = float(np.max(np.linalg.norm(traj.followers - copies, axis=2)))
        if problem.m:
            err += float(np.max(np.linalg.norm(traj.leaders - ref_leaders, axis=2)))
        cost = finite_cost_breakdown([traj], controls, problem.cost).total
        return err, cost

    n_samples = replicates * batch
    items = [(M, s) for M in M_list for s in range(n_samples)]
    results = _pmap(task, items, threads)
    points = []
    per_rep = np.empty((len(M_list), replicates))
    for a, M in enumerate(M_list):
        block = results[a * n_samples:(a + 1) * n_samples]
        errs = np.array([r[0] for r in block])
        costs = np.array([r[1] for r in block])
        per_rep[a] = [math.fsum(errs[r * batch:(r + 1) * batch]) / batch for r in range(replicates)]
        err_mean, err_se = mean_stderr(per_rep[a])
        cost_mean, cost_se = mean_stderr(costs)
        points.append({
            "M": int(M), "error_mean": err_mean, "error_stderr": err_se, "replicates": replicates,
            "batch": batch, "replicate_errors": per_rep[a].tolist(),
            "cost_finite": cost_mean, "cost_finite_stderr": cost_se,
            "cost_gap": abs(cost_mean - ref_cost),
        })
    fit = loglog_fit(M_list, [p["error_mean"] for p in points])
    decreasing = bool(np.all(np.diff(per_rep, axis=0) < 0))
    gaps_ok = True
    for prev, nxt in zip(points, points[1:]):
        slack = 2.0 * math.hypot(prev["cost_finite_stderr"], nxt["cost_finite_stderr"])
        gaps_ok &= nxt["cost_gap"] <= prev["cost_gap"] + slack
    checks = {
        "error_decreasing_per_replicate": decreasing,
        "slope_below_threshold": fit["slope"] is not None and fit["slope"] <= slope_max,
        "cost_gap_decreasing": bool(gaps_ok),
    }
    return StudyReport(
        "chaos", "M", [int(M) for M in M_list], points, checks, problem.seed,
        fits={"error_vs_M": fit, "reference_cost": ref_cost, "reference_iterations": ref.iterations,
              "reference_residual": ref.residual, "slope_max": slope_max},
        runtime=time.perf_counter() - started,
    )


# ---------------------------------------------------------------- gamma


def run_gamma_study(problem, m_list: Sequence[int], replicates: int, leader_law: GaussianInit,
                    opt_kwargs: Optional[dict] = None, stderr_factor: float = 2.0,
                    threads: int = 1) -> StudyReport:
    """Minimal mean-field cost as the number of leaders grows.

    Leaders start i.i.d. from ``leader_law``; replicate r uses leader draw r
    for every m, and the same follower noise throughout.  The Cauchy check
    compares |c_last - c_prev| with |c_2 - c_1| plus ``stderr_factor``
    paired standard errors of the last difference.
    """
    started = time.perf_counter()
    if len(m_list) < 4:
        raise ParameterError("the Cauchy check needs at least four leader counts")
    opt_kwargs = dict(opt_kwargs or {})
    opt_kwargs.setdefault("objective", "mckean")

    def task(item):
        m, r = item
        p = problem.replace(m=m, leader_init=leader_law, leader_draw=r)
        try:
            res = optimize(OptProblem(p, **opt_kwargs))
        except Exception as exc:  # reported per point, the study carries on
            return {"error": f"{type(exc).__name__}: {exc}"}
        return {"cost": res.cost_value, "baseline": res.baseline_cost,
                "evaluations": len(res.evaluations), "budget_exhausted": res.budget_exhausted}

    items = [(m, r) for m in m_list for r in range(replicates)]
    results = _pmap(task, items, threads)
    table = np.full((len(m_list), replicates), np.nan)
    points = []
    for a, m in enumerate(m_list):
        block = results[a * replicates:(a + 1) * replicates]
        failures = [b["error"] for b in block if "error" in b]
        costs = [b.get("cost", math.nan) for b in block]
        table[a] = costs
        ok = [c for c in costs if math.isfinite(c)]
        mean, se = mean_stderr(ok) if ok else (math.nan, math.nan)
        points.append({
            "m": int(m), "min_cost_mean": mean, "min_cost_stderr": se, "replicates": len(ok),
            "replicate_costs": costs, "baseline_costs": [b.get("baseline", math.nan) for b in block],
            "failures": failures,
        })
    means = table.mean(axis=1)
    diffs = np.abs(np.diff(means))
    last = table[-1] - table[-2]
    paired_se = float(np.std(last, ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    cauchy = bool(np.all(np.isfinite(table))) and bool(diffs[-1] <= diffs[0] + stderr_factor * paired_se)
    checks = {"all_points_solved": bool(np.all(np.isfinite(table))), "cauchy_trend": cauchy}
    return StudyReport(
        "gamma", "m", [int(m) for m in m_list], points, checks, problem.seed,
        fits={"successive_differences": diffs.tolist(), "paired_stderr_last": paired_se,
              "stderr_factor": stderr_factor},
        runtime=time.perf_counter() - started,
    )


# ---------------------------------------------------------------- stability


def run_stability_study(problem, scales: Sequence[float], N: Optional[int] = None,
                        controls: Optional[ControlSchedule] = None, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER, spread_max: float = 1.5,
                        threads: int = 1) -> StudyReport:
    """Sensitivity of the follower law to a translated leader flow.

    The reference leader flow comes from the McKean solution with the given
    (default zero) controls.  For each scale the flow is shifted along the
    first axis and both fixed-flow problems are solved with identical noise.
    """
    started = time.perf_counter()
    if problem.m < 1:
        raise ParameterError("the stability study needs leaders")
    N = problem.N if N is None else N
    controls = _zero_controls(problem) if controls is None else controls
    noise = problem.noise_plan()
    base = solve_mckean(problem, controls, N=N, tol=tol, max_iter=max_iter, noise=noise)
    nu_ref = base.leader_flow()
    unperturbed = solve_fixed_nu(problem, nu_ref, N=N, tol=tol, max_iter=max_iter, noise=noise)
    e1 = np.zeros(problem.d)
    e1[0] = 1.0
    widths = np.diff(problem.step_times())

    def task(lam):
        shifted = nu_ref.translate(lam * e1)
        sol = solve_fixed_nu(problem, shifted, N=N, tol=tol, max_iter=max_iter, noise=noise)
        gap = np.linalg.norm(sol.paths - unperturbed.paths, axis=2).mean(axis=1)
        integral = math.fsum(h * wasserstein1(a, b) for h, a, b in zip(widths, nu_ref.measures, shifted.measures))
        return float(gap.max()), integral

    results = _pmap(task, list(scales), threads)
    points = []
    ratios = []
    for lam, (sup_gap, integral) in zip(scales, results):
        ratio = sup_gap / integral if integral > 0 else None
        if ratio is not None:
            ratios.append(ratio)
        points.append({"scale": float(lam), "sup_mean_gap": sup_gap, "w1_integral": integral, "ratio": ratio})
    spread = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else None
    zero_ok = all(p["sup_mean_gap"] == 0.0 for p in points if p["scale"] == 0.0)
    checks = {
        "zero_scale_zero_gap": zero_ok,
        "ratio_spread_within_bound": spread is None or spread <= spread_max,
    }
    return StudyReport(
        "stability", "scale", [float(s) for s in scales], points, checks, problem.seed,
        fits={"ratio_spread": spread, "spread_max": spread_max},
        runtime=time.perf_counter() - started,
    )


# ---------------------------------------------------------------- Fokker-Planck


def run_fp_crosscheck(problem, levels: Sequence[tuple], x_min: float, x_max: float,
                      reference: Optional[tuple] = None, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER, w1_max: float = 0.05,
                      threads: int = 1) -> StudyReport:
    """Compare the finite-volume density with the McKean law on refinement levels.

    ``levels`` lists (N, n_cells) pairs from coarse to fine.  With leaders
    the flow is frozen at the zero-control McKean leaders; ``reference``
    optionally gives (mean, std) of a Gaussian the final laws should match.
    """
    started = time.perf_counter()
    if problem.d != 1:
        raise ParameterError("the Fokker-Planck cross-check is one-dimensional")
    noise = problem.noise_plan()
    nu_flow = None
    if problem.m:
        finest_N = max(n for n, _ in levels)
        nu_flow = solve_mckean(problem, _zero_controls(problem), N=finest_N, tol=tol,
                               max_iter=max_iter, noise=noise).leader_flow()
    k_half = problem.n_steps // 2
    checkpoints = {"T/2": k_half, "T": problem.n_steps}

    def task(level):
        N, n_cells = level
        if nu_flow is None:
            sol = solve_mckean(problem, None, N=N, tol=tol, max_iter=max_iter, noise=noise)
        else:
            sol = solve_fixed_nu(problem, nu_flow, N=N, tol=tol, max_iter=max_iter, noise=noise)
        dens = fp_solve(problem, nu_flow, FPGrid(x_min, x_max, n_cells))
        row = {"N": int(N), "n_cells": int(n_cells), "picard_iterations": sol.iterations}
        for name, k in checkpoints.items():
            row[f"w1_{name}"] = wasserstein1(quantize(dens[k]), sol.law_flow[k])
        if reference is not None:
            row["w1_fp_reference"] = wasserstein1_gaussian(quantize(dens[-1]), *reference)
            row["w1_mckean_reference"] = wasserstein1_gaussian(sol.law_flow[-1], *reference)
        edge_mass = float((dens[-1].values[0] + dens[-1].values[-1]) * dens[-1].dx)
        row["boundary_mass"] = edge_mass
        return row

    points = _pmap(task, list(levels), threads)
    finest, coarsest = points[-1], points[0]
    final = [finest["w1_T"]]
    if reference is not None:
        final += [finest["w1_fp_reference"], finest["w1_mckean_reference"]]
    checks = {
        "finest_within_tolerance": bool(max(final) <= w1_max),
        "refinement_improves": bool(finest["w1_T"] <= coarsest["w1_T"]),
    }
    return StudyReport(
        "fpcheck", "level", list(range(len(points))), points, checks, problem.seed,
        fits={"w1_max": w1_max, "reference": list(reference) if reference is not None else None},
        runtime=time.perf_counter() - started,
    )
