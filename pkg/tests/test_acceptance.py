"""Acceptance criteria 1-10.

Each test prints one line ``criterion N: PASS|FAIL  <detail>``.  Run
``pytest tests/test_acceptance.py -v -s`` to see the lines inline, or
``python tests/test_acceptance.py`` for the bare report.
"""
import functools
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from mfcontrol.benchmarks import LEADER_LAW, chaos_problem, gamma_problem, ou_problem, stability_problem, steering_problem
from mfcontrol.cli import main as cli_main
from mfcontrol.control import OptProblem, estimate_cost, optimize
from mfcontrol.controls import ControlSchedule
from mfcontrol.cost import CostSpec, direct_control_cost, finite_cost_breakdown, phi_atomic_identity
from mfcontrol.fields import FieldSpec, GainSpec
from mfcontrol.fokker_planck import FPGrid, fp_solve, quantize
from mfcontrol.measures import EmpiricalMeasure, wasserstein1, wasserstein1_gaussian
from mfcontrol.mckean import solve_mckean
from mfcontrol.particles import simulate_finite
from mfcontrol.problem import LeaderPoints
from mfcontrol.studies import run_chaos_study, run_gamma_study, run_stability_study

ROOT = Path(__file__).resolve().parents[1]
U = EmpiricalMeasure.uniform


def report(n, ok, detail, runtime, limit):
    within = runtime < limit
    line = f"criterion {n}: {'PASS' if ok and within else 'FAIL'}  {detail}  [{runtime:.1f}s < {limit:.0f}s: {within}]"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    ACCEPTANCE_LINES.append(line)
    return ok and within


def timed(fn):
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        return out, time.perf_counter() - t
    return wrapper


# ---- 1: W1 against brute-force assignment


def brute_w1(a, b):
    n = len(a)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    perms = np.array(list(itertools.permutations(range(n))))
    return cost[np.arange(n), perms].sum(axis=1).min() / n


@timed
def criterion_1():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(200):
        d = 1 + trial % 3
        n = int(rng.integers(1, 9))
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        worst = max(worst, abs(wasserstein1(U(a), U(b)) - brute_w1(a, b)))
    return worst <= 1e-12, f"max |W1 - brute force| = {worst:.2e} over 200 pairs (tol 1e-12)"


def test_criterion_1_w1_oracle():
    (ok, detail), rt = criterion_1()
    assert report(1, ok, detail, rt, 10)


# ---- 2: Brownian variance


@timed
def criterion_2():
    p = ou_problem(N=10_000).replace(vfield=FieldSpec(), sigma=0.5, T=1.0, dt=0.01)
    traj = simulate_finite(p, ControlSchedule.zeros(0, 1, 1, p.T, p.gain, p.kappa), p.noise_plan())
    var = float(np.var(traj.followers[-1, :, 0] - traj.followers[0, :, 0], ddof=1))
    return 0.95 <= var <= 1.05, f"Var[X(T)-X(0)] = {var:.4f} (want [0.95, 1.05])"


def test_criterion_2_brownian_variance():
    (ok, detail), rt = criterion_2()
    assert report(2, ok, detail, rt, 5)


# ---- 3: OU stationarity, FP and McKean


@timed
def criterion_3():
    p = ou_problem(N=10_000)
    sol = solve_mckean(p, None)
    law = sol.law_flow[-1]
    dens = quantize(fp_solve(p, None, FPGrid(-4.0, 4.0, 400))[-1])
    std = math.sqrt(p.sigma)
    w_mk = wasserstein1_gaussian(law, 0.0, std)
    w_fp = wasserstein1_gaussian(dens, 0.0, std)
    w_mut = wasserstein1(law, dens)
    ok = max(w_mk, w_fp, w_mut) <= 0.05
    return ok, f"W1(McKean, N(0,1/4)) = {w_mk:.4f}, W1(FP, N(0,1/4)) = {w_fp:.4f}, mutual = {w_mut:.4f} (tol 0.05)"


def test_criterion_3_ou_stationarity():
    (ok, detail), rt = criterion_3()
    assert report(3, ok, detail, rt, 60)


# ---- 4: propagation of chaos (run shared with 7)


@functools.lru_cache(maxsize=1)
def chaos_run():
    t = time.perf_counter()
    rep = run_chaos_study(chaos_problem(), [16, 64, 256, 1024], replicates=10, batch=32, N_ref=1 << 16)
    return rep, time.perf_counter() - t


def test_criterion_4_propagation_of_chaos():
    rep, rt = chaos_run()
    slope = rep.fits["error_vs_M"]["slope"]
    errs = ", ".join(f"{p['error_mean']:.4f}" for p in rep.points)
    ok = rep.checks["error_decreasing_per_replicate"] and rep.checks["slope_below_threshold"]
    detail = (f"errors over M=16..1024: {errs}; slope {slope:.3f} (want <= -0.35); "
              f"decreasing in every replicate: {rep.checks['error_decreasing_per_replicate']}")
    assert report(4, ok, detail, rt, 600)


# ---- 5: stability linearity


@timed
def criterion_5():
    rep = run_stability_study(stability_problem(), [0.1, 0.2, 0.4])
    ratios = ", ".join(f"{p['ratio']:.4f}" for p in rep.points)
    spread = rep.fits["ratio_spread"]
    return rep.checks["ratio_spread_within_bound"], f"ratios {ratios}; max/min = {spread:.3f} (want <= 1.5)"


def test_criterion_5_stability_linearity():
    (ok, detail), rt = criterion_5()
    assert report(5, ok, detail, rt, 120)


# ---- 6: cost identities


@timed
def criterion_6():
    p = chaos_problem().replace(M=50, m=2, kappa=2.0)
    zero = ControlSchedule.zeros(2, 1, 1, p.T, p.gain, p.kappa)
    trajs = [simulate_finite(p, zero, p.noise_plan(), s) for s in range(3)]
    zero_term = finite_cost_breakdown(trajs, zero, p.cost).control

    c = 0.7
    q = p.replace(m=1, leader_init=LeaderPoints([[0.0]]))
    const = ControlSchedule.constant(c, 1, 1, 1, q.T, q.gain, q.kappa)
    const_term = finite_cost_breakdown([simulate_finite(q, const, q.noise_plan())], const, q.cost).control
    const_err = abs(const_term - q.T * c * c)

    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        m, n_u, d, n_steps = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 3)), 20
        times = np.linspace(0.0, 1.0, n_steps + 1)
        leaders = rng.normal(size=(n_steps + 1, m, d)) * 0.2 + np.arange(m)[None, :, None]
        gains = rng.uniform(-1, 1, size=n_steps + 1)
        gains[rng.uniform(size=n_steps + 1) < 0.15] = 0.0
        ctrl = ControlSchedule(rng.uniform(-1, 1, size=(m, n_u, d)), 1.0, GainSpec(), 1.0)
        spec = CostSpec("zero", phi=("quadratic", "weighted")[int(rng.integers(2))])
        worst = max(worst, abs(phi_atomic_identity(ctrl, leaders, gains, spec, times)
                               - direct_control_cost(ctrl, gains, spec, times)))
    ok = zero_term == 0.0 and const_err <= 1e-12 and worst <= 1e-12
    return ok, (f"zero-control term = {zero_term!r}; |control term - T c^2| = {const_err:.1e}; "
                f"atomic identity max gap = {worst:.1e} over 50 instances")


def test_criterion_6_cost_identities():
    (ok, detail), rt = criterion_6()
    assert report(6, ok, detail, rt, 10)


# ---- 7: costs along the chaos run (shares the run of criterion 4)


def test_criterion_7_chaos_of_costs():
    rep, rt = chaos_run()
    gaps = ", ".join(f"{p['cost_gap']:.5f}" for p in rep.points)
    detail = f"|E(M) - E_mf| over M=16..1024: {gaps} (decreasing up to 2 stderr)"
    assert report(7, rep.checks["cost_gap_decreasing"], detail, rt, 600)


# ---- 8: optimizer sanity


@timed
def criterion_8():
    p4 = steering_problem(n_u=4)
    res4 = optimize(OptProblem(p4, objective="mckean", samples=2, iterations=25, starts=4, threads=4))
    ratio = res4.cost_value / res4.baseline_cost

    p1 = steering_problem(n_u=1)
    opt1 = OptProblem(p1, objective="mckean", samples=2, iterations=25, starts=4, threads=4)
    res1 = optimize(opt1)
    grid = np.linspace(-p1.kappa, p1.kappa, 41)
    values = [estimate_cost(opt1, ControlSchedule.constant(u, 1, 1, 1, p1.T, p1.gain, p1.kappa))[0] for u in grid]
    best_grid = min(values)
    rel = res1.cost_value / best_grid - 1.0
    ok = ratio <= 0.9 and rel <= 0.02
    return ok, (f"n_u=4: optimized/baseline = {ratio:.3f} (want <= 0.9); "
                f"n_u=1: optimized {res1.cost_value:.4f} vs grid {best_grid:.4f} at u={grid[int(np.argmin(values))]:+.2f}, "
                f"excess {100 * rel:+.2f}% (want <= 2%)")


def test_criterion_8_optimizer_sanity():
    (ok, detail), rt = criterion_8()
    assert report(8, ok, detail, rt, 300)


# ---- 9: convergence of minima in m


GAMMA_OPT = dict(objective="mckean", samples=2, method="fd", iterations=10, starts=1, first_step=0.3)


@timed
def criterion_9():
    rep = run_gamma_study(gamma_problem(), [2, 4, 8, 16], replicates=4, leader_law=LEADER_LAW,
                          opt_kwargs=GAMMA_OPT, threads=4)
    cs = ", ".join(f"{p['min_cost_mean']:.4f}" for p in rep.points)
    diffs = rep.fits["successive_differences"]
    se = rep.fits["paired_stderr_last"]
    detail = (f"min costs m=2..16: {cs}; |c16-c8| = {diffs[-1]:.4f} vs |c4-c2| + 2se = {diffs[0] + 2 * se:.4f}")
    return rep.passed, detail


def test_criterion_9_gamma_convergence():
    (ok, detail), rt = criterion_9()
    assert report(9, ok, detail, rt, 1200)


# ---- 10: CLI determinism across reruns and thread counts


STUDY_CONFIGS = {"chaos": "chaos.toml", "gamma": "gamma.toml", "stability": "stability.toml", "fpcheck": "ou.toml"}


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@timed
def criterion_10(tmp):
    mismatched, codes = [], {}
    for study, cfg in STUDY_CONFIGS.items():
        outs = []
        for tag, threads in (("t1", 1), ("t1again", 1), ("t8", 8)):
            out = tmp / f"{study}_{tag}"
            codes[(study, tag)] = cli_main(["study", study, "--config", str(ROOT / "configs" / cfg),
                                            "--out", str(out), "--threads", str(threads)])
            outs.append(_snapshot(out))
        if not (outs[0] == outs[1] == outs[2]):
            mismatched.append(study)
    exits = sorted({c for c in codes.values()})
    ok = not mismatched and exits == [0]
    return ok, (f"4 studies x (threads 1, threads 1, threads 8): identical bytes for all: {not mismatched}"
                f"{'' if not mismatched else ' (mismatch: ' + ', '.join(mismatched) + ')'}; exit codes {exits}")


def test_criterion_10_cli_determinism(tmp_path):
    (ok, detail), rt = criterion_10(tmp_path)
    assert report(10, ok, detail, rt, 1800)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
