import itertools

import numpy as np
import pytest

from mfcontrol.benchmarks import chaos_problem
from mfcontrol.controls import ControlSchedule
from mfcontrol.cost import CostSpec
from mfcontrol.errors import ConvergenceError, ParameterError
from mfcontrol.fields import AffineField, FieldSpec, GainSpec, LinearKernel
from mfcontrol.measures import EmpiricalMeasure, MeasureFlow, moment, wasserstein1
from mfcontrol.mckean import picard_residual, picard_sweep, solve_fixed_nu, solve_mckean
from mfcontrol.particles import simulate_finite
from mfcontrol.problem import GaussianInit, LeaderPoints, ProblemSpec

U = EmpiricalMeasure.uniform


def lone(**kw):
    base = dict(d=1, T=1.0, dt=0.02, sigma=0.5, M=100, m=0, N=500, vfield=FieldSpec(), wfield=FieldSpec(),
                gain=GainSpec(), kappa=1.0, follower_init=GaussianInit([0.7], 0.5), leader_init=LeaderPoints(()),
                cost=CostSpec("zero"), seed=2)
    base.update(kw)
    return ProblemSpec(**base)


def zeros(p):
    return ControlSchedule.zeros(p.m, p.n_u, p.d, p.T, p.gain, p.kappa)


def sup_w1(a, b):
    return max(wasserstein1(U(x), U(y)) for x, y in zip(a, b))


# ---- examples


def test_uncoupled_fields_stop_after_two_sweeps():
    p = lone(vfield=FieldSpec(external=AffineField(-0.5)), m=1, leader_init=LeaderPoints([[0.0]]),
             wfield=FieldSpec(leader_kernels=[LinearKernel(-1.0)]))
    sol = solve_mckean(p, ControlSchedule.constant(0.3, 1, 1, 1, p.T, p.gain, p.kappa))
    assert sol.iterations == 2 and sol.residual == 0.0


def test_mean_is_conserved_by_centring_drift():
    p = lone(vfield=FieldSpec(follower_kernels=[LinearKernel(-1.0)]), N=4000)
    sol = solve_mckean(p, None)
    x0, xT = sol.paths[0, :, 0], sol.paths[-1, :, 0]
    se = np.std(xT - x0, ddof=1) / np.sqrt(len(xT))
    assert abs(xT.mean() - x0.mean()) <= 3 * se


def test_deterministic_flow_is_push_forward():
    p = lone(sigma=0.0, vfield=FieldSpec(external=AffineField(-1.0)))
    sol = solve_mckean(p, None)
    expected = sol.paths[0] * (1 - p.dt) ** p.n_steps
    assert np.allclose(sol.law_flow.measures[-1].atoms, expected, rtol=1e-13, atol=0)


def test_large_tol_returns_after_two_sweeps():
    sol = solve_mckean(chaos_problem().replace(N=200), zeros(chaos_problem()), tol=1e6)
    assert sol.iterations == 2 and len(sol.history) == 1


def test_non_convergence_carries_history():
    p = chaos_problem().replace(N=200)
    with pytest.raises(ConvergenceError) as info:
        solve_mckean(p, zeros(p), tol=1e-14, max_iter=3)
    assert len(info.value.history) == 2 and all(h > 1e-14 for h in info.value.history)


def test_bad_arguments():
    p = chaos_problem()
    with pytest.raises(ParameterError):
        solve_mckean(p, zeros(p), N=1)
    with pytest.raises(ParameterError):
        solve_mckean(p, zeros(p), tol=0.0)
    with pytest.raises(ParameterError):
        solve_mckean(p, None)


# ---- picard_residual


def test_residual_examples():
    t = np.array([0.0, 0.5, 1.0])
    a = MeasureFlow(t, (U([[0.0]]), U([[0.0]]), U([[0.0]])))
    b = MeasureFlow(t, (U([[0.0]]), U([[1.0]]), U([[0.0]])))
    assert picard_residual(a, a) == 0.0
    assert picard_residual(a, b) == 1.0
    with pytest.raises(ParameterError):
        picard_residual(a, MeasureFlow(np.array([0.0, 1.0]), (U([[0.0]]), U([[0.0]]))))


def test_residual_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d, n, k = int(rng.integers(1, 4)), int(rng.integers(1, 6)), 4
        xs, ys = rng.normal(size=(k, n, d)), rng.normal(size=(k, n, d))
        t = np.linspace(0, 1, k)
        ref = max(
            min(sum(np.linalg.norm(x[i] - y[q[i]]) for i in range(n)) for q in itertools.permutations(range(n))) / n
            for x, y in zip(xs, ys)
        )
        got = picard_residual(MeasureFlow.from_paths(t, xs), MeasureFlow.from_paths(t, ys))
        assert abs(got - ref) <= 1e-12


# ---- fixed leader law


def test_fixed_nu_matches_leaderless_solve():
    p = lone(vfield=FieldSpec(follower_kernels=[LinearKernel(-1.0)], external=AffineField(-0.3)))
    times = p.step_times()
    nu = MeasureFlow(times, tuple(EmpiricalMeasure.dirac([0.0]) for _ in times))
    a = solve_fixed_nu(p, nu)
    b = solve_mckean(p, None)
    assert np.array_equal(a.paths, b.paths) and a.iterations == b.iterations


def test_fixed_nu_must_cover_horizon():
    p = lone()
    short = MeasureFlow(np.array([0.0, 0.5]), (U([[0.0]]), U([[0.0]])))
    with pytest.raises(ParameterError):
        solve_fixed_nu(p, short)


# ---- properties


def test_contraction_observed():
    p = chaos_problem().replace(N=1000)
    sol = solve_mckean(p, zeros(p), tol=1e-10)
    h = np.array(sol.history)
    assert np.mean(h[1:] < h[:-1]) >= 0.8


def test_consistency_with_particle_system():
    p = chaos_problem().replace(M=400, N=400)
    c = ControlSchedule.constant(0.4, 2, 1, 1, p.T, p.gain, p.kappa)
    noise = p.noise_plan()
    part = simulate_finite(p, c, noise, stride=1)
    tol = 1e-3
    sol = solve_mckean(p, c, tol=tol, noise=noise)
    init, incr = noise.draws(0, p.N, p.n_steps, p.d)
    x, y = picard_sweep(p, c, p.follower_init.sample(init), incr, part.followers, part.leaders)
    assert sup_w1(x, sol.paths) <= 5 * tol
    assert np.max(np.abs(y - sol.leaders)) <= 5 * tol


def test_two_initial_guesses_agree():
    p = chaos_problem().replace(M=300, N=300)
    c = ControlSchedule.constant(-0.5, 2, 1, 1, p.T, p.gain, p.kappa)
    tol = 1e-3
    cold = solve_mckean(p, c, tol=tol)
    part = simulate_finite(p.replace(seed=99), c, p.replace(seed=99).noise_plan(), stride=1)
    warm = solve_mckean(p, c, tol=tol, init=(part.followers, part.leaders + 0.5))
    assert sup_w1(cold.paths, warm.paths) <= 3 * tol


def test_second_moment_stays_bounded():
    p = chaos_problem().replace(T=6.0, N=1000, follower_init=GaussianInit([2.0], 1.0))
    sol = solve_mckean(p, zeros(p))
    m2 = np.array([moment(mu, 2) for mu in sol.law_flow.measures])
    half = len(m2) // 2
    assert np.all(np.isfinite(m2))
    assert m2[half:].max() <= 1.25 * m2[:half].max()
