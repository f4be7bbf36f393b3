import numpy as np
import pytest

from mfcontrol.benchmarks import steering_problem
from mfcontrol.control import OptProblem, OptResult, estimate_cost, optimize, project_K
from mfcontrol.controls import ControlSchedule
from mfcontrol.cost import CostSpec
from mfcontrol.errors import ParameterError
from mfcontrol.fields import FieldSpec, LinearKernel
from mfcontrol.measures import EmpiricalMeasure
from mfcontrol.problem import LeaderPoints


def small(**kw):
    return steering_problem(n_u=2, N=30).replace(**kw)


def zeros(p):
    return ControlSchedule.zeros(p.m, p.n_u, p.d, p.T, p.gain, p.kappa)


# ---- projection


def test_project_examples():
    assert np.array_equal(project_K([0.3, -0.2], 1.0), [0.3, -0.2])
    assert np.array_equal(project_K([5.0, -5.0], 1.0), [1.0, -1.0])
    with pytest.raises(ParameterError):
        project_K([0.0], 0.0)


def test_project_idempotent():
    rng = np.random.default_rng(0)
    for _ in range(100):
        u, k = rng.normal(size=4) * 3, rng.uniform(0.1, 3)
        once = project_K(u, k)
        assert np.array_equal(project_K(once, k), once)


# ---- estimate_cost


def test_common_random_numbers():
    opt = OptProblem(small(), objective="finite", samples=4)
    c = ControlSchedule.constant(1.0, 1, 2, 1, 2.0, opt.problem.gain, 3.0)
    assert estimate_cost(opt, c) == estimate_cost(opt, c)
    res = optimize(OptProblem(small(), objective="finite", samples=4, iterations=0, starts=1))
    assert estimate_cost(opt, zeros(opt.problem)) == (res.baseline_cost, res.baseline_stderr)


def test_mckean_objective_is_deterministic():
    opt = OptProblem(small(), objective="mckean", samples=2)
    c = ControlSchedule.constant(0.5, 1, 2, 1, 2.0, opt.problem.gain, 3.0)
    a, b = estimate_cost(opt, c), estimate_cost(opt, c)
    assert a == b and a[1] > 0


def test_stderr_scaling():
    p = small().replace(sigma=0.5, M=10)
    c = ControlSchedule.constant(1.0, 1, 2, 1, p.T, p.gain, p.kappa)
    ns = np.array([25, 100, 400])
    ses = [estimate_cost(OptProblem(p, objective="finite", samples=int(n)), c)[1] for n in ns]
    slope = np.polyfit(np.log(ns), np.log(ses), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_bad_problem():
    with pytest.raises(ParameterError):
        OptProblem(small(), objective="exact")
    with pytest.raises(ParameterError):
        OptProblem(small(), n_u=7)
    with pytest.raises(ParameterError):
        OptProblem(small(), samples=0)


# ---- optimize


def null_lagrangian_problem():
    """Followers never move, the target is their own cloud: only the control cost remains."""
    p = small(sigma=0.0, vfield=FieldSpec())
    init, _ = p.noise_plan().draws(0, p.M, p.n_steps, p.d)
    target = EmpiricalMeasure.uniform(p.follower_init.sample(init))
    return p.replace(cost=CostSpec("w1_target", target=target, phi="quadratic", control_weight=1.0))


def test_zero_is_optimal_without_lagrangian():
    p = null_lagrangian_problem()
    res = optimize(OptProblem(p, objective="finite", iterations=30, starts=3))
    assert res.baseline_cost == 0.0
    assert np.max(np.abs(res.controls.values)) <= 0.05 * p.kappa
    first = {}
    for e in res.evaluations:
        first.setdefault(e["start"], e["cost"])
    assert len(first) == 3 and res.cost_value <= min(first.values())


def test_trace_and_feasibility():
    p = small()
    res = optimize(OptProblem(p, objective="finite", samples=2, iterations=8, starts=3, first_step=2.0))
    best = [e["best"] for e in res.trace]
    assert all(b <= a for a, b in zip(best, best[1:]))
    for s in range(3):
        own = [e["best"] for e in res.trace if e["start"] == s]
        assert own and all(b <= a for a, b in zip(own, own[1:]))
    assert all(e["max_abs_u"] <= p.kappa for e in res.evaluations)
    assert res.cost_value == min(e["cost"] for e in res.evaluations)
    assert res.cost_value <= res.baseline_cost


def test_improves_steering_cost():
    p = small()
    res = optimize(OptProblem(p, objective="finite", samples=2, iterations=15, starts=2))
    assert res.cost_value <= 0.9 * res.baseline_cost


def test_json_round_trip_and_warm_start(tmp_path):
    p = small()
    opt = OptProblem(p, objective="finite", samples=2, iterations=5, starts=2)
    res = optimize(opt)
    back = OptResult.from_json(res.to_json(indent=2))
    assert np.array_equal(back.controls.values, res.controls.values)
    assert back.cost_value == res.cost_value and back.trace == res.trace
    warm = optimize(OptProblem(p, objective="finite", samples=2, iterations=0, starts=1), initial=back.controls)
    assert warm.cost_value == res.cost_value


def test_budget_flag():
    res = optimize(OptProblem(small(), objective="finite", iterations=50, starts=1, budget=5))
    assert res.budget_exhausted and len(res.evaluations) <= 5
    free = optimize(OptProblem(small(), objective="finite", iterations=2, starts=1))
    assert not free.budget_exhausted


def test_threads_do_not_change_result():
    kw = dict(objective="finite", samples=2, iterations=4, starts=3)
    a = optimize(OptProblem(small(), threads=1, **kw))
    b = optimize(OptProblem(small(), threads=3, **kw))
    assert a.to_json() == b.to_json()


def test_gain_parameters_optimised_within_bounds():
    p = small()
    res = optimize(OptProblem(p, objective="finite", iterations=4, starts=2, optimize_gain=True))
    g = res.controls.gain
    assert abs(g.theta0) <= g.delta and abs(g.theta1) <= g.lam


def test_permutation_symmetry():
    base = steering_problem(n_u=1, N=60).replace(
        m=2, leader_init=LeaderPoints([[-0.5], [0.5]]),
        vfield=FieldSpec(leader_kernels=[LinearKernel(-1.0)]))
    flipped = base.replace(leader_init=LeaderPoints([[0.5], [-0.5]]))
    kw = dict(objective="mckean", samples=2, method="fd", iterations=4, starts=1, first_step=0.3)
    a = optimize(OptProblem(base, **kw))
    b = optimize(OptProblem(flipped, **kw))
    assert abs(a.cost_value - b.cost_value) <= 2 * max(a.stderr, b.stderr, 1e-12)
    c = optimize(OptProblem(flipped, **{**kw, "iterations": 0}), initial=a.controls.permuted([1, 0]))
    assert abs(c.cost_value - a.cost_value) <= 2 * max(a.stderr, c.stderr, 1e-12)
