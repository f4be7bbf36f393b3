"""Reference instances used by the test-suite, the demos and the shipped configs."""
from __future__ import annotations

from .cost import CostSpec
from .fields import AffineField, FieldSpec, GainSpec, LinearKernel, RadialKernel
from .measures import EmpiricalMeasure
from .problem import GaussianInit, LeaderPoints, ProblemSpec


def ou_problem(N: int = 10_000, seed: int = 0) -> ProblemSpec:
    """dX = -X dt + sqrt(2 sigma) dW with sigma = 1/4; stationary law N(0, 1/4)."""
    return ProblemSpec(
        d=1, T=5.0, dt=0.01, sigma=0.25, M=N, m=0, N=N,
        vfield=FieldSpec(external=AffineField(-1.0)), wfield=FieldSpec(),
        gain=GainSpec(), kappa=1.0, follower_init=GaussianInit([0.5], 0.5),
        leader_init=LeaderPoints(()), cost=CostSpec("zero"), seed=seed,
    )


def chaos_problem(seed: int = 11) -> ProblemSpec:
    """Two leaders and mean-field coupled followers on [0, 1]."""
    return ProblemSpec(
        d=1, T=1.0, dt=0.02, sigma=0.5, M=16, m=2, N=1024,
        vfield=FieldSpec(follower_kernels=[LinearKernel(-1.0)], leader_kernels=[LinearKernel(-0.5)]),
        wfield=FieldSpec(follower_kernels=[LinearKernel(-0.5)]),
        gain=GainSpec(), kappa=1.0, follower_init=GaussianInit([0.5], 0.5),
        leader_init=LeaderPoints([[-1.0], [1.0]]), cost=CostSpec("leader_follower"), seed=seed,
    )


def steering_problem(n_u: int = 4, seed: int = 7, N: int = 200) -> ProblemSpec:
    """One leader pulls the followers towards the target Dirac at x = 2."""
    cost = CostSpec("w1_target", target=EmpiricalMeasure.dirac([2.0]), phi="quadratic", control_weight=0.05)
    return ProblemSpec(
        d=1, T=2.0, dt=0.05, sigma=0.05, M=N, m=1, N=N,
        vfield=FieldSpec(leader_kernels=[LinearKernel(-1.0)]), wfield=FieldSpec(),
        gain=GainSpec(), kappa=3.0, follower_init=GaussianInit([0.0], 0.3),
        leader_init=LeaderPoints([[0.0]]), cost=cost, seed=seed, n_u=n_u,
    )


LEADER_LAW = GaussianInit([0.0], 0.5)


def gamma_problem(seed: int = 3) -> ProblemSpec:
    """Steering with m leaders drawn i.i.d. from ``LEADER_LAW``; m is set by the study."""
    return steering_problem(n_u=1, seed=seed).replace(m=2, leader_init=LEADER_LAW)


def stability_problem(seed: int = 5) -> ProblemSpec:
    """Followers feel the leaders through a bounded radial kernel."""
    return ProblemSpec(
        d=1, T=1.0, dt=0.02, sigma=0.25, M=100, m=2, N=2000,
        vfield=FieldSpec(follower_kernels=[LinearKernel(-1.0)],
                         leader_kernels=[RadialKernel(-1.0, 1.0, 1.0)]),
        wfield=FieldSpec(follower_kernels=[LinearKernel(-0.5)]),
        gain=GainSpec(), kappa=1.0, follower_init=GaussianInit([0.0], 0.5),
        leader_init=LeaderPoints([[-1.0], [1.0]]), cost=CostSpec("zero"), seed=seed,
    )
