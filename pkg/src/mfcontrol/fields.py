"""Interaction velocity fields and the bounded Lipschitz feedback gain.

A field has the form

    v(x, mu, nu) = sum_k (K_k * mu)(x) + sum_l (H_l * nu)(x) + f(x)

with every kernel drawn from a closed family whose Lipschitz and growth
constants are known in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError, ParameterError, UnsupportedSpecError
from .measures import EmpiricalMeasure, moment

_CHUNK = 1 << 22


def _as_matrix(value, d: int) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(d)
    if a.shape != (d, d):
        raise ParameterError(f"matrix of shape {a.shape} does not match dimension {d}")
    return a


def _opnorm(value) -> float:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return abs(float(a))
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class LinearKernel:
    """Kernel (x, y) -> A (x - y); convolution gives A (x - mean(mu))."""

    matrix: object = -1.0

    def apply(self, x, mu):
        d = x.shape[1]
        return (x - mu.mean()) @ _as_matrix(self.matrix, d).T

    def lipschitz(self):
        # one share for the state, one for the measure through its mean
        return 2.0 * _opnorm(self.matrix)

    def growth(self):
        return _opnorm(self.matrix)


@dataclass(frozen=True)
class RadialKernel:
    """Kernel (x, y) -> a (x - y) / (1 + |x - y|^2 / s^2)^beta.

    The map z -> a z / (1 + |z|^2/s^2)^beta is |a|-Lipschitz for beta in
    [1/2, 2], which is the admissible range.
    """

    amplitude: float = 1.0
    scale: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not 0.5 <= self.beta <= 2.0:
            raise UnsupportedSpecError(f"radial kernel exponent must lie in [0.5, 2], got {self.beta}")
        if self.scale <= 0:
            raise ParameterError("radial kernel scale must be positive")

    def apply(self, x, mu):
        mu = mu.canonical()
        y, w = mu.atoms, mu.weights
        out = np.empty_like(x)
        step = max(1, _CHUNK // max(1, y.shape[0] * x.shape[1]))
        for start in range(0, x.shape[0], step):
            diff = x[start:start + step, None, :] - y[None, :, :]
            r2 = np.einsum("ijk,ijk->ij", diff, diff) / self.scale**2
            coef = self.amplitude * w[None, :] / (1.0 + r2) ** self.beta
            out[start:start + step] = np.einsum("ij,ijk->ik", coef, diff)
        return out

    def lipschitz(self):
        return 2.0 * abs(self.amplitude)

    def growth(self):
        return abs(self.amplitude)


@dataclass(frozen=True)
class ConstantKernel:
    """Kernel returning a fixed vector regardless of its arguments."""

    value: tuple = (0.0,)

    def apply(self, x, mu):
        c = np.asarray(self.value, dtype=float)
        return np.broadcast_to(c, x.shape).copy()

    def lipschitz(self):
        return 0.0

    def growth(self):
        return float(np.linalg.norm(np.asarray(self.value, dtype=float)))


@dataclass(frozen=True)
class AffineField:
    """External velocity x -> B x + c (autonomous)."""

    matrix: object = 0.0
    offset: Optional[tuple] = None

    def apply(self, t, x):
        d = x.shape[1]
        out = x @ _as_matrix(self.matrix, d).T
        if self.offset is not None:
            out = out + np.asarray(self.offset, dtype=float)
        return out

    def lipschitz(self):
        return _opnorm(self.matrix)

    def growth(self):
        off = 0.0 if self.offset is None else float(np.linalg.norm(np.asarray(self.offset, dtype=float)))
        return _opnorm(self.matrix) + off


KERNEL_TYPES = (LinearKernel, RadialKernel, ConstantKernel)


@dataclass(frozen=True)
class FieldSpec:
    """Velocity field acting on a point given the follower and leader laws.

    ``follower_kernels`` are convolved with the follower law mu and
    ``leader_kernels`` with the leader law nu.
    """

    follower_kernels: tuple = ()
    leader_kernels: tuple = ()
    external: Optional[AffineField] = None

    def __post_init__(self):
        object.__setattr__(self, "follower_kernels", tuple(self.follower_kernels))
        object.__setattr__(self, "leader_kernels", tuple(self.leader_kernels))

    @classmethod
    def zero(cls) -> "FieldSpec":
        return cls()

    def depends_on_followers(self) -> bool:
        return any(not isinstance(k, ConstantKernel) for k in self.follower_kernels)

    def depends_on_leaders(self) -> bool:
        return any(not isinstance(k, ConstantKernel) for k in self.leader_kernels)


def eval_field(spec: FieldSpec, t: float, x, mu: EmpiricalMeasure, nu: Optional[EmpiricalMeasure]):
    """Evaluate the field at one point (shape (d,)) or a batch (shape (k, d)).

    ``nu`` may be None when there are no leaders; leader kernels then
    contribute nothing.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    d = xs.shape[1]
    if mu.dim != d or (nu is not None and nu.dim != d):
        raise ParameterError("point and measure dimensions disagree")
    out = np.zeros_like(xs)
    for kernel in spec.follower_kernels:
        out += kernel.apply(xs, mu)
    if nu is not None:
        for kernel in spec.leader_kernels:
            out += kernel.apply(xs, nu)
    if spec.external is not None:
        out += spec.external.apply(t, xs)
    if not np.all(np.isfinite(out)):
        raise NumericalError("field evaluation produced non-finite values")
    return out[0] if single else out


def _check_family(spec: FieldSpec):
    for kernel in spec.follower_kernels + spec.leader_kernels:
        if not isinstance(kernel, KERNEL_TYPES):
            raise UnsupportedSpecError(f"kernel {kernel!r} is outside the supported family")
    if spec.external is not None and not isinstance(spec.external, AffineField):
        raise UnsupportedSpecError(f"external field {spec.external!r} is not affine")


def lipschitz_constant(spec: FieldSpec) -> float:
    """Constant L with |v1 - v2| <= L (|dx| + W1(dmu) + W1(dnu))."""
    _check_family(spec)
    total = sum(k.lipschitz() for k in spec.follower_kernels)
    total += sum(k.lipschitz() for k in spec.leader_kernels)
    if spec.external is not None:
        total += spec.external.lipschitz()
    return float(total)


def growth_constant(spec: FieldSpec) -> float:
    """Constant M with |v(x, mu, nu)| <= M (1 + |x| + m1(mu) + m1(nu))."""
    _check_family(spec)
    total = sum(k.growth() for k in spec.follower_kernels + spec.leader_kernels)
    if spec.external is not None:
        total += spec.external.growth()
    return float(total)


@dataclass(frozen=True)
class GainSpec:
    """Feedback gain g(mu) = clip(theta0 + theta1 tanh(m1(mu)), -delta, delta).

    ``lam`` caps |theta1|, which is exactly the W1-Lipschitz constant of g.
    """

    theta0: float = 1.0
    theta1: float = 0.0
    delta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("gain bound delta must be positive")
        if not self.lam >= 0:
            raise ParameterError("gain Lipschitz bound must be non-negative")
        if abs(self.theta1) > self.lam + 1e-15:
            raise ParameterError(f"|theta1| = {abs(self.theta1)} exceeds the Lipschitz bound {self.lam}")

    @property
    def lipschitz(self) -> float:
        return abs(self.theta1)

    def with_params(self, theta0: float, theta1: float) -> "GainSpec":
        return GainSpec(float(theta0), float(theta1), self.delta, self.lam)


def eval_gain(g: GainSpec, mu: EmpiricalMeasure) -> float:
    raw = g.theta0 if g.theta1 == 0 else g.theta0 + g.theta1 * math.tanh(moment(mu, 1))
    return float(min(max(raw, -g.delta), g.delta))
