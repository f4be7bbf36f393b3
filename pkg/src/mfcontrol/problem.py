"""Problem instances: dynamics, initial data, discretisation and noise level."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from .cost import CostSpec
from .errors import ParameterError
from .fields import FieldSpec, GainSpec
from .noise import NoisePlan, leader_normals


@dataclass(frozen=True)
class GaussianInit:
    """N(mean, cov); ``std`` may be given instead of ``cov`` for isotropic laws."""

    mean: tuple
    std: Optional[float] = None
    cov: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in np.atleast_1d(self.mean)))
        if (self.std is None) == (self.cov is None):
            raise ParameterError("give exactly one of std or cov")
        if self.std is not None and not self.std > 0:
            raise ParameterError("std must be positive")
        if self.cov is not None:
            c = np.asarray(self.cov, dtype=float)
            if c.shape != (self.dim, self.dim):
                raise ParameterError("covariance shape does not match the mean")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError as exc:
                raise ParameterError("covariance must be positive definite") from exc
            object.__setattr__(self, "cov", tuple(map(tuple, c.tolist())))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def chol(self) -> np.ndarray:
        if self.std is not None:
            return self.std * np.eye(self.dim)
        return np.linalg.cholesky(np.asarray(self.cov, dtype=float))

    def sample(self, normals) -> np.ndarray:
        z = np.asarray(normals, dtype=float)[:, : self.dim]
        return np.asarray(self.mean) + z @ self.chol().T

    def variance_1d(self) -> float:
        return float(self.chol()[0, 0] ** 2)

    def cell_masses(self, edges) -> np.ndarray:
        if self.dim != 1:
            raise ParameterError("cell masses are only defined in one dimension")
        s = math.sqrt(self.variance_1d())
        return np.diff(ndtr((np.asarray(edges) - self.mean[0]) / s))


@dataclass(frozen=True)
class MixtureInit:
    """Finite Gaussian mixture; the component is picked from the extra normal."""

    components: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ParameterError("mixture weights must be non-negative, one per component, summing to 1")
        if len({c.dim for c in self.components}) != 1:
            raise ParameterError("mixture components must share the dimension")
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def sample(self, normals) -> np.ndarray:
        normals = np.asarray(normals, dtype=float)
        u = ndtr(normals[:, self.dim])
        cum = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.components) - 1)
        out = np.empty((normals.shape[0], self.dim))
        for k, comp in enumerate(self.components):
            sel = idx == k
            out[sel] = comp.sample(normals[sel])
        return out

    def cell_masses(self, edges) -> np.ndarray:
        return sum(w * c.cell_masses(edges) for w, c in zip(self.weights, self.components))


@dataclass(frozen=True)
class LeaderPoints:
    """Explicit leader starting positions, shape (m, d)."""

    positions: tuple

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        object.__setattr__(self, "positions", tuple(map(tuple, p.tolist())))


InitLaw = Union[GaussianInit, MixtureInit]


@dataclass(frozen=True)
class ProblemSpec:
    """Complete instance of the two-population control problem."""

    d: int
    T: float
    dt: float
    sigma: float
    M: int
    m: int
    N: int
    vfield: FieldSpec
    wfield: FieldSpec
    gain: GainSpec
    kappa: float
    follower_init: InitLaw
    leader_init: Union[LeaderPoints, GaussianInit]
    cost: CostSpec
    seed: int = 0
    n_u: int = 1
    stride: int = 1
    common_noise: bool = False
    leader_draw: int = 0

    def __post_init__(self):
        if self.d < 1 or self.M < 1 or self.m < 0 or self.N < 1:
            raise ParameterError("dimension and population sizes must be positive (m may be 0)")
        if not self.T > 0 or not self.dt > 0:
            raise ParameterError("horizon and time step must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ParameterError(f"dt={self.dt} does not divide T={self.T}")
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if self.n_u < 1 or n % self.n_u:
            raise ParameterError(f"n_u={self.n_u} must divide the step count {n}")
        if self.stride < 1 or n % self.stride:
            raise ParameterError(f"stride={self.stride} must divide the step count {n}")
        if self.follower_init.dim != self.d:
            raise ParameterError("follower initial law has the wrong dimension")
        if isinstance(self.leader_init, LeaderPoints):
            pts = np.asarray(self.leader_init.positions, dtype=float).reshape(-1, self.d) if self.m else None
            if self.m and pts.shape != (self.m, self.d):
                raise ParameterError(f"expected {self.m} leader positions in dimension {self.d}")
        elif self.leader_init.dim != self.d:
            raise ParameterError("leader initial law has the wrong dimension")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    def step_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def noise_plan(self, run_id: int = 0) -> NoisePlan:
        return NoisePlan(self.seed, run_id, self.common_noise)

    def initial_leaders(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, self.d))
        if isinstance(self.leader_init, LeaderPoints):
            return np.asarray(self.leader_init.positions, dtype=float).reshape(self.m, self.d)
        return self.leader_init.sample(leader_normals(self.seed, self.leader_draw, self.m, self.d))
