"""Piecewise-constant leader controls with values in the box K = [-kappa, kappa]^d."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .fields import GainSpec


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Controls u_j(t) constant on each of ``n_u`` equal intervals of [0, T].

    ``values`` has shape (m, n_u, d).
    """

    values: np.ndarray
    T: float
    gain: GainSpec
    kappa: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise ParameterError(f"control values must have shape (m, n_u, d), got {v.shape}")
        if v.shape[1] < 1:
            raise ParameterError("at least one control interval is required")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) > self.kappa):
            raise ParameterError("control values must lie in [-kappa, kappa]^d")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, m, n_u, d, T, gain, kappa) -> "ControlSchedule":
        return cls(np.zeros((m, n_u, d)), T, gain, kappa)

    @classmethod
    def constant(cls, value, m, n_u, d, T, gain, kappa) -> "ControlSchedule":
        v = np.broadcast_to(np.asarray(value, dtype=float), (d,))
        return cls(np.broadcast_to(v, (m, n_u, d)).copy(), T, gain, kappa)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n_u(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def check_grid(self, n_steps: int) -> None:
        if n_steps % self.n_u:
            raise ParameterError(f"{self.n_u} control intervals do not divide {n_steps} steps")

    def at_step(self, step: int, n_steps: int) -> np.ndarray:
        """Controls (m, d) acting on the step [t_step, t_step+1)."""
        k = min(step * self.n_u // n_steps, self.n_u - 1)
        return self.values[:, k, :]

    def at_time(self, t: float) -> np.ndarray:
        k = int(np.floor(t * self.n_u / self.T + 1e-9))
        return self.values[:, min(max(k, 0), self.n_u - 1), :]

    def permuted(self, perm) -> "ControlSchedule":
        return ControlSchedule(self.values[np.asarray(perm)], self.T, self.gain, self.kappa)

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "T": self.T,
            "kappa": self.kappa,
            "gain": {"theta0": self.gain.theta0, "theta1": self.gain.theta1,
                     "delta": self.gain.delta, "lam": self.gain.lam},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlSchedule":
        return cls(np.asarray(data["values"], dtype=float), float(data["T"]),
                   GainSpec(**data["gain"]), float(data["kappa"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
