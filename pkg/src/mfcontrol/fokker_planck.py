"""One-dimensional finite-volume solver for the nonlinear Fokker-Planck equation

    d_t rho - sigma d_xx rho = - d_x (v rho)

on a truncated interval with no-flux walls.  Advection is donor-cell upwind
with cell-centred velocities, diffusion is the centred three-point stencil,
time stepping is forward Euler.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, StepSizeError, UnsupportedSpecError
from .fields import eval_field
from .measures import EmpiricalMeasure, MeasureFlow

MIN_CELLS = 16
CFL_SAFETY = 0.9


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell averages of a probability density on [x_min, x_max]."""

    x_min: float
    x_max: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape[0] < MIN_CELLS:
            raise ParameterError(f"need at least {MIN_CELLS} cells, got {v.shape[0]}")
        if not self.x_max > self.x_min:
            raise ParameterError("empty domain")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ParameterError("density must be finite and non-negative")
        mass = math.fsum(v) * (self.x_max - self.x_min) / v.shape[0]
        if abs(mass - 1.0) > 1e-10:
            raise ParameterError(f"density has mass {mass!r}, expected 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    def mass(self) -> float:
        return math.fsum(self.values) * self.dx

    @classmethod
    def from_law(cls, law, x_min: float, x_max: float, n_cells: int) -> "GridDensity":
        """Exact cell averages of a 1D Gaussian (mixture) law, renormalised to the domain."""
        edges = np.linspace(x_min, x_max, n_cells + 1)
        masses = np.asarray(law.cell_masses(edges), dtype=float)
        masses = masses / math.fsum(masses)
        return cls(x_min, x_max, masses / ((x_max - x_min) / n_cells))


@dataclass(frozen=True)
class FPGrid:
    """Discretisation parameters; ``dt=None`` picks the largest stable step dividing the outer step."""

    x_min: float
    x_max: float
    n_cells: int
    dt: Optional[float] = None


def stable_dt(dx: float, max_speed: float, sigma: float) -> float:
    """Largest step keeping every cell's outflow fraction at most CFL_SAFETY."""
    rate = max_speed / dx + 2.0 * sigma / dx**2
    return math.inf if rate == 0 else CFL_SAFETY / rate


def fp_step(rho: GridDensity, drift, sigma: float, dt: float) -> GridDensity:
    """Advance the density by one explicit step.

    ``drift`` holds one velocity per cell.  Raises :class:`StepSizeError`
    when ``dt`` exceeds :func:`stable_dt`; no sub-stepping is attempted.
    """
    drift = np.asarray(drift, dtype=float).reshape(-1)
    if drift.shape[0] != rho.n_cells:
        raise ParameterError("one drift value per cell required")
    if sigma < 0 or not dt > 0:
        raise ParameterError("sigma must be >= 0 and dt > 0")
    dx = rho.dx
    limit = stable_dt(dx, float(np.max(np.abs(drift))), sigma)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.3e} exceeds the stable step {limit:.3e}")
    r = rho.values
    flux = np.zeros(rho.n_cells + 1)
    # interior interfaces; walls keep zero flux
    flux[1:-1] = np.maximum(drift[:-1], 0.0) * r[:-1] + np.minimum(drift[1:], 0.0) * r[1:]
    flux[1:-1] -= sigma * (r[1:] - r[:-1]) / dx
    new = r - dt / dx * (flux[1:] - flux[:-1])
    # clears round-off negatives only; the stable step keeps the update monotone
    new = np.maximum(new, 0.0)
    return GridDensity(rho.x_min, rho.x_max, new)


def quantize(rho: GridDensity) -> EmpiricalMeasure:
    """Atoms at cell centres weighted by cell mass (empty cells dropped)."""
    w = rho.values * rho.dx
    keep = w > 0
    w = w[keep] / math.fsum(w[keep])
    return EmpiricalMeasure(rho.centers[keep][:, None], w)


@dataclass(frozen=True, eq=False)
class DensityFlow:
    times: np.ndarray
    densities: tuple

    def __getitem__(self, k) -> GridDensity:
        return self.densities[k]

    def __len__(self):
        return len(self.densities)

    def measure_flow(self) -> MeasureFlow:
        return MeasureFlow(self.times, tuple(quantize(r) for r in self.densities))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "cell_center", "density"])
            for t, rho in zip(self.times, self.densities):
                for c, v in zip(rho.centers, rho.values):
                    writer.writerow([repr(float(t)), repr(float(c)), repr(float(v))])


def _inner_steps(problem_dt: float, fp_dt: float) -> int:
    k = math.ceil(problem_dt / fp_dt - 1e-9)
    return max(k, 1)


def fp_solve(problem, nu_flow: Optional[MeasureFlow], grid: FPGrid) -> DensityFlow:
    """Solve the follower Fokker-Planck equation against a frozen leader flow.

    The drift is v(x, quantize(rho_t), nu_t), refreshed every step.  Results
    are recorded on the problem's time grid.
    """
    if problem.d != 1:
        raise UnsupportedSpecError("the Fokker-Planck solver is one-dimensional")
    rho = GridDensity.from_law(problem.follower_init, grid.x_min, grid.x_max, grid.n_cells)
    centers = rho.centers[:, None]
    if grid.dt is None:
        mu = quantize(rho)
        nu = nu_flow.at(0.0) if nu_flow is not None else None
        speed = float(np.max(np.abs(eval_field(problem.vfield, 0.0, centers, mu, nu))))
        # headroom for drift growth along the run
        inner = _inner_steps(problem.dt, stable_dt(rho.dx, 2.0 * speed + 1e-12, problem.sigma))
    else:
        inner = round(problem.dt / grid.dt)
        if inner < 1 or abs(inner * grid.dt - problem.dt) > 1e-9 * problem.dt:
            raise ParameterError("FP step must divide the problem step")
    h = problem.dt / inner
    times = problem.step_times()
    out = [rho]
    for n in range(problem.n_steps):
        for s in range(inner):
            t = n * problem.dt + s * h
            nu = nu_flow.at(t) if nu_flow is not None else None
            drift = eval_field(problem.vfield, t, centers, quantize(rho), nu)[:, 0]
            rho = fp_step(rho, drift, problem.sigma, h)
        out.append(rho)
    return DensityFlow(times, tuple(out))
