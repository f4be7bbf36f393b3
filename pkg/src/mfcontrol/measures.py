"""Weighted atomic probability measures and exact Wasserstein-1 distances.

Everything here works on finite atom clouds.  Moments use the origin as base
point.  Distances are exact: sorted (quantile) coupling in one dimension,
optimal assignment for equal-size uniform clouds, and a min-cost transport
linear program otherwise.  Clouds larger than ``max_atoms`` in d >= 2 are
rejected with :class:`SubsampleRequired`; use :func:`subsample` explicitly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.special import ndtr, ndtri

from .errors import NumericalError, ParameterError, SubsampleRequired

MAX_ATOMS = 512
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted sum of Dirac masses in R^d.

    ``atoms`` has shape (n, d) and ``weights`` shape (n,).  Both arrays are
    copied and made read-only on construction.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ParameterError(f"atoms must be a non-empty (n, d) array, got shape {atoms.shape}")
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != atoms.shape[0]:
            raise ParameterError("one weight per atom required")
        if not np.all(np.isfinite(atoms)):
            raise ParameterError("atoms must be finite")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ParameterError("weights must be finite and non-negative")
        if abs(math.fsum(weights) - 1.0) > _WEIGHT_TOL:
            raise ParameterError(f"weights sum to {math.fsum(weights)!r}, expected 1")
        atoms.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, atoms) -> "EmpiricalMeasure":
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ParameterError(f"atoms must be a non-empty (n, d) array, got shape {atoms.shape}")
        if not np.isfinite(atoms).all():
            raise ParameterError("atoms must be finite")
        # hot path in the solvers: equal weights need no further checks
        n = atoms.shape[0]
        weights = np.full(n, 1.0 / n)
        atoms.flags.writeable = False
        weights.flags.writeable = False
        self = object.__new__(cls)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        return self

    @classmethod
    def dirac(cls, point) -> "EmpiricalMeasure":
        return cls(np.atleast_1d(np.asarray(point, dtype=float))[None, :], np.ones(1))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        """Barycentre, summed with correctly rounded (order-free) arithmetic."""
        cached = self.__dict__.get("_mean")
        if cached is None:
            prod = self.atoms * self.weights[:, None]
            cached = np.array([math.fsum(prod[:, k]) for k in range(self.dim)])
            cached.flags.writeable = False
            # instances are immutable, so the barycentre can be memoised
            self.__dict__["_mean"] = cached
        return cached

    def canonical(self) -> "EmpiricalMeasure":
        """Same measure with atoms in lexicographic order."""
        order = np.lexsort(self.atoms.T[::-1])
        return EmpiricalMeasure(self.atoms[order], self.weights[order])

    def translate(self, shift) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.atoms + np.asarray(shift, dtype=float), self.weights)

    def to_csv(self, path) -> None:
        header = [f"x_{k + 1}" for k in range(self.dim)] + ["weight"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row, w in zip(self.atoms, self.weights):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1] != "weight" or any(
                h != f"x_{k + 1}" for k, h in enumerate(header[:-1])
            ):
                raise ParameterError(f"unexpected measure CSV header {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.array(rows, dtype=float)
        return cls(data[:, :-1], data[:, -1])


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    """Curve of measures sampled on an increasing time grid starting at 0."""

    times: np.ndarray
    measures: tuple

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        measures = tuple(self.measures)
        if len(measures) != times.shape[0] or times.shape[0] == 0:
            raise ParameterError("one measure per grid time required")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ParameterError("times must start at 0 and increase strictly")
        if len({mu.dim for mu in measures}) != 1:
            raise ParameterError("all measures of a flow must share the dimension")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "measures", measures)

    @classmethod
    def from_paths(cls, times, paths) -> "MeasureFlow":
        """Uniform-weight flow from an array of shape (n_times, n_atoms, d)."""
        paths = np.asarray(paths, dtype=float)
        return cls(times, tuple(EmpiricalMeasure.uniform(p) for p in paths))

    def __len__(self):
        return len(self.measures)

    def __getitem__(self, k) -> EmpiricalMeasure:
        return self.measures[k]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.measures[0].dim

    def at(self, t: float) -> EmpiricalMeasure:
        """Measure at the last grid time not after ``t`` (left-continuous lookup)."""
        k = int(np.searchsorted(self.times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
        return self.measures[max(k, 0)]

    def translate(self, shift) -> "MeasureFlow":
        return MeasureFlow(self.times, tuple(mu.translate(shift) for mu in self.measures))


def _check_measure(mu):
    if not isinstance(mu, EmpiricalMeasure):
        raise ParameterError(f"expected EmpiricalMeasure, got {type(mu).__name__}")


def moment(mu: EmpiricalMeasure, p: float) -> float:
    """p-th moment about the origin, sum_i w_i |x_i|^p."""
    _check_measure(mu)
    if not p >= 1:
        raise ParameterError(f"moment order must be >= 1, got {p!r}")
    norms = np.linalg.norm(mu.atoms, axis=1)
    return math.fsum(mu.weights * norms**p)


def subsample(mu: EmpiricalMeasure, n: int) -> EmpiricalMeasure:
    """Deterministic stratified subsample with ``n`` equally weighted atoms.

    Atoms are put in lexicographic order and picked at the mid-points of
    ``n`` equal strata of cumulative weight.
    """
    _check_measure(mu)
    if n < 1:
        raise ParameterError("subsample size must be positive")
    if n >= mu.size and mu.is_uniform():
        return mu
    mu = mu.canonical()
    cum = np.cumsum(mu.weights)
    cum[-1] = 1.0
    picks = np.searchsorted(cum, (np.arange(n) + 0.5) / n, side="left")
    return EmpiricalMeasure.uniform(mu.atoms[np.minimum(picks, mu.size - 1)])


def _w1_line(a, wa, b, wb) -> float:
    if a.shape[0] == b.shape[0] and np.all(wa == wa[0]) and np.all(wb == wb[0]):
        return math.fsum(np.abs(np.sort(a) - np.sort(b))) / a.shape[0]
    values = np.concatenate([a, b])
    mass = np.concatenate([wa, -wb])
    order = np.argsort(values, kind="stable")
    values = values[order]
    diff_cdf = np.cumsum(mass[order])[:-1]
    return math.fsum(np.abs(diff_cdf) * np.diff(values))


def _w1_transport(a, wa, b, wb) -> float:
    n, k = a.shape[0], b.shape[0]
    cost = cdist(a, b)
    rows = np.zeros((n, n * k))
    for i in range(n):
        rows[i, i * k:(i + 1) * k] = 1.0
    cols = np.zeros((k, n * k))
    for j in range(k):
        cols[j, j::k] = 1.0
    res = linprog(
        cost.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([wa, wb]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0))


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure, max_atoms: int = MAX_ATOMS) -> float:
    """Exact Wasserstein-1 distance between two atomic measures.

    One-dimensional problems are solved in O(n log n) whatever their size;
    in d >= 2 both supports must have at most ``max_atoms`` atoms.
    """
    _check_measure(mu)
    _check_measure(nu)
    if mu.dim != nu.dim:
        raise ParameterError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if mu.dim == 1:
        return _w1_line(mu.atoms[:, 0], mu.weights, nu.atoms[:, 0], nu.weights)
    if max(mu.size, nu.size) > max_atoms:
        raise SubsampleRequired(
            f"supports of size {mu.size} and {nu.size} exceed the cap {max_atoms}; "
            "call subsample() first"
        )
    if mu.size == nu.size and mu.is_uniform() and nu.is_uniform():
        cost = cdist(mu.atoms, nu.atoms)
        r, c = linear_sum_assignment(cost)
        return math.fsum(cost[r, c]) / mu.size
    return _w1_transport(mu.atoms, mu.weights, nu.atoms, nu.weights)


def wasserstein1_gaussian(mu: EmpiricalMeasure, mean: float, std: float) -> float:
    """Exact W1 between a one-dimensional atomic measure and N(mean, std^2).

    Integrates |F_mu - Phi| in closed form between consecutive atoms.
    """
    _check_measure(mu)
    if mu.dim != 1:
        raise ParameterError("Gaussian reference distance is one-dimensional")
    if std <= 0:
        raise ParameterError("std must be positive")
    order = np.argsort(mu.atoms[:, 0], kind="stable")
    x = mu.atoms[order, 0]
    c = np.cumsum(mu.weights[order])
    c[-1] = 1.0

    def prim(y):
        # antiderivative of the Gaussian CDF
        z = (y - mean) / std
        return (y - mean) * ndtr(z) + std * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    total = [float(prim(x[0]))]
    z_last = (x[-1] - mean) / std
    total.append(float((x[-1] - mean) * (ndtr(z_last) - 1.0) + std * math.exp(-0.5 * z_last**2) / math.sqrt(2 * math.pi)))
    lo, hi, level = x[:-1], x[1:], c[:-1]
    cross = np.clip(mean + std * ndtri(np.clip(level, 0.0, 1.0)), lo, hi)
    # below the crossing F_mu > Phi, above it Phi > F_mu
    left = level * (cross - lo) - (prim(cross) - prim(lo))
    right = (prim(hi) - prim(cross)) - level * (hi - cross)
    total.extend(np.abs(left).tolist())
    total.extend(np.abs(right).tolist())
    return math.fsum(total)


def push_forward(mu: EmpiricalMeasure, fn: Callable[[np.ndarray], Sequence[float]]) -> EmpiricalMeasure:
    """Image of ``mu`` under a point map; weights are carried over unchanged."""
    _check_measure(mu)
    mapped = np.array([np.atleast_1d(np.asarray(fn(x), dtype=float)) for x in mu.atoms])
    if not np.all(np.isfinite(mapped)):
        raise NumericalError("push-forward map produced a non-finite coordinate")
    return EmpiricalMeasure(mapped, mu.weights)
