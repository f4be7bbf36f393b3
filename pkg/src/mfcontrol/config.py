"""Experiment configuration: TOML files with a versioned, closed schema.

Every key is known in advance.  Unknown keys, wrong types and missing
required values raise :class:`ConfigError`.  :func:`resolve` returns the
configuration with every default filled in, which is what runs echo back.

Layout::

    schema_version = 1
    seed = 7

    [problem]            d, T, dt, sigma, M, m, N, kappa, n_u, stride, common_noise
    [problem.follower_init]   kind = "gaussian" (mean, std | cov) or "mixture"
    [problem.leader_init]     kind = "points" (positions) or "gaussian"
    [problem.vfield] / [problem.wfield]
                         follower_kernels, leader_kernels: lists of
                         {kind = "linear"|"radial"|"constant", ...}; external = {matrix, offset}
    [problem.gain]       theta0, theta1, delta, lam
    [cost]               lagrangian, target = {atoms, weights}, phi, control_weight
    [controls]           constant (scalar or d-vector) or values (m x n_u x d)
    [simulate]           samples
    [mckean]             N, tol, max_iter
    [optimize]           objective, samples, iterations, starts, budget, method, ...
    [study.chaos] [study.gamma] [study.stability] [study.fpcheck]
"""
from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .controls import ControlSchedule
from .cost import CostSpec
from .errors import ConfigError, MFControlError
from .fields import AffineField, ConstantKernel, FieldSpec, GainSpec, LinearKernel, RadialKernel
from .measures import EmpiricalMeasure
from .problem import GaussianInit, LeaderPoints, MixtureInit, ProblemSpec

SCHEMA_VERSION = 1
REQUIRED = object()

_FIELD = {"follower_kernels": [], "leader_kernels": [], "external": None}

SCHEMA = {
    "schema_version": REQUIRED,
    "seed": 0,
    "problem": {
        "d": REQUIRED, "T": REQUIRED, "dt": REQUIRED, "sigma": REQUIRED,
        "M": REQUIRED, "m": REQUIRED, "N": REQUIRED, "kappa": 1.0,
        "n_u": 1, "stride": 1, "common_noise": False,
        "follower_init": REQUIRED, "leader_init": None,
        "vfield": dict(_FIELD), "wfield": dict(_FIELD),
        "gain": {"theta0": 1.0, "theta1": 0.0, "delta": 1.0, "lam": 1.0},
    },
    "cost": {"lagrangian": "zero", "target": None, "phi": "quadratic", "control_weight": 1.0},
    "controls": {"constant": 0.0, "values": None},
    "simulate": {"samples": 1},
    "mckean": {"N": None, "tol": 1e-3, "max_iter": 50},
    "optimize": {
        "objective": "mckean", "samples": 2, "iterations": 40, "starts": 4, "budget": None,
        "method": "spsa", "optimize_gain": False, "c0": 0.1, "first_step": 0.1,
    },
    "study": {
        "chaos": {"M_list": [16, 64, 256, 1024], "replicates": 10, "batch": 32, "N_ref": 65536,
                  "slope_max": -0.35},
        "gamma": {"m_list": [2, 4, 8, 16], "replicates": 4, "leader_law": None, "stderr_factor": 2.0},
        "stability": {"scales": [0.1, 0.2, 0.4], "N": None, "spread_max": 1.5},
        "fpcheck": {"levels": [[2500, 100], [10000, 400]], "x_min": -4.0, "x_max": 4.0,
                    "reference": None, "w1_max": 0.05},
    },
}

# tables whose contents are free-form descriptors validated when built
_OPAQUE = {"follower_init", "leader_init", "target", "external", "leader_law", "reference"}


def _merge(schema, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a table")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path or 'top level'}")
    out = {}
    for key, default in schema.items():
        where = f"{path}.{key}" if path else key
        if key in data:
            value = data[key]
            if isinstance(default, dict) and key not in _OPAQUE:
                value = _merge(default, value, where)
            out[key] = copy.deepcopy(value)
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {where}")
        elif isinstance(default, dict) and key not in _OPAQUE:
            out[key] = _merge(default, {}, where)
        else:
            out[key] = copy.deepcopy(default)
    return out


def resolve(data: dict) -> dict:
    """Validate a raw config mapping and fill in every default."""
    cfg = _merge(SCHEMA, data, "")
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}; expected {SCHEMA_VERSION}")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return resolve(raw)


def loads(text: str) -> dict:
    try:
        return resolve(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc


def _table(desc, allowed, where):
    if not isinstance(desc, dict):
        raise ConfigError(f"{where} must be a table")
    extra = sorted(set(desc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in {where}")
    return desc


def _gaussian(desc, where):
    _table(desc, {"kind", "mean", "std", "cov"}, where)
    try:
        return GaussianInit(desc["mean"], desc.get("std"), desc.get("cov"))
    except KeyError as exc:
        raise ConfigError(f"{where} needs a mean") from exc


def _init_law(desc, where):
    kind = desc.get("kind") if isinstance(desc, dict) else None
    if kind == "gaussian":
        return _gaussian(desc, where)
    if kind == "mixture":
        _table(desc, {"kind", "components", "weights"}, where)
        comps = tuple(_gaussian(dict(c, kind="gaussian"), f"{where}.components") for c in desc.get("components", []))
        return MixtureInit(comps, tuple(desc.get("weights", [])))
    raise ConfigError(f"{where}.kind must be 'gaussian' or 'mixture'")


def _leader_init(desc, m, where):
    if desc is None:
        if m:
            raise ConfigError(f"{where} is required when m > 0")
        return LeaderPoints(())
    kind = desc.get("kind") if isinstance(desc, dict) else None
    if kind == "points":
        _table(desc, {"kind", "positions"}, where)
        return LeaderPoints(desc.get("positions", []))
    if kind == "gaussian":
        return _gaussian(desc, where)
    raise ConfigError(f"{where}.kind must be 'points' or 'gaussian'")


_KERNELS = {
    "linear": (LinearKernel, {"matrix"}),
    "radial": (RadialKernel, {"amplitude", "scale", "beta"}),
    "constant": (ConstantKernel, {"value"}),
}


def _kernel(desc, where):
    if not isinstance(desc, dict) or desc.get("kind") not in _KERNELS:
        raise ConfigError(f"{where} needs kind in {sorted(_KERNELS)}")
    cls, keys = _KERNELS[desc["kind"]]
    _table(desc, keys | {"kind"}, where)
    args = {k: (tuple(v) if isinstance(v, list) and k == "value" else v) for k, v in desc.items() if k != "kind"}
    return cls(**args)


def _field(desc, where):
    ext = desc["external"]
    if ext is not None:
        _table(ext, {"matrix", "offset"}, f"{where}.external")
        ext = AffineField(ext.get("matrix", 0.0), tuple(ext["offset"]) if ext.get("offset") is not None else None)
    return FieldSpec(
        tuple(_kernel(k, f"{where}.follower_kernels") for k in desc["follower_kernels"]),
        tuple(_kernel(k, f"{where}.leader_kernels") for k in desc["leader_kernels"]),
        ext,
    )


def _cost(desc):
    target = desc["target"]
    if target is not None:
        _table(target, {"atoms", "weights"}, "cost.target")
        atoms = np.asarray(target["atoms"], dtype=float)
        weights = target.get("weights")
        target = EmpiricalMeasure.uniform(atoms) if weights is None else EmpiricalMeasure(atoms, weights)
    return CostSpec(desc["lagrangian"], target, desc["phi"], float(desc["control_weight"]))


def build_problem(cfg: dict, seed=None) -> ProblemSpec:
    """ProblemSpec from a resolved config; ``seed`` overrides the file's seed."""
    p = cfg["problem"]
    try:
        return ProblemSpec(
            d=int(p["d"]), T=float(p["T"]), dt=float(p["dt"]), sigma=float(p["sigma"]),
            M=int(p["M"]), m=int(p["m"]), N=int(p["N"]),
            vfield=_field(p["vfield"], "problem.vfield"), wfield=_field(p["wfield"], "problem.wfield"),
            gain=GainSpec(**p["gain"]), kappa=float(p["kappa"]),
            follower_init=_init_law(p["follower_init"], "problem.follower_init"),
            leader_init=_leader_init(p["leader_init"], int(p["m"]), "problem.leader_init"),
            cost=_cost(cfg["cost"]), seed=int(cfg["seed"] if seed is None else seed),
            n_u=int(p["n_u"]), stride=int(p["stride"]), common_noise=bool(p["common_noise"]),
        )
    except ConfigError:
        raise
    except (MFControlError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc


def build_controls(cfg: dict, problem: ProblemSpec) -> ControlSchedule:
    c = cfg["controls"]
    try:
        if c["values"] is not None:
            return ControlSchedule(np.asarray(c["values"], dtype=float), problem.T, problem.gain, problem.kappa)
        return ControlSchedule.constant(c["constant"], problem.m, problem.n_u, problem.d,
                                        problem.T, problem.gain, problem.kappa)
    except (MFControlError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid controls: {exc}") from exc


def gaussian_from(desc, where) -> GaussianInit:
    return _gaussian(dict(desc, kind="gaussian"), where)
