"""Command-line driver.

    mfcontrol simulate   --config run.toml [--seed S] [--out DIR] [--threads N]
    mfcontrol mckean     ...
    mfcontrol optimize   ... [--warm-start result.json]
    mfcontrol study chaos|gamma|stability|fpcheck ...

Exit codes: 0 success, 1 a threshold check failed, 2 configuration error,
3 numerical failure.  ``--threads`` changes wall time only; output files
are byte-identical for any thread count.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import config as cfgmod
from .control import OptProblem, OptResult, optimize
from .cost import chaos_cost_breakdown, finite_cost_breakdown
from .errors import ConfigError, ConvergenceError, NumericalError, ParameterError
from .mckean import solve_mckean
from .particles import simulate_finite, write_trajectories_csv
from .studies import _pmap, run_chaos_study, run_fp_crosscheck, run_gamma_study, run_stability_study

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
STUDIES = ("chaos", "gamma", "stability", "fpcheck")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


class _Run:
    def __init__(self, args, kind):
        self.kind = kind
        self.cfg = cfgmod.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            self.cfg["seed"] = args.seed
        self.seed = self.cfg["seed"]
        self.threads = max(1, args.threads)
        self.problem = cfgmod.build_problem(self.cfg)
        self.out = Path(args.out) if args.out else Path("runs") / f"{kind}_seed{self.seed}"
        self.out.mkdir(parents=True, exist_ok=True)
        _dump(self.path("config.json"), self.cfg)

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.kind}_seed{self.seed}_{suffix}"


def cmd_simulate(args) -> int:
    run = _Run(args, "simulate")
    p = run.problem
    controls = cfgmod.build_controls(run.cfg, p)
    noise = p.noise_plan()
    samples = int(run.cfg["simulate"]["samples"])
    trajs = _pmap(lambda s: simulate_finite(p, controls, noise, s), range(samples), run.threads)
    write_trajectories_csv(run.path("trajectories.csv"), trajs)
    breakdown = finite_cost_breakdown(trajs, controls, p.cost)
    _dump(run.path("summary.json"), {"kind": "simulate", "seed": run.seed, "samples": samples,
                                     "cost": breakdown.to_dict()})
    return EXIT_OK


def cmd_mckean(args) -> int:
    run = _Run(args, "mckean")
    p = run.problem
    controls = cfgmod.build_controls(run.cfg, p)
    mk = run.cfg["mckean"]
    try:
        sol = solve_mckean(p, controls, N=mk["N"], tol=float(mk["tol"]), max_iter=int(mk["max_iter"]))
    except ConvergenceError as exc:
        _dump(run.path("solution.json"), {"converged": False, "residual_history": list(exc.history),
                                          "message": str(exc)})
        raise
    rows = [["sample_id", "t", "kind", "index"] + [f"x_{k + 1}" for k in range(p.d)]]
    for k, t in enumerate(sol.times):
        for i, x in enumerate(sol.paths[k]):
            rows.append([0, repr(float(t)), "F", i] + [repr(float(v)) for v in x])
        if sol.leaders is not None:
            for j, y in enumerate(sol.leaders[k]):
                rows.append([0, repr(float(t)), "L", j] + [repr(float(v)) for v in y])
    _write_rows(run.path("law.csv"), rows)
    _dump(run.path("solution.json"), {
        "converged": True, "iterations": sol.iterations, "residual": sol.residual,
        "residual_history": list(sol.history), "N": len(sol.law_flow[0].weights),
        "cost": chaos_cost_breakdown(sol, controls, p.cost).to_dict(),
    })
    return EXIT_OK


def _opt_problem(run) -> OptProblem:
    o = run.cfg["optimize"]
    mk = run.cfg["mckean"]
    p = run.problem
    if mk["N"] is not None:
        p = p.replace(N=int(mk["N"]))
    return OptProblem(
        p, objective=o["objective"], samples=int(o["samples"]), iterations=int(o["iterations"]),
        starts=int(o["starts"]), budget=o["budget"], method=o["method"],
        optimize_gain=bool(o["optimize_gain"]), c0=float(o["c0"]), first_step=float(o["first_step"]),
        tol=float(mk["tol"]), max_iter=int(mk["max_iter"]), threads=run.threads,
    )


def cmd_optimize(args) -> int:
    run = _Run(args, "optimize")
    initial = None
    if args.warm_start:
        try:
            initial = OptResult.from_json(Path(args.warm_start).read_text()).controls
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load warm start {args.warm_start}: {exc}") from exc
    res = optimize(_opt_problem(run), initial=initial)
    run.path("result.json").write_text(res.to_json(indent=2) + "\n")
    rows = [["start", "iteration", "cost", "best", "step"]]
    rows += [[e["start"], e["iteration"], repr(e["cost"]), repr(e["best"]), repr(e["step"])] for e in res.trace]
    _write_rows(run.path("trace.csv"), rows)
    ok = res.cost_value <= res.baseline_cost + 2.0 * res.baseline_stderr
    _dump(run.path("summary.json"), {
        "kind": "optimize", "seed": run.seed, "cost_value": res.cost_value, "stderr": res.stderr,
        "baseline_cost": res.baseline_cost, "baseline_stderr": res.baseline_stderr,
        "budget_exhausted": res.budget_exhausted, "checks": {"not_worse_than_baseline": ok}, "passed": ok,
    })
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_study(args) -> int:
    run = _Run(args, args.study)
    p = run.problem
    s = run.cfg["study"][args.study]
    mk = run.cfg["mckean"]
    common = {"tol": float(mk["tol"]), "max_iter": int(mk["max_iter"]), "threads": run.threads}
    if args.study == "chaos":
        report = run_chaos_study(p, s["M_list"], int(s["replicates"]), batch=int(s["batch"]),
                                 N_ref=int(s["N_ref"]), controls=cfgmod.build_controls(run.cfg, p),
                                 slope_max=float(s["slope_max"]), **common)
    elif args.study == "gamma":
        if s["leader_law"] is None:
            raise ConfigError("study.gamma.leader_law is required")
        law = cfgmod.gaussian_from(s["leader_law"], "study.gamma.leader_law")
        opt = _opt_problem(run)
        kwargs = {k: getattr(opt, k) for k in ("objective", "samples", "iterations", "starts", "budget",
                                               "method", "optimize_gain", "c0", "first_step", "tol", "max_iter")}
        report = run_gamma_study(opt.problem, s["m_list"], int(s["replicates"]), law, opt_kwargs=kwargs,
                                 stderr_factor=float(s["stderr_factor"]), threads=run.threads)
    elif args.study == "stability":
        report = run_stability_study(p, s["scales"], N=s["N"], controls=cfgmod.build_controls(run.cfg, p),
                                     spread_max=float(s["spread_max"]), **common)
    else:
        ref = s["reference"]
        if ref is not None:
            ref = (float(ref["mean"]), float(ref["std"]))
        report = run_fp_crosscheck(p, [tuple(lv) for lv in s["levels"]], float(s["x_min"]), float(s["x_max"]),
                                   reference=ref, w1_max=float(s["w1_max"]), **common)
    report.config = run.cfg
    run.path("summary.json").write_text(report.to_json() + "\n")
    _write_rows(run.path("points.csv"), report.csv_rows())
    print(f"{args.study}: {'PASS' if report.passed else 'FAIL'} {report.checks} ({report.runtime:.1f}s)")
    return EXIT_OK if report.passed else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfcontrol", description="Leader-follower mean-field control experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (wall time only)")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="finite-particle simulation").set_defaults(func=cmd_simulate)
    sub.add_parser("mckean", parents=[common], help="McKean-Vlasov solve").set_defaults(func=cmd_mckean)
    opt = sub.add_parser("optimize", parents=[common], help="control optimisation")
    opt.add_argument("--warm-start", default=None, help="previous optimize result JSON")
    opt.set_defaults(func=cmd_optimize)
    study = sub.add_parser("study", parents=[common], help="convergence studies")
    study.add_argument("study", choices=STUDIES)
    study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        code = args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"done in {time.perf_counter() - started:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
