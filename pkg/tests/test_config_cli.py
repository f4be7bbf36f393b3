import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mfcontrol import config as cfgmod
from mfcontrol.benchmarks import chaos_problem, ou_problem, stability_problem, steering_problem
from mfcontrol.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_THRESHOLD, main
from mfcontrol.controls import ControlSchedule
from mfcontrol.errors import ConfigError
from mfcontrol.particles import simulate_finite

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
QUICK = CONFIGS / "quick" / "small.toml"

MINIMAL = """
schema_version = 1
[problem]
d = 1
T = 1.0
dt = 0.1
sigma = 0.1
M = 4
m = 0
N = 8
[problem.follower_init]
kind = "gaussian"
mean = [0.0]
std = 1.0
"""


# ---- schema


def test_defaults_are_filled():
    cfg = cfgmod.loads(MINIMAL)
    assert cfg["seed"] == 0 and cfg["mckean"]["tol"] == 1e-3 and cfg["study"]["chaos"]["N_ref"] == 65536


@pytest.mark.parametrize("text, match", [
    (MINIMAL + "typo = 3\n", "unknown key"),
    (MINIMAL.replace("sigma = 0.1", "sigma = 0.1\nsigmma = 2"), "unknown key"),
    (MINIMAL.replace("schema_version = 1", "schema_version = 2"), "schema_version"),
    (MINIMAL.replace("schema_version = 1", ""), "schema_version"),
    (MINIMAL.replace("T = 1.0", ""), "problem.T"),
    (MINIMAL + "[problem.vfield]\nfollower_kernels = [{ kind = \"coulomb\" }]\n", "kind"),
    ("not toml = = 1", "malformed"),
])
def test_schema_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        cfgmod.build_problem(cfgmod.loads(text))


def test_inconsistent_problem_is_config_error():
    with pytest.raises(ConfigError):
        cfgmod.build_problem(cfgmod.loads(MINIMAL.replace("dt = 0.1", "dt = 0.3")))


@pytest.mark.parametrize("name, factory", [
    ("chaos.toml", chaos_problem),
    ("stability.toml", stability_problem),
    ("steering.toml", steering_problem),
])
def test_shipped_configs_match_benchmarks(name, factory):
    from_file = cfgmod.build_problem(cfgmod.load(CONFIGS / name)).replace(M=12)
    ref = factory().replace(M=12)
    c = ControlSchedule.constant(0.3, ref.m, ref.n_u, ref.d, ref.T, ref.gain, ref.kappa)
    a = simulate_finite(from_file, c, from_file.noise_plan())
    b = simulate_finite(ref, c, ref.noise_plan())
    assert np.array_equal(a.followers, b.followers) and np.array_equal(a.leaders, b.leaders)


def test_ou_config_matches_benchmark():
    p = cfgmod.build_problem(cfgmod.load(CONFIGS / "ou.toml"))
    a = simulate_finite(p.replace(M=10), ControlSchedule.zeros(0, 1, 1, p.T, p.gain, p.kappa), p.noise_plan())
    q = ou_problem()
    b = simulate_finite(q.replace(M=10), ControlSchedule.zeros(0, 1, 1, q.T, q.gain, q.kappa), q.noise_plan())
    assert np.array_equal(a.followers, b.followers)


# ---- exit codes


def write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_exit_config_error(tmp_path, capsys):
    assert main(["simulate", "--config", write(tmp_path, MINIMAL + "oops = 1\n"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "unknown key" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_exit_numerical_failure(tmp_path):
    text = MINIMAL.replace("m = 0", "m = 1") + (
        "[problem.leader_init]\nkind = \"points\"\npositions = [[0.0]]\n"
        "[problem.vfield]\nfollower_kernels = [{ kind = \"linear\", matrix = -1.0 }]\n"
        "[mckean]\ntol = 1e-15\nmax_iter = 2\n"
    )
    out = tmp_path / "o"
    assert main(["mckean", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_NUMERICAL
    sidecar = json.loads((out / "mckean_seed0_solution.json").read_text())
    assert sidecar["converged"] is False and len(sidecar["residual_history"]) == 1


def test_exit_threshold_failure(tmp_path):
    text = QUICK.read_text().replace("w1_max = 0.1", "w1_max = 1e-6")
    assert main(["study", "fpcheck", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_THRESHOLD


def test_seed_override_names_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(QUICK), "--seed", "99", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "simulate_seed99_config.json").read_text())["seed"] == 99
    assert main(["simulate", "--config", str(QUICK), "--seed", "-1", "--out", str(out)]) == EXIT_CONFIG


def test_warm_start_round_trip(tmp_path):
    first = tmp_path / "a"
    assert main(["optimize", "--config", str(QUICK), "--out", str(first)]) == EXIT_OK
    res = json.loads((first / "optimize_seed21_result.json").read_text())
    second = tmp_path / "b"
    assert main(["optimize", "--config", str(QUICK), "--out", str(second),
                 "--warm-start", str(first / "optimize_seed21_result.json")]) == EXIT_OK
    again = json.loads((second / "optimize_seed21_result.json").read_text())
    assert again["cost_value"] <= res["cost_value"]
    bad = write(tmp_path, "{}", "bad.json")
    assert main(["optimize", "--config", str(QUICK), "--out", str(second), "--warm-start", bad]) == EXIT_CONFIG


# ---- determinism


VERBS = [["simulate"], ["mckean"], ["optimize"],
         ["study", "chaos"], ["study", "gamma"], ["study", "stability"], ["study", "fpcheck"]]


def snapshot(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("verb", VERBS, ids=lambda v: "-".join(v))
def test_outputs_byte_identical_across_threads(tmp_path, verb):
    runs = {}
    for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / tag
        code = main(verb + ["--config", str(QUICK), "--out", str(out), "--threads", str(threads)])
        assert code == EXIT_OK
        runs[tag] = snapshot(out)
    assert runs["a"] == runs["b"] == runs["c"]
    assert len(runs["a"]) >= 3


def test_module_entry_point(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "mfcontrol", "simulate", "--config", str(QUICK), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == ""
    assert (out / "simulate_seed21_trajectories.csv").exists()
