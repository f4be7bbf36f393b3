"""
Propagation of chaos
====================

Couple each particle to an independent McKean copy driven by the same
noise and watch the gap shrink like M^(-1/2).  Sizes are kept small so the
script runs in seconds; configs/chaos.toml holds the full study.
"""

from mfcontrol import run_chaos_study
from mfcontrol.benchmarks import chaos_problem

report = run_chaos_study(chaos_problem(), [16, 64, 256], replicates=4, batch=8, N_ref=1 << 14)
for point in report.points:
    print(f"M={point['M']:5d}  coupling error {point['error_mean']:.4f} +- {point['error_stderr']:.4f}"
          f"  cost gap {point['cost_gap']:.5f}")
print("log-log slope:", round(report.fits["error_vs_M"]["slope"], 3))
print("checks:", report.checks)
