"""Theoretical guarantees next to one measured run.

Prints the per-objective sample and regret bounds for both algorithms and
the per-arm pull ceilings, then checks a single identification run against
them.
"""
import numpy as np

from lexbandit import BoundReport, PolicySpec, SeedSpec, compute_lambda, tripeak_instance, simulate
from lexbandit import metrics

inst = tripeak_instance(10)
delta = 0.01
lam = compute_lambda(inst)
report = BoundReport.evaluate(inst, delta, lam)

# %% Bounds per objective
print(f"{'obj':>3} {'Out regret':>12} {'Out samples':>12} {'In regret':>12} {'In samples':>12}")
for i in range(inst.m):
    print(f"{i:>3} {report.regret_out[i]:12.0f} {report.samples_out[i]:12.0f} "
          f"{report.regret_in[i]:12.0f} {report.samples_in[i]:12.0f}")

# %% Per-arm ceilings
# The Out ceiling charges each arm to the objective where it first falls
# short. The In ceiling takes the cheapest objective, scaled by lambda.
print("Out ceilings:", np.round(metrics.out_pull_ceilings(inst, delta)).tolist())
print("In ceilings: ", np.round(metrics.in_pull_ceilings(inst, delta, lam)).tolist())

# %% Measured
for name in ("lexelim-out", "lexelim-in"):
    tr = simulate(PolicySpec(name, delta=delta), inst, SeedSpec(3, 0).rng(), mode="bai")
    over = metrics.check_pull_ceilings(tr, inst, delta, name, lam)
    print(f"{name}: stopped at {tr.stopping_time}, coverage held={tr.coverage_held}, "
          f"arms above ceiling: {[o['arm'] for o in over]}")
