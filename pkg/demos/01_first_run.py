"""A first look: one instance, two elimination learners, one trial each.

Run with ``python3 demos/01_first_run.py``. Takes a couple of seconds.
"""
import numpy as np

from lexbandit import (
    PolicySpec,
    SeedSpec,
    compute_lambda,
    gap_matrix,
    lex_optimal_arm,
    tripeak_instance,
    simulate,
)

# %% The built-in instance
# Ten arms, three objectives. Objective 0 is the one that matters most; later
# objectives only break ties among arms that are equal on everything before.
inst = tripeak_instance(10)
print("means (one row per arm):")
print(np.round(inst.means, 2))
astar = lex_optimal_arm(inst)
print(f"lexicographically best arm: {astar}")

# %% How far is each arm from the optimum?
# Negative entries mean the arm beats a* on a lower-priority objective.
# The largest ratio of such a surplus to an earlier deficit is lambda.
print("gaps:")
print(np.round(gap_matrix(inst), 2))
print(f"lambda = {compute_lambda(inst)}")

# %% One identification run per algorithm
# bai mode runs until the learner has a single survivor.
for name in ("lexelim-out", "lexelim-in"):
    tr = simulate(PolicySpec(name, delta=0.01), inst, SeedSpec(7, 0).rng(), mode="bai")
    print(f"{name:12s} recommended arm {tr.recommended} after {tr.stopping_time} rounds")
    print(f"{'':12s} final pulls {tr.pulls.tolist()}")
    first = sorted(tr.eliminations, key=lambda e: e.round)[:3]
    for e in first:
        print(f"{'':12s} arms {sorted(e.removed)} dropped at round {e.round} on objective {e.objective}")
