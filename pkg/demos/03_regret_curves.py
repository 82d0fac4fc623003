"""Regret curves through the experiment harness.

Equivalent to ``lexbandit run --config demos/regret_curves.yaml``. The
files land in runs/regret_curves relative to the working directory.
"""
from pathlib import Path

import numpy as np

from lexbandit import harness
from lexbandit.harness import ExperimentConfig

here = Path(__file__).parent
cfg = ExperimentConfig.load(here / "regret_curves.yaml")
out = Path(cfg.output)

# %% Simulate and write the usual files (traces, summary.json, regret.csv)
result = harness.run_experiment(cfg, base=here)
summary = harness.write_outputs(result, out)
entry = summary["instances"]["K10"]

# %% Final mean regret per objective
for key, ps in entry["policies"].items():
    final = np.array(ps["meanRegret"][-1])
    print(f"{key:12s} R(T)/T = {np.round(final / cfg.horizon, 4).tolist()}")

# %% The CSV is long format, ready for any plotting tool
print((out / "regret.csv").read_text().splitlines()[:4])
