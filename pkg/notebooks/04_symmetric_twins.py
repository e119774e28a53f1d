"""
Twins in a tiled world
======================

In ``world10`` every tile looks the same to the range sensor, so a filter
can settle on the right spot in the wrong tile.  The symmetry-aware error
measures the distance to the closest tile-shifted copy of the truth.
"""

# %%
import numpy as np

from mkfloc.bench import ExperimentConfig, run_experiment

report = run_experiment(ExperimentConfig(map="world10", cells=[["PF", 1000, "sigma"]], n_trajectories=40))
runs = report.runs_for("PF", 1000, "sigma")
plain = np.array([r["fse"] for r in runs])
sym = np.array([r["sym_fse"] for r in runs])

print(f"median FSE {np.median(plain):.3f}, median symmetry-aware FSE {np.median(sym):.3f}")
twins = (plain > 1) & (sym < 1)
print(f"{twins.sum()} of {len(runs)} runs converged to a twin tile")
