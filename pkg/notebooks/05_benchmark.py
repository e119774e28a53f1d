"""
A small paired benchmark
========================

Every trajectory is filtered by every cell, so PF and MKF are compared on
identical inputs.  The same runs can be produced from the shell with
``mkfloc bench --config c.json --out results/`` and ``mkfloc report results/``.
"""

# %%
import tempfile

import numpy as np

from mkfloc.bench import ExperimentConfig, load_results, run_experiment, write_results
from mkfloc.cli import render_table

cfg = ExperimentConfig(
    map="labyrinth",
    filters=["PF", "MKF"],
    particles=[100, 500],
    settings=["sigma", "4sigma"],
    n_trajectories=20,
)
report = run_experiment(cfg)

out = write_results(report, tempfile.mkdtemp())
summary, rows = load_results(out)
print(render_table(summary, rows))

# %%
# Paired sign count: how often does MKF(100) beat PF(500) on the same trajectory?
pf = np.array([r["fse"] for r in report.runs_for("PF", 500, "4sigma")])
mkf = np.array([r["fse"] for r in report.runs_for("MKF", 100, "4sigma")])
print(f"MKF(100) better on {(mkf < pf).sum()} of {len(pf)} trajectories")
