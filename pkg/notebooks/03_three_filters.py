"""
One trajectory, three filters
=============================

Simulate a drive through the labyrinth and localise it with the EKF, the
particle filter and the multiparticle Kalman filter, starting from no
knowledge of the start pose.
"""

# %%
import numpy as np

from mkfloc.env import make_preset
from mkfloc.filters import FilterConfig
from mkfloc.filters.config import M0
from mkfloc.metrics import fse, mse, mse_random_threshold
from mkfloc.sim import generate_trajectory, run_filter

env = make_preset("labyrinth")
traj = generate_trajectory(env, T=100, rng=np.random.default_rng(7))
truth = traj.pose_array()[1:]
print(f"speed u = {traj.controls[0].u:.3f}, turns = {sum(c.dphi != 0 for c in traj.controls)}")

# %%
runs = {
    "EKF": FilterConfig(M=4 * M0),
    "PF(1000)": FilterConfig(N=1000, M=4 * M0),
    "MKF(100)": FilterConfig(N=100, M=4 * M0),
}
for label, cfg in runs.items():
    trace = run_filter(label.split("(")[0], env, traj, cfg, np.random.default_rng(1))
    print(f"{label:9s} MSE {mse(trace.estimates, truth):7.3f}  FSE {fse(trace.estimates[-1], truth[-1]):7.3f}  "
          f"{trace.wall_time:.2f}s")

print("random-guess level:", round(mse_random_threshold(env.width, env.height), 2))

# %%
# Error over time for the MKF: a fast drop once the beacons disambiguate the pose.
trace = run_filter("MKF", env, traj, runs["MKF(100)"], np.random.default_rng(1))
for t in (0, 5, 10, 20, 50, 99):
    print(f"t={t:3d}  squared error {trace.per_step_error[t]:8.4f}")
