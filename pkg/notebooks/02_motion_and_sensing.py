"""
Motion and range models
=======================

The object is a unicycle: it drives ``u`` per step along its heading after
turning by ``dphi``.  The sensor returns ranges to the nearest beacons.
"""

# %%
import numpy as np

from mkfloc.env import make_preset
from mkfloc.models import (
    MotionNoiseModel,
    log_likelihood,
    measure,
    measurement_jacobian,
    motion_jacobian,
    motion_step,
    sample_motion_noise,
)
from mkfloc.state import Control, Pose

p = Pose(2.0, 3.0, 0.7)
c = Control(0.4, 0.1)
print("noise-free step:", motion_step(p, c))

# The simulator perturbs motion with bounded uniform noise ...
rng = np.random.default_rng(0)
truth_eta = sample_motion_noise(MotionNoiseModel.truth(), rng, size=5)
print("truth noise draws:\n", truth_eta)
# ... while the filters assume a Gaussian with covariance M.
print("filter M:\n", MotionNoiseModel().M)

# %%
# Analytic Jacobians against central differences.
F = motion_jacobian(p, c)
h = 1e-6
fd = np.column_stack([(motion_step(np.add(p, e), c) - motion_step(np.subtract(p, e), c)) / (2 * h)
                      for e in np.eye(3) * h])
print("max |F - finite diff| =", np.abs(F - fd).max())

env = make_preset("labyrinth")
z = measure(env, p, 5)
H = measurement_jacobian(env, p, z.beacon_indices)
print("ranges:", np.round(z.distances, 3))
print("H:\n", np.round(H, 3))

# %%
# Likelihood of a noisy reading under R = 0.02 I.
noisy = measure(env, p, 5, rng.normal(0, 0.1, 5))
print("log-likelihood:", log_likelihood(noisy, z, 0.02 * np.eye(5)))
