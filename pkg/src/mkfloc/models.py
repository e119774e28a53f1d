"""Unicycle motion model and range-to-beacon measurement model.

Everything here is vectorised: a single pose is a length-3 array (or
:class:`~mkfloc.state.Pose`), a batch is an ``(n, 3)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .env import Environment, k_nearest_many
from .state import TWO_PI, Control, Pose, wrap_angle

#: Beacon distance below which a Jacobian row is undefined.
DEGENERATE_DISTANCE = 1e-9

# Ground-truth noise levels used by the simulator and the default filter settings.
SIGMA_R0 = 0.02
SIGMA_PHI0 = 0.01 * TWO_PI
SIGMA_D0_SQ = 0.01
TRUTH_RADIAL_HALF_WIDTH = 0.02
TRUTH_HEADING_HALF_WIDTH = 0.01  # fraction of a full turn


class DegenerateGeometryError(ValueError):
    """A referenced beacon coincides with the hypothesised position."""


@dataclass(frozen=True)
class MotionNoiseModel:
    """Motion noise ``(eta_r, eta_phi)``.

    With ``truth_mode`` the simulator's uniform law is used:
    ``eta_r ~ U[-0.02, 0.02]`` and ``eta_phi = 2*pi*alpha``, ``alpha ~ U[-0.01, 0.01]``.
    Otherwise draws are Gaussian ``N(0, M)``.
    """

    M: np.ndarray = field(default_factory=lambda: np.diag([SIGMA_R0**2, SIGMA_PHI0**2]))
    truth_mode: bool = False

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.shape != (2, 2):
            raise ValueError(f"motion covariance must be 2x2, got {M.shape}")
        if np.any(np.diag(M) < 0):
            raise ValueError("motion variances must be non-negative")
        object.__setattr__(self, "M", M)

    @classmethod
    def truth(cls) -> "MotionNoiseModel":
        return cls(truth_mode=True)


@dataclass(frozen=True)
class MeasurementNoiseModel:
    """Isotropic Gaussian range noise with variance ``sigma2``."""

    sigma2: float = SIGMA_D0_SQ

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("measurement variance must be non-negative")

    def R(self, k: int) -> np.ndarray:
        return self.sigma2 * np.eye(k)


@dataclass(frozen=True)
class Measurement:
    """Distances to ``k`` beacons and the beacon indices they refer to."""

    beacon_indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.beacon_indices, dtype=int).reshape(-1)
        dist = np.asarray(self.distances, dtype=float).reshape(-1)
        if idx.shape != dist.shape:
            raise ValueError(f"indices ({idx.size}) and distances ({dist.size}) differ in length")
        object.__setattr__(self, "beacon_indices", idx)
        object.__setattr__(self, "distances", dist)

    @property
    def k(self) -> int:
        return self.distances.size

    def __eq__(self, other):
        if not isinstance(other, Measurement):
            return NotImplemented
        return bool(
            np.array_equal(self.beacon_indices, other.beacon_indices)
            and np.array_equal(self.distances, other.distances)
        )

    __hash__ = None


def motion_step(pose, control, eta=(0.0, 0.0)):
    """Apply the unicycle update.

    ``x' = x + (u + eta_r) cos(phi + dphi + eta_phi)``, likewise for ``y``
    with ``sin``, and ``phi' = wrap(phi + dphi + eta_phi)``.

    ``pose`` may be ``(3,)`` or ``(n, 3)``; ``eta`` broadcasts against it as
    ``(2,)`` or ``(n, 2)``.  Returns an array of the same shape as ``pose``
    (a :class:`Pose` if a :class:`Pose` was passed).
    """
    p = np.asarray(pose, dtype=float)
    u, dphi = control
    e = np.asarray(eta, dtype=float)
    heading = p[..., 2] + dphi + e[..., 1]
    step = u + e[..., 0]
    out = np.empty(np.broadcast_shapes(p.shape, e.shape[:-1] + (3,)))
    out[..., 0] = p[..., 0] + step * np.cos(heading)
    out[..., 1] = p[..., 1] + step * np.sin(heading)
    out[..., 2] = wrap_angle(heading)
    if isinstance(pose, Pose):
        return Pose.from_array(out)
    return out


def motion_jacobian(pose, control) -> np.ndarray:
    """``df/dx`` at zero noise; ``(3, 3)`` or ``(n, 3, 3)``."""
    p = np.asarray(pose, dtype=float)
    u, dphi = control
    heading = p[..., 2] + dphi
    F = np.zeros(p.shape[:-1] + (3, 3))
    F[..., 0, 0] = F[..., 1, 1] = F[..., 2, 2] = 1.0
    F[..., 0, 2] = -u * np.sin(heading)
    F[..., 1, 2] = u * np.cos(heading)
    return F


def measure(env: Environment, pose, k: int, zeta=None) -> Measurement:
    """Ranges from ``pose`` to its ``k`` nearest beacons plus additive noise ``zeta``."""
    idx, dist = k_nearest_many(env, np.asarray(pose, dtype=float)[None, :2], k)
    dist = dist[0]
    if zeta is not None:
        dist = dist + np.asarray(zeta, dtype=float)
    return Measurement(idx[0], dist)


def predict_measurement(env: Environment, pose, k: int, association=None) -> Measurement:
    """Noiseless measurement a hypothesis at ``pose`` would produce.

    Without ``association`` the hypothesis' own ``k`` nearest beacons are used
    (ascending distance).  With ``association`` the distances to exactly those
    beacons, in the given order, are returned.
    """
    if association is None:
        return measure(env, pose, k)
    idx = np.asarray(association, dtype=int).reshape(-1)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= env.n_beacons:
        raise IndexError(f"association {idx.tolist()} invalid for {env.n_beacons} beacons")
    p = np.asarray(pose, dtype=float)
    diff = p[:2] - env.beacon_array[idx]
    return Measurement(idx, np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2))


def predicted_ranges(env: Environment, states: np.ndarray, k: int) -> np.ndarray:
    """Sorted distances from each of ``(n, 3)`` states to its ``k`` nearest beacons."""
    diff = states[:, None, :2] - env.beacon_array[None, :, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    if k < dist.shape[1]:
        dist = np.partition(dist, k - 1, axis=1)[:, :k]
    return np.sort(dist, axis=1)


def measurement_jacobian(env: Environment, pose, beacon_indices) -> np.ndarray:
    """``dg/dx``: row ``j`` is ``[(x - s_jx)/d_j, (y - s_jy)/d_j, 0]``."""
    p = np.asarray(pose, dtype=float)
    idx = np.asarray(beacon_indices, dtype=int).reshape(-1)
    H, degenerate = _range_jacobian(p[None, :], idx[None, :], env.beacon_array)
    if degenerate[0]:
        raise DegenerateGeometryError(f"pose {p[:2].tolist()} coincides with a beacon in {idx.tolist()}")
    return H[0]


def _range_jacobian(states: np.ndarray, indices: np.ndarray, beacons: np.ndarray):
    """Batched range Jacobian. Returns ``(H, degenerate_mask)`` with ``H`` shaped ``(n, k, 3)``."""
    diff = states[:, None, :2] - beacons[indices]
    d = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    degenerate = (d < DEGENERATE_DISTANCE).any(axis=1)
    safe = np.where(d < DEGENERATE_DISTANCE, 1.0, d)
    H = np.zeros(indices.shape + (3,))
    H[..., :2] = diff / safe[..., None]
    return H, degenerate


def log_likelihood(z_star, z_pred, R) -> float:
    """Log of the Gaussian density of ``z_star`` around ``z_pred`` with covariance ``R``."""
    a = np.asarray(getattr(z_star, "distances", z_star), dtype=float)
    b = np.asarray(getattr(z_pred, "distances", z_pred), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"measurement lengths differ: {a.size} vs {b.size}")
    return float(batch_log_likelihood(a - b, np.asarray(R, dtype=float)))


def batch_log_likelihood(residuals: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Gaussian log-density of residual vectors ``(..., k)`` under ``N(0, R)``."""
    r = np.asarray(residuals, dtype=float)
    k = r.shape[-1]
    L = np.linalg.cholesky(R)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    flat = r.reshape(-1, k).T
    y = solve_triangular(L, flat, lower=True)
    maha = np.sum(y * y, axis=0).reshape(r.shape[:-1])
    return -0.5 * (k * np.log(TWO_PI) + logdet + maha)


def sample_motion_noise(model: MotionNoiseModel, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``(eta_r, eta_phi)``; shape ``(2,)`` or ``(*size, 2)``."""
    shape = (2,) if size is None else tuple(np.atleast_1d(size)) + (2,)
    if model.truth_mode:
        eta = rng.uniform(-1.0, 1.0, size=shape)
        eta[..., 0] *= TRUTH_RADIAL_HALF_WIDTH
        eta[..., 1] *= TWO_PI * TRUTH_HEADING_HALF_WIDTH
        return eta
    std = np.sqrt(np.diag(model.M))
    if np.count_nonzero(model.M - np.diag(np.diag(model.M))):
        return rng.multivariate_normal(np.zeros(2), model.M, size=size)
    return rng.standard_normal(shape) * std


def sample_measurement_noise(model: MeasurementNoiseModel, k: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Gaussian range noise; shape ``(k,)`` or ``(*size, k)``."""
    shape = (k,) if size is None else tuple(np.atleast_1d(size)) + (k,)
    return rng.standard_normal(shape) * np.sqrt(model.sigma2)


__all__ = [
    "Control",
    "DegenerateGeometryError",
    "Measurement",
    "MeasurementNoiseModel",
    "MotionNoiseModel",
    "Pose",
    "batch_log_likelihood",
    "log_likelihood",
    "measure",
    "measurement_jacobian",
    "motion_jacobian",
    "motion_step",
    "predict_measurement",
    "predicted_ranges",
    "sample_measurement_noise",
    "sample_motion_noise",
]
