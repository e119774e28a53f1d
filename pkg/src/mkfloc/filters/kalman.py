"""Extended Kalman filter for the unicycle / range-to-beacon problem.

The numerical core (:func:`kalman_predict_cov`, :func:`kalman_update`) is
model-agnostic and batched over a leading axis, so the multiparticle filter
runs one EKF per particle through exactly the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Environment, k_nearest_many
from ..models import Measurement, _range_jacobian, motion_jacobian, motion_step
from ..state import angle_diff, wrap_angle
from .config import Incidents

#: Innovation covariance condition number above which an update is skipped.
MAX_CONDITION = 1e12


@dataclass
class GaussianBelief:
    mean: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).copy()
        self.P = np.asarray(self.P, dtype=float).copy()


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def kalman_predict_cov(P: np.ndarray, F: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``F P F^T + Q``, symmetrised. Batched over leading axes."""
    return symmetrize(F @ P @ np.swapaxes(F, -1, -2) + Q)


def kalman_update(mean: np.ndarray, P: np.ndarray, innovation: np.ndarray, H: np.ndarray, R: np.ndarray,
                  skip: np.ndarray | None = None):
    """Batched Kalman measurement update.

    Shapes: ``mean (n, d)``, ``P (n, d, d)``, ``innovation (n, k)``,
    ``H (n, k, d)``, ``R (k, k)``.  Entries flagged in ``skip`` or whose
    innovation covariance is numerically singular keep their prior.

    Returns ``(mean, P, skipped)``.
    """
    n, d = mean.shape
    Ht = np.swapaxes(H, -1, -2)
    PHt = P @ Ht
    S = symmetrize(H @ PHt + R)
    # cond(S) <= (trace(H P H^T) + max eig R) / min eig R; exact check only where that bound fails
    r_ev = np.linalg.eigvalsh(R)
    bound = (np.trace(S, axis1=-2, axis2=-1) - np.trace(R) + r_ev[-1]) / r_ev[0] if r_ev[0] > 0 else np.full(n, np.inf)
    bad = ~np.isfinite(bound)
    suspect = ~(bound <= MAX_CONDITION)
    if suspect.any():
        ev = np.linalg.eigvalsh(np.where(np.isfinite(S[suspect]), S[suspect], 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            bad_s = ~(ev[:, 0] > 0) | (ev[:, -1] / ev[:, 0] > MAX_CONDITION)
        bad[suspect] = bad_s | ~np.isfinite(S[suspect]).all(axis=(1, 2))
    if skip is not None:
        bad |= skip
    if bad.any():
        S = S.copy()
        S[bad] = np.eye(S.shape[-1])
    # K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric
    K = np.swapaxes(np.linalg.solve(S, np.swapaxes(PHt, -1, -2)), -1, -2)
    new_mean = mean + np.einsum("nij,nj->ni", K, innovation)
    new_P = symmetrize((np.eye(d) - K @ H) @ P)
    if bad.any():
        new_mean[bad] = mean[bad]
        new_P[bad] = P[bad]
    return new_mean, new_P, bad


def draw_process_noise(rng: np.random.Generator, M: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Gaussian ``N(0, M)`` draws with shape ``shape + (2,)``."""
    z = rng.standard_normal(shape + (2,))
    if M[0, 1] == 0.0 and M[1, 0] == 0.0:
        return z * np.sqrt(np.clip(np.diag(M), 0.0, None))
    return z @ np.linalg.cholesky(M).T


def local_process_covariance(u: float, eta: np.ndarray) -> np.ndarray:
    """Sample covariance of ``x^- - f(x, u, eta_i)`` in the frame aligned with the commanded heading.

    In that frame the deviation of one draw is
    ``(u - (u + eta_r) cos eta_phi, -(u + eta_r) sin eta_phi, -eta_phi)``,
    independent of the state.
    """
    step = u + eta[:, 0]
    d = np.column_stack([u - step * np.cos(eta[:, 1]), -step * np.sin(eta[:, 1]), angle_diff(0.0, eta[:, 1])])
    return d.T @ d / eta.shape[0]


def rotate_covariance(Q_local: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """``G Q_local G^T`` with ``G`` rotating the position block by ``heading``; batched."""
    c, s = np.cos(heading), np.sin(heading)
    G = np.zeros(heading.shape + (3, 3))
    G[..., 0, 0] = c
    G[..., 0, 1] = -s
    G[..., 1, 0] = s
    G[..., 1, 1] = c
    G[..., 2, 2] = 1.0
    return G @ Q_local @ np.swapaxes(G, -1, -2)


def sampled_process_covariance(means: np.ndarray, control, M: np.ndarray, s: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo process covariance of the motion model around each mean.

    ``Q = (1/s) sum_i (x^- - f(x, u, eta_i)) (x^- - f(x, u, eta_i))^T`` with
    ``eta_i ~ N(0, M)``.  The deviation depends on the state only through the
    heading, so one set of ``s`` draws per call is rotated into each mean's
    frame; the result equals evaluating the sum per mean with shared draws.
    """
    u, dphi = control
    Q_local = local_process_covariance(u, draw_process_noise(rng, M, (s,)))
    return rotate_covariance(Q_local, means[:, 2] + dphi)


def predict_batch(means: np.ndarray, covs: np.ndarray, control, M: np.ndarray, s: int,
                  rng: np.random.Generator):
    """EKF time update for ``n`` Gaussian beliefs at once."""
    predicted = motion_step(means, control)
    F = motion_jacobian(means, control)
    Q = sampled_process_covariance(means, control, M, s, rng)
    return predicted, kalman_predict_cov(covs, F, Q)


def update_batch(means: np.ndarray, covs: np.ndarray, z_star: np.ndarray, env: Environment, R: np.ndarray):
    """EKF measurement update against sorted ranges ``z_star``.

    Each belief predicts ranges to the ``k`` beacons nearest its own mean;
    ranges are matched to ``z_star`` by sort order.
    """
    k = z_star.shape[-1]
    idx, z = k_nearest_many(env, means, k)
    H, degenerate = _range_jacobian(means, idx, env.beacon_array)
    innovation = z_star[None, :] - z
    new_means, new_covs, skipped = kalman_update(means, covs, innovation, H, R, skip=degenerate)
    new_means[:, 2] = wrap_angle(new_means[:, 2])
    return new_means, new_covs, skipped


def sorted_ranges(z_star) -> np.ndarray:
    """Measured ranges as a sorted float array (accepts a :class:`Measurement`)."""
    d = z_star.distances if isinstance(z_star, Measurement) else z_star
    return np.sort(np.asarray(d, dtype=float))


def ekf_predict(b: GaussianBelief, c, M, s: int = 64, rng: np.random.Generator | None = None) -> GaussianBelief:
    """Propagate a belief through the unicycle model with a sampled process covariance."""
    rng = np.random.default_rng() if rng is None else rng
    mean, P = predict_batch(b.mean[None, :], b.P[None], c, np.asarray(M, dtype=float), s, rng)
    return GaussianBelief(mean[0], P[0])


def ekf_update(b: GaussianBelief, z_star, env: Environment, R, incidents: Incidents | None = None) -> GaussianBelief:
    """Correct a belief with a range measurement.

    A numerically singular innovation covariance (or a mean sitting on a
    beacon) leaves the belief unchanged and bumps ``incidents.skipped_updates``.
    """
    mean, P, skipped = update_batch(b.mean[None, :], b.P[None], sorted_ranges(z_star), env,
                                    np.asarray(R, dtype=float))
    if skipped[0] and incidents is not None:
        incidents.skipped_updates += 1
    return GaussianBelief(mean[0], P[0])
