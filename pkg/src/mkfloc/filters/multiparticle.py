"""Multiparticle Kalman filter (MKF).

Every particle carries its own mean and covariance and is advanced by the
EKF equations.  Particle weights are then updated from the range likelihood
at the corrected means, (state, covariance) pairs are resampled jointly, and
the resampled means are roughened with motion noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Environment
from ..models import batch_log_likelihood, motion_step, predicted_ranges
from .config import FilterConfig, Incidents, default_P0
from .kalman import draw_process_noise, predict_batch, sorted_ranges, update_batch
from .particle import (
    _log,
    effective_sample_size,
    multinomial_resample,
    normalize_log_weights,
    should_resample,
    uniform_states,
    weighted_estimate,
)


@dataclass
class KalmanParticleSet:
    states: np.ndarray
    weights: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(-1, 3, 3)
        n = self.states.shape[0]
        if self.weights.shape[0] != n or self.covariances.shape[0] != n:
            raise ValueError("states, weights and covariances differ in length")

    def __len__(self) -> int:
        return self.states.shape[0]


def mkf_init(env: Environment, N: int, P0=None, rng: np.random.Generator | None = None) -> KalmanParticleSet:
    """Uniform particles, each with covariance ``P0`` (default: uniform-over-map covariance)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rng = np.random.default_rng() if rng is None else rng
    P0 = default_P0(env) if P0 is None else np.asarray(P0, dtype=float)
    return KalmanParticleSet(uniform_states(env, N, rng), np.full(N, 1.0 / N), np.broadcast_to(P0, (N, 3, 3)).copy())


def roughen(kset, M, rng: np.random.Generator):
    """Jitter states with ``f(x, 0, eta)``, ``eta ~ N(0, M)``; weights/covariances untouched."""
    M = np.asarray(M, dtype=float)
    eta = draw_process_noise(rng, M, (len(kset),))
    states = motion_step(kset.states, (0.0, 0.0), eta)
    if isinstance(kset, KalmanParticleSet):
        return KalmanParticleSet(states, kset.weights.copy(), kset.covariances.copy())
    return type(kset)(states, kset.weights.copy())


def mkf_step(kset: KalmanParticleSet, c, z_star, env: Environment, cfg: FilterConfig, rng: np.random.Generator,
             incidents: Incidents | None = None):
    """One MKF cycle. Returns ``(new_set, estimate, n_eff)``."""
    n = len(kset)
    z_star = sorted_ranges(z_star)
    k = z_star.size
    means, covs = predict_batch(kset.states, kset.covariances, c, cfg.M, cfg.q_samples, rng)
    means, covs, skipped = update_batch(means, covs, z_star, env, cfg.R)
    if incidents is not None:
        incidents.skipped_updates += int(skipped.sum())
    z = predicted_ranges(env, means, k)
    if cfg.predicted_measurement_noise:
        z = z + rng.standard_normal((n, k)) @ cfg._R_chol.T
    log_w = _log(kset.weights) + batch_log_likelihood(z_star[None, :] - z, cfg.R)
    weights = normalize_log_weights(log_w, incidents)
    neff = effective_sample_size(weights)
    estimate = weighted_estimate(means, weights)
    if should_resample(neff, n, cfg):
        means, covs, weights = multinomial_resample(means, weights, covs, rng=rng)
        out = KalmanParticleSet(means, weights, covs)
        if cfg.roughen:
            out = roughen(out, cfg.M, rng)
    else:
        out = KalmanParticleSet(means, weights, covs)
    return out, estimate, neff
