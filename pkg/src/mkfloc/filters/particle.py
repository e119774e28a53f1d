"""Bootstrap particle filter with multinomial resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Environment, sample_free_positions
from ..models import batch_log_likelihood, motion_step, predicted_ranges
from ..state import TWO_PI, Pose, wrap_angle
from .config import FilterConfig, Incidents
from .kalman import draw_process_noise, sorted_ranges


@dataclass
class ParticleSet:
    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.states.shape[0]:
            raise ValueError("states and weights differ in length")

    def __len__(self) -> int:
        return self.states.shape[0]


def uniform_states(env: Environment, N: int, rng: np.random.Generator) -> np.ndarray:
    pos = sample_free_positions(env, N, rng)
    phi = rng.uniform(0.0, TWO_PI, size=N)
    return np.column_stack([pos, phi])


def pf_init(env: Environment, N: int, rng: np.random.Generator) -> ParticleSet:
    """``N`` particles uniform over free space, equal weights."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return ParticleSet(uniform_states(env, N, rng), np.full(N, 1.0 / N))


def effective_sample_size(weights) -> int:
    """``floor(1 / sum(w^2))`` clamped to ``[1, N]``.

    A relative slack of 1e-9 absorbs round-off, so weights that are uniform
    up to a few ulp still count as ``N`` effective particles.
    """
    w = np.asarray(weights, dtype=float)
    s = float(np.dot(w, w))
    if not s > 0:
        return 1
    return int(min(max(np.floor((1.0 + 1e-9) / s), 1), w.size))


def multinomial_resample(states, weights, *extras, rng: np.random.Generator):
    """Draw ``N`` indices i.i.d. from ``Multinomial(weights)`` and gather.

    Every array in ``extras`` (e.g. per-particle covariances) is gathered with
    the same indices.  Returns ``(states, *extras, uniform_weights)``.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n == 1:
        idx = np.zeros(1, dtype=int)
    else:
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        np.minimum(idx, n - 1, out=idx)
    gathered = [np.asarray(a)[idx] for a in (states, *extras)]
    return (*gathered, np.full(n, 1.0 / n))


def normalize_log_weights(log_w: np.ndarray, incidents: Incidents | None = None) -> np.ndarray:
    """Exponentiate and normalise; resets to uniform if nothing is finite."""
    top = np.max(log_w)
    if not np.isfinite(top):
        if incidents is not None:
            incidents.weight_resets += 1
        return np.full(log_w.size, 1.0 / log_w.size)
    w = np.exp(log_w - top)
    return w / w.sum()


def weighted_estimate(states: np.ndarray, weights: np.ndarray) -> Pose:
    """Weighted mean position and weighted circular-mean heading."""
    x, y = weights @ states[:, :2]
    phi = np.arctan2(weights @ np.sin(states[:, 2]), weights @ np.cos(states[:, 2]))
    return Pose(float(x), float(y), float(wrap_angle(phi)))


def _log(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def should_resample(neff: int, n: int, cfg: FilterConfig) -> bool:
    return cfg.resample_every_step or neff <= cfg.neff_threshold_fraction * n


def pf_step(pset: ParticleSet, c, z_star, env: Environment, cfg: FilterConfig, rng: np.random.Generator,
            incidents: Incidents | None = None):
    """One predict / weight / resample cycle.

    Returns ``(new_set, estimate, n_eff)``; the estimate uses the post-update
    weights, before resampling.
    """
    n = len(pset)
    z_star = sorted_ranges(z_star)
    k = z_star.size
    eta = draw_process_noise(rng, cfg.M, (n,))
    states = motion_step(pset.states, c, eta)
    z = predicted_ranges(env, states, k)
    noisy = cfg.predicted_measurement_noise
    if noisy is None or noisy:
        z = z + rng.standard_normal((n, k)) @ cfg._R_chol.T
    log_w = _log(pset.weights) + batch_log_likelihood(z_star[None, :] - z, cfg.R)
    weights = normalize_log_weights(log_w, incidents)
    neff = effective_sample_size(weights)
    estimate = weighted_estimate(states, weights)
    if should_resample(neff, n, cfg):
        states, weights = multinomial_resample(states, weights, rng=rng)
    return ParticleSet(states, weights), estimate, neff
