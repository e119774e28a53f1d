from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import Environment
from ..models import SIGMA_D0_SQ, SIGMA_PHI0, SIGMA_R0
from ..state import TWO_PI

M0 = np.diag([SIGMA_R0**2, SIGMA_PHI0**2])


def default_P0(env: Environment) -> np.ndarray:
    """Initial covariance modelling a uniform position/heading: ``diag(wh/12, wh/12, (2pi)^2/12)``."""
    s2 = env.width * env.height / 12.0
    return np.diag([s2, s2, TWO_PI**2 / 12.0])


@dataclass
class FilterConfig:
    """Hyper-parameters shared by the EKF, PF and MKF.

    ``predicted_measurement_noise=None`` picks each algorithm's own default:
    the particle filter perturbs its predicted ranges, the MKF does not.
    ``P0=None`` means :func:`default_P0` of the map being filtered.
    """

    N: int = 100
    k_measure: int = 5
    M: np.ndarray = field(default_factory=lambda: M0.copy())
    R: np.ndarray | None = None
    P0: np.ndarray | None = None
    q_samples: int = 64
    resample_every_step: bool = True
    neff_threshold_fraction: float = 0.5
    predicted_measurement_noise: bool | None = None
    roughen: bool = True

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        if self.R is None:
            self.R = 2.0 * SIGMA_D0_SQ * np.eye(self.k_measure)
        self.R = np.asarray(self.R, dtype=float)
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.q_samples < 2:
            raise ValueError(f"q_samples must be >= 2, got {self.q_samples}")
        if self.k_measure < 1:
            raise ValueError("k_measure must be >= 1")
        if self.R.shape != (self.k_measure, self.k_measure):
            raise ValueError(f"R must be {self.k_measure}x{self.k_measure}, got {self.R.shape}")
        if not 0.0 < self.neff_threshold_fraction <= 1.0:
            raise ValueError("neff_threshold_fraction must lie in (0, 1]")
        self._R_chol = np.linalg.cholesky(self.R)

    def initial_covariance(self, env: Environment) -> np.ndarray:
        return default_P0(env) if self.P0 is None else np.asarray(self.P0, dtype=float)


@dataclass
class Incidents:
    """Counters for recoverable numerical events during a run."""

    skipped_updates: int = 0
    weight_resets: int = 0

    def merge(self, other: "Incidents") -> "Incidents":
        return Incidents(
            self.skipped_updates + other.skipped_updates,
            self.weight_resets + other.weight_resets,
        )
