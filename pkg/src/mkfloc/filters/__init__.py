"""EKF, particle filter and multiparticle Kalman filter."""

from .config import FilterConfig, Incidents, default_P0
from .kalman import (
    GaussianBelief,
    ekf_predict,
    ekf_update,
    kalman_predict_cov,
    kalman_update,
)
from .multiparticle import KalmanParticleSet, mkf_init, mkf_step, roughen
from .particle import (
    ParticleSet,
    effective_sample_size,
    multinomial_resample,
    pf_init,
    pf_step,
    weighted_estimate,
)

__all__ = [
    "FilterConfig",
    "GaussianBelief",
    "Incidents",
    "KalmanParticleSet",
    "ParticleSet",
    "default_P0",
    "effective_sample_size",
    "ekf_predict",
    "ekf_update",
    "kalman_predict_cov",
    "kalman_update",
    "mkf_init",
    "mkf_step",
    "multinomial_resample",
    "pf_init",
    "pf_step",
    "roughen",
    "weighted_estimate",
]
