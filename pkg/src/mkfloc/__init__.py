"""Planar object localisation with EKF, particle and multiparticle Kalman filters."""

__version__ = "0.1.0"

from .env import (
    Environment,
    SymmetrySpec,
    generate_labyrinth,
    generate_symmetric_world,
    load_map,
    make_nonsymmetric,
    make_preset,
    save_map,
)
from .filters import FilterConfig, mkf_init, mkf_step, pf_init, pf_step
from .sim import Trajectory, generate_trajectory, run_filter
from .state import Control, Pose

__all__ = [
    "Control",
    "Environment",
    "FilterConfig",
    "Pose",
    "SymmetrySpec",
    "Trajectory",
    "generate_labyrinth",
    "generate_symmetric_world",
    "generate_trajectory",
    "load_map",
    "make_nonsymmetric",
    "make_preset",
    "mkf_init",
    "mkf_step",
    "pf_init",
    "pf_step",
    "run_filter",
    "save_map",
]
