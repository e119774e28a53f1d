"""Pose and control containers shared by every module."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(phi):
    """Wrap angles into [0, 2*pi). Works on scalars and arrays."""
    wrapped = np.mod(phi, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def angle_diff(a, b):
    """Shortest signed difference a - b, in (-pi, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    return np.where(d == -np.pi, np.pi, d)


class Pose(NamedTuple):
    """Planar pose: position (x, y) and heading phi in [0, 2*pi)."""

    x: float
    y: float
    phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Pose":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(wrap_angle(a[2])))


class Control(NamedTuple):
    """Commanded speed ``u`` (length per step) and heading change ``dphi``."""

    u: float
    dphi: float = 0.0
