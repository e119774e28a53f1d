"""Ground-truth trajectories and the closed-loop filter runner."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import Environment, free_space_centroid, sample_free_pose, segment_collides
from .filters import (
    FilterConfig,
    GaussianBelief,
    Incidents,
    KalmanParticleSet,
    ParticleSet,
    ekf_predict,
    ekf_update,
    mkf_init,
    mkf_step,
    pf_init,
    pf_step,
)
from .models import (
    SIGMA_D0_SQ,
    Measurement,
    MeasurementNoiseModel,
    MotionNoiseModel,
    measure,
    motion_step,
    sample_measurement_noise,
    sample_motion_noise,
)
from .state import TWO_PI, Control, Pose

DEFAULT_T = 100
DEFAULT_SPEED_RANGE = (0.0, 0.5)
MAX_HEADING_ATTEMPTS = 100
MAX_RESTARTS = 1000
FILTER_KINDS = ("PF", "MKF", "EKF")


class TrappedError(RuntimeError):
    """No collision-free heading was found."""


@dataclass
class Trajectory:
    poses: list[Pose]
    controls: list[Control]
    measurements: list[Measurement]
    seed: int | None = None
    rejected: int = 0

    def __post_init__(self):
        if len(self.poses) != len(self.controls) + 1 or len(self.controls) != len(self.measurements):
            raise ValueError("trajectory needs T+1 poses, T controls and T measurements")

    @property
    def T(self) -> int:
        return len(self.controls)

    def pose_array(self) -> np.ndarray:
        return np.array(self.poses, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.poses == other.poses
            and self.controls == other.controls
            and all(a == b for a, b in zip(self.measurements, other.measurements))
            and self.seed == other.seed
        )


@dataclass
class RunTrace:
    estimates: np.ndarray
    per_step_error: np.ndarray
    wall_time: float
    incidents: Incidents = field(default_factory=Incidents)
    neff: np.ndarray | None = None

    @property
    def T(self) -> int:
        return len(self.estimates)


def _try_trajectory(env, T, u, rng, motion_noise, meas_noise, k):
    pose = sample_free_pose(env, rng)
    poses, controls, measurements = [pose], [], []
    for _ in range(T):
        for attempt in range(MAX_HEADING_ATTEMPTS):
            dphi = 0.0 if attempt == 0 else float(rng.uniform(0.0, TWO_PI))
            heading = pose.phi + dphi
            target = (pose.x + u * np.cos(heading), pose.y + u * np.sin(heading))
            if segment_collides(env, (pose.x, pose.y), target):
                continue
            eta = (0.0, 0.0) if motion_noise is None else sample_motion_noise(motion_noise, rng)
            nxt = motion_step(pose, (u, dphi), eta)
            if segment_collides(env, (pose.x, pose.y), (nxt.x, nxt.y)):
                continue
            break
        else:
            raise TrappedError(f"no collision-free heading from {pose}")
        pose = nxt
        zeta = None if meas_noise is None else sample_measurement_noise(meas_noise, k, rng)
        poses.append(pose)
        controls.append(Control(u, dphi))
        measurements.append(measure(env, pose, k, zeta))
    return poses, controls, measurements


def generate_trajectory(env: Environment, T: int = DEFAULT_T, speed_range=DEFAULT_SPEED_RANGE,
                        rng: np.random.Generator | None = None, *, k: int = 5,
                        motion_noise: MotionNoiseModel | None = MotionNoiseModel.truth(),
                        measurement_noise: MeasurementNoiseModel | None = MeasurementNoiseModel(SIGMA_D0_SQ),
                        seed: int | None = None) -> Trajectory:
    """Simulate an object driving through ``env`` for ``T`` steps.

    The commanded speed is drawn once from ``U(speed_range)``.  The heading is
    kept unless the step would hit an obstacle, in which case a fresh heading
    change is drawn uniformly from ``[0, 2*pi)``.  Truth noise is applied to
    the motion; the recorded controls are noise-free.  A trapped object
    restarts from a new random pose (counted in ``Trajectory.rejected``).

    Pass ``motion_noise=None`` / ``measurement_noise=None`` for a noiseless run.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    lo, hi = speed_range
    u = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    for rejected in range(MAX_RESTARTS):
        try:
            poses, controls, meas = _try_trajectory(env, T, u, rng, motion_noise, measurement_noise, k)
        except TrappedError:
            continue
        return Trajectory(poses, controls, meas, seed=seed, rejected=rejected)
    raise RuntimeError(f"could not generate a trajectory in {env.name!r} after {MAX_RESTARTS} restarts")


def run_filter(kind: str, env: Environment, traj: Trajectory, cfg: FilterConfig,
               rng: np.random.Generator | None = None, *, initial_states: np.ndarray | None = None) -> RunTrace:
    """Feed a trajectory's controls and measurements to one filter.

    The filter starts with no knowledge of the start pose (uniform particles);
    the EKF starts at the free-space centroid with covariance ``P0``.
    ``initial_states`` overrides the particle initialisation (tests only).
    """
    kind = kind.upper()
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}; choose from {FILTER_KINDS}")
    if cfg.k_measure > env.n_beacons:
        raise ValueError(f"k_measure={cfg.k_measure} exceeds the {env.n_beacons} beacons of {env.name!r}")
    rng = np.random.default_rng() if rng is None else rng
    incidents = Incidents()
    T = traj.T
    estimates = np.empty((T, 3))
    neffs = np.empty(T, dtype=int)
    P0 = cfg.initial_covariance(env)

    t0 = time.perf_counter()
    if kind == "EKF":
        mean = np.array([*free_space_centroid(env), np.pi]) if initial_states is None else initial_states[0]
        belief = GaussianBelief(mean, P0)
        for t in range(T):
            belief = ekf_predict(belief, traj.controls[t], cfg.M, cfg.q_samples, rng)
            belief = ekf_update(belief, traj.measurements[t], env, cfg.R, incidents)
            estimates[t] = belief.mean
            neffs[t] = 1
    else:
        N = cfg.N
        if kind == "PF":
            state = pf_init(env, N, rng) if initial_states is None else \
                ParticleSet(initial_states, np.full(len(initial_states), 1.0 / len(initial_states)))
            step = pf_step
        else:
            if initial_states is None:
                state = mkf_init(env, N, P0, rng)
            else:
                n = len(initial_states)
                state = KalmanParticleSet(initial_states, np.full(n, 1.0 / n), np.broadcast_to(P0, (n, 3, 3)))
            step = mkf_step
        for t in range(T):
            state, est, neffs[t] = step(state, traj.controls[t], traj.measurements[t], env, cfg, rng, incidents)
            estimates[t] = est
    wall = time.perf_counter() - t0

    truth = traj.pose_array()[1:, :2]
    err = np.sum((estimates[:, :2] - truth) ** 2, axis=1)
    return RunTrace(estimates, err, wall, incidents, neffs)


TRAJECTORY_COLUMNS = ("t", "x", "y", "phi", "u", "dphi")


def save_trajectory(traj: Trajectory, path) -> None:
    """Write one row per step: ``t, x*, y*, phi*, u, dphi, b_1..b_k, d_1..d_k``.

    Row ``t=0`` holds the start pose and empty control/measurement fields.
    """
    k = traj.measurements[0].k if traj.measurements else 0
    header = list(TRAJECTORY_COLUMNS) + [f"b{j}" for j in range(k)] + [f"d{j}" for j in range(k)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if traj.seed is not None:
            fh.write(f"# seed={traj.seed}\n")
        w = csv.writer(fh)
        w.writerow(header)
        p = traj.poses[0]
        w.writerow([0, repr(p.x), repr(p.y), repr(p.phi)] + [""] * (2 + 2 * k))
        for t, (p, c, m) in enumerate(zip(traj.poses[1:], traj.controls, traj.measurements), start=1):
            w.writerow([t, repr(p.x), repr(p.y), repr(p.phi), repr(float(c.u)), repr(float(c.dphi))]
                       + [int(i) for i in m.beacon_indices] + [repr(float(d)) for d in m.distances])


def load_trajectory(path) -> Trajectory:
    """Inverse of :func:`save_trajectory`."""
    seed = None
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            if ln.startswith("# seed="):
                seed = int(ln.strip().split("=", 1)[1])
            continue
        body.append(ln)
    reader = csv.reader(body)
    header = next(reader)
    k = (len(header) - len(TRAJECTORY_COLUMNS)) // 2
    rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    poses = [Pose(float(rows[0][1]), float(rows[0][2]), float(rows[0][3]))]
    controls, meas = [], []
    for r in rows[1:]:
        poses.append(Pose(float(r[1]), float(r[2]), float(r[3])))
        controls.append(Control(float(r[4]), float(r[5])))
        meas.append(Measurement([int(v) for v in r[6:6 + k]], [float(v) for v in r[6 + k:6 + 2 * k]]))
    return Trajectory(poses, controls, meas, seed=seed)


def save_trajectories(trajs, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, tr in enumerate(trajs):
        p = outdir / f"traj_{i:05d}.csv"
        save_trajectory(tr, p)
        paths.append(p)
    return paths
