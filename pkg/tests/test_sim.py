from __future__ import annotations

import math

import numpy as np
import pytest

from mkfloc.env import Environment, collides_many, make_preset
from mkfloc.filters import FilterConfig
from mkfloc.metrics import mse_random_threshold
from mkfloc.sim import (
    Trajectory,
    generate_trajectory,
    load_trajectory,
    run_filter,
    save_trajectories,
    save_trajectory,
)
from mkfloc.state import angle_diff

BIG = Environment(1000, 1000, (), ((0, 0), (1000, 0), (0, 1000), (1000, 1000), (500, 500)), name="big")


def test_straight_line_without_noise():
    tr = generate_trajectory(BIG, 100, (0.05, 0.05), np.random.default_rng(3),
                             motion_noise=None, measurement_noise=None)
    p = tr.pose_array()
    assert all(c.dphi == 0.0 for c in tr.controls)
    assert math.hypot(*(p[-1, :2] - p[0, :2])) == pytest.approx(100 * 0.05, rel=1e-12)
    assert np.ptp(p[:, 2]) == 0.0


def test_same_seed_same_trajectory(labyrinth):
    a = generate_trajectory(labyrinth, 50, rng=np.random.default_rng(9), seed=9)
    b = generate_trajectory(labyrinth, 50, rng=np.random.default_rng(9), seed=9)
    assert a == b
    c = generate_trajectory(labyrinth, 50, rng=np.random.default_rng(10), seed=10)
    assert a != c


@pytest.mark.parametrize("name", ["world10", "labyrinth"])
def test_trajectories_stay_in_free_space(name):
    env = make_preset(name)
    rng = np.random.default_rng(0)
    for _ in range(300):
        tr = generate_trajectory(env, rng=rng)
        p = tr.pose_array()
        assert not collides_many(env, p[:, :2]).any()
        assert np.all((p[:, 2] >= 0) & (p[:, 2] < 2 * math.pi))


def test_truth_speed_within_noise_band(labyrinth):
    tr = generate_trajectory(labyrinth, 100, rng=np.random.default_rng(4))
    p = tr.pose_array()
    u = tr.controls[0].u
    steps = np.hypot(*np.diff(p[:, :2], axis=0).T)
    assert np.all(steps <= u + 0.02 + 1e-12)
    assert np.all(steps >= max(u - 0.02, 0.0) - 1e-12)


def test_controls_are_noise_free(labyrinth):
    tr = generate_trajectory(labyrinth, 60, rng=np.random.default_rng(5))
    p = tr.pose_array()
    u = {c.u for c in tr.controls}
    assert len(u) == 1
    # truth headings differ from the commanded ones by at most the truth noise bound
    for t, c in enumerate(tr.controls):
        commanded = p[t, 2] + c.dphi
        assert abs(angle_diff(p[t + 1, 2], commanded)) <= 0.01 * 2 * math.pi + 1e-12


def test_invalid_T(labyrinth):
    with pytest.raises(ValueError):
        generate_trajectory(labyrinth, 0)


def test_trajectory_shape_checked():
    with pytest.raises(ValueError):
        Trajectory([], [], [])


def test_csv_roundtrip(tmp_path, world10):
    tr = generate_trajectory(world10, 30, rng=np.random.default_rng(1), seed=1)
    path = tmp_path / "t.csv"
    save_trajectory(tr, path)
    back = load_trajectory(path)
    assert back == tr
    assert back.seed == 1
    header = path.read_text().splitlines()[1]
    assert header.startswith("t,x,y,phi,u,dphi,b0,")


def test_save_many(tmp_path, world10):
    trs = [generate_trajectory(world10, 5, rng=np.random.default_rng(i)) for i in range(3)]
    paths = save_trajectories(trs, tmp_path / "out")
    assert [p.name for p in paths] == ["traj_00000.csv", "traj_00001.csv", "traj_00002.csv"]


def test_pf_single_exact_particle_zero_error(world10):
    tr = generate_trajectory(world10, 40, rng=np.random.default_rng(2), motion_noise=None, measurement_noise=None)
    cfg = FilterConfig(N=1, M=np.zeros((2, 2)), predicted_measurement_noise=False)
    start = tr.pose_array()[:1]
    trace = run_filter("PF", world10, tr, cfg, np.random.default_rng(0), initial_states=start)
    assert np.max(trace.per_step_error) < 1e-20


@pytest.mark.parametrize("kind", ["PF", "MKF", "EKF"])
def test_run_filter_deterministic(world10, kind):
    tr = generate_trajectory(world10, 30, rng=np.random.default_rng(3))
    cfg = FilterConfig(N=50)
    a = run_filter(kind, world10, tr, cfg, np.random.default_rng(7))
    b = run_filter(kind, world10, tr, cfg, np.random.default_rng(7))
    np.testing.assert_array_equal(a.estimates, b.estimates)
    np.testing.assert_array_equal(a.neff, b.neff)
    assert a.T == 30


def test_run_filter_rejects_unknown_kind(world10):
    tr = generate_trajectory(world10, 3, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_filter("UKF", world10, tr, FilterConfig())


def test_run_filter_k_exceeds_beacons():
    env = Environment(10, 10, (), ((1, 1), (9, 9)))
    tr = generate_trajectory(env, 3, rng=np.random.default_rng(0), k=2)
    with pytest.raises(ValueError):
        run_filter("PF", env, tr, FilterConfig(k_measure=5))


@pytest.mark.slow
def test_mkf_beats_random_guess_in_labyrinth(labyrinth):
    threshold = mse_random_threshold(labyrinth.width, labyrinth.height)
    ok = 0
    for i in range(100):
        tr = generate_trajectory(labyrinth, rng=np.random.default_rng(1000 + i))
        trace = run_filter("MKF", labyrinth, tr, FilterConfig(N=100), np.random.default_rng(i))
        ok += trace.per_step_error[-1] < threshold
    assert ok >= 95, f"only {ok}/100 runs ended below the random-guess error"
