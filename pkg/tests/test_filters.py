from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, chisquare

from mkfloc.env import Environment, SymmetrySpec, collides_many, generate_symmetric_world
from mkfloc.filters import (
    FilterConfig,
    GaussianBelief,
    Incidents,
    KalmanParticleSet,
    ParticleSet,
    default_P0,
    effective_sample_size,
    ekf_predict,
    ekf_update,
    kalman_update,
    mkf_init,
    mkf_step,
    multinomial_resample,
    pf_init,
    pf_step,
    roughen,
    weighted_estimate,
)
from mkfloc.filters.config import M0
from mkfloc.filters.particle import normalize_log_weights
from mkfloc.models import measure, motion_jacobian, motion_step
from mkfloc.state import Control, Pose, angle_diff

TWO_PI = 2 * math.pi
TINY_M = np.diag([1e-24, 1e-24])


@pytest.fixture
def env():
    beacons = ((1, 1), (9, 1), (1, 9), (9, 9), (5, 5), (3, 6), (7, 3))
    return Environment(10, 10, ((6, 6, 7, 8),), beacons, name="seven")


# --- EKF --------------------------------------------------------------------

def test_noiseless_predict_limit():
    P = np.array([[1.0, 0.2, 0.1], [0.2, 2.0, -0.3], [0.1, -0.3, 0.5]])
    b = GaussianBelief([2, 3, 0.4], P)
    c = Control(0.3, 0.2)
    out = ekf_predict(b, c, TINY_M, 64, np.random.default_rng(0))
    F = motion_jacobian(b.mean, c)
    np.testing.assert_allclose(out.P, F @ P @ F.T, atol=1e-8)
    np.testing.assert_allclose(out.mean, motion_step(b.mean, c))


def test_stationary_noiseless_predict():
    b = GaussianBelief([2, 3, 0.4], np.diag([1.0, 2.0, 0.5]))
    out = ekf_predict(b, Control(0.0, 0.0), TINY_M, 64, np.random.default_rng(0))
    np.testing.assert_allclose(out.mean, b.mean, atol=1e-15)
    np.testing.assert_allclose(out.P, b.P, atol=1e-20)


@pytest.mark.parametrize("phi,u,dphi", [(0.3, 0.4, 0.0), (2.5, 0.25, 1.0), (5.0, 0.5, -0.7)])
def test_process_covariance_monte_carlo(phi, u, dphi):
    M = 4 * M0
    mean = np.array([4.0, 5.0, phi])
    s = 100_000
    got = ekf_predict(GaussianBelief(mean, np.zeros((3, 3))), (u, dphi), M, s, np.random.default_rng(1)).P
    # independent oracle: push Gaussian draws through the motion model one by one
    rng = np.random.default_rng(2)
    nominal = motion_step(mean, (u, dphi))
    dev = []
    for er, ep in rng.multivariate_normal([0, 0], M, size=20_000):
        x = motion_step(mean, (u, dphi), (er, ep))
        dev.append([nominal[0] - x[0], nominal[1] - x[1], angle_diff(nominal[2], x[2])])
    dev = np.array(dev)
    oracle = dev.T @ dev / len(dev)
    assert np.linalg.norm(got - oracle) / np.linalg.norm(oracle) < 0.05


def test_zero_innovation_keeps_mean(env):
    b = GaussianBelief([4.0, 3.0, 1.0], np.diag([0.5, 0.5, 0.2]))
    z = measure(env, b.mean, 4)
    out = ekf_update(b, z, env, 0.02 * np.eye(4))
    np.testing.assert_allclose(out.mean, b.mean, atol=1e-15)
    assert np.trace(out.P) <= np.trace(b.P)


def test_uninformative_measurement(env):
    b = GaussianBelief([4.0, 3.0, 1.0], np.diag([0.5, 0.5, 0.2]))
    z = measure(env, (4.5, 3.3, 1.0), 4)
    out = ekf_update(b, z, env, 1e12 * np.eye(4))
    np.testing.assert_allclose(out.mean, b.mean, atol=1e-6)
    np.testing.assert_allclose(out.P, b.P, atol=1e-6)


def test_scalar_kalman_oracle():
    # one beacon far to the east: range ~ 1000 - x, locally linear with H = [-1, 0, 0]
    env = Environment(2000, 10, (), ((1000.0, 0.0),))
    sx, sy, sphi, R = 0.7, 0.3, 0.1, 0.05
    b = GaussianBelief([0.0, 0.0, 1.0], np.diag([sx, sy, sphi]))
    z = 999.2
    out = ekf_update(b, [z], env, [[R]])
    gain = sx / (sx + R)
    np.testing.assert_allclose(out.mean, [-(gain * (z - 1000.0)), 0.0, 1.0], atol=1e-8)
    np.testing.assert_allclose(out.P, np.diag([(1 - gain) * sx, sy, sphi]), atol=1e-8)


def test_ill_conditioned_update_is_skipped(env):
    b = GaussianBelief([4.0, 3.0, 1.0], np.diag([1e6, 1e6, 1.0]))
    inc = Incidents()
    # three ranges constrain at most two directions, so S has an eigenvalue ~R
    out = ekf_update(b, measure(env, (4.2, 3.0, 1.0), 3), env, 1e-9 * np.eye(3), inc)
    assert inc.skipped_updates == 1
    np.testing.assert_array_equal(out.mean, b.mean)


def test_update_on_beacon_is_skipped(env):
    b = GaussianBelief([5.0, 5.0, 1.0], np.eye(3))
    inc = Incidents()
    out = ekf_update(b, measure(env, (5.1, 5.0, 1.0), 3), env, 0.02 * np.eye(3), inc)
    assert inc.skipped_updates == 1
    np.testing.assert_array_equal(out.P, b.P)


def test_batched_update_matches_single():
    rng = np.random.default_rng(3)
    n, d, k = 6, 3, 2
    mean = rng.normal(size=(n, d))
    A = rng.normal(size=(n, d, d))
    P = A @ np.swapaxes(A, 1, 2) + np.eye(d)
    H = rng.normal(size=(n, k, d))
    R = np.diag([0.3, 0.5])
    inn = rng.normal(size=(n, k))
    m_all, P_all, bad = kalman_update(mean, P, inn, H, R)
    assert not bad.any()
    for i in range(n):
        S = H[i] @ P[i] @ H[i].T + R
        K = P[i] @ H[i].T @ np.linalg.inv(S)
        np.testing.assert_allclose(m_all[i], mean[i] + K @ inn[i], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(P_all[i], (np.eye(d) - K @ H[i]) @ P[i], rtol=1e-9, atol=1e-12)


# --- particle filter --------------------------------------------------------

def test_single_particle_init(env):
    s = pf_init(env, 1, np.random.default_rng(0))
    assert len(s) == 1 and s.weights.tolist() == [1.0]


def test_init_weights_and_free_space(env):
    s = pf_init(env, 5000, np.random.default_rng(0))
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert not collides_many(env, s.states[:, :2]).any()
    assert np.all((s.states[:, 2] >= 0) & (s.states[:, 2] < TWO_PI))


def test_init_uniform_over_free_space():
    env = Environment(4, 4, ((0, 0, 2, 2),), ((3, 3),))
    s = pf_init(env, 48_000, np.random.default_rng(5))
    cells = np.floor(s.states[:, :2]).astype(int).clip(0, 3)
    counts = np.zeros((4, 4), int)
    np.add.at(counts, (cells[:, 0], cells[:, 1]), 1)
    free = np.ones((4, 4), bool)
    free[:2, :2] = False
    assert counts[~free].sum() == 0
    assert chisquare(counts[free]).pvalue > 0.01
    assert chisquare(np.histogram(s.states[:, 2], 12, (0, TWO_PI))[0]).pvalue > 0.01


def test_single_particle_estimate_is_propagated_state(env):
    cfg = FilterConfig(N=1, k_measure=3, M=4 * M0)
    start = ParticleSet([[3.0, 3.0, 0.5]], [1.0])
    z = measure(env, (8, 8, 0), 3)  # deliberately inconsistent
    out, est, neff = pf_step(start, (0.4, 0.1), z, env, cfg, np.random.default_rng(7))
    eta = np.random.default_rng(7).standard_normal(2) * np.sqrt(np.diag(cfg.M))
    want = motion_step(start.states[0], (0.4, 0.1), eta)
    np.testing.assert_allclose(est, want, atol=1e-12)
    np.testing.assert_allclose(out.states[0], want, atol=1e-12)
    assert neff == 1


def test_cloned_particles_track_truth(env):
    cfg = FilterConfig(N=20, k_measure=3, M=np.zeros((2, 2)), predicted_measurement_noise=False)
    truth = np.array([2.0, 2.0, 0.3])
    s = ParticleSet(np.tile(truth, (20, 1)), np.full(20, 0.05))
    rng = np.random.default_rng(0)
    for _ in range(10):
        truth = motion_step(truth, (0.2, 0.05))
        s, est, neff = pf_step(s, (0.2, 0.05), measure(env, truth, 3), env, cfg, rng)
        np.testing.assert_allclose(est, truth, atol=1e-12)
        assert neff == 20


@pytest.mark.parametrize("w,expected", [
    (np.full(100, 0.01), 100),
    (np.eye(1, 50, 7).ravel(), 1),
    (np.array([0.5, 0.5, 0.0, 0.0]), 2),
])
def test_effective_sample_size(w, expected):
    assert effective_sample_size(w) == expected


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200))
def test_effective_sample_size_bounds(raw):
    w = np.asarray(raw)
    if w.sum() == 0:
        w = np.ones_like(w)
    w = w / w.sum()
    n = effective_sample_size(w)
    assert 1 <= n <= w.size


def test_one_hot_resample():
    states = np.arange(30.0).reshape(10, 3)
    w = np.zeros(10)
    w[6] = 1.0
    out, weights = multinomial_resample(states, w, rng=np.random.default_rng(0))
    assert np.all(out == states[6])
    assert np.all(weights == 0.1)


def test_uniform_multiplicities_follow_binomial():
    n, reps = 8, 100_000
    states = np.arange(n, dtype=float)
    rng = np.random.default_rng(11)
    mult0 = np.empty(reps, int)
    for r in range(reps):
        out, _ = multinomial_resample(states, np.full(n, 1 / n), rng=rng)
        mult0[r] = np.count_nonzero(out == 0)
    observed = np.bincount(mult0, minlength=n + 1)
    expected = binom.pmf(np.arange(n + 1), n, 1 / n) * reps
    # pool the sparse upper tail
    keep = 4
    obs = np.append(observed[:keep], observed[keep:].sum())
    exp = np.append(expected[:keep], expected[keep:].sum())
    assert chisquare(obs, exp).pvalue > 0.01
    assert mult0.mean() == pytest.approx(1.0, abs=0.01)


def test_covariances_move_with_states():
    rng = np.random.default_rng(2)
    states = rng.normal(size=(50, 3))
    covs = np.array([np.eye(3) * i for i in range(50)])
    states[:, 0] = np.arange(50)
    w = rng.dirichlet(np.ones(50))
    s2, c2, _ = multinomial_resample(states, w, covs, rng=rng)
    for s, c in zip(s2, c2):
        assert c[0, 0] == s[0]


def test_all_underflow_resets_to_uniform():
    inc = Incidents()
    w = normalize_log_weights(np.full(4, -np.inf), inc)
    assert w.tolist() == [0.25] * 4 and inc.weight_resets == 1


def test_circular_mean_across_wrap():
    est = weighted_estimate(np.array([[0, 0, 0.1], [2, 0, TWO_PI - 0.1]]), np.array([0.5, 0.5]))
    assert est.x == 1.0
    assert min(est.phi, TWO_PI - est.phi) < 1e-12


# --- MKF --------------------------------------------------------------------

def test_default_P0_ten_by_ten():
    env = Environment(10, 10, (), ((1, 1),))
    np.testing.assert_allclose(np.diag(default_P0(env)), [100 / 12, 100 / 12, 3.2899], atol=1e-4)


def test_mkf_init(env):
    s = mkf_init(env, 40, rng=np.random.default_rng(0))
    assert np.all(s.weights == 1 / 40)
    assert np.all(s.covariances == s.covariances[0])
    np.testing.assert_array_equal(s.covariances[0], default_P0(env))


def test_single_kalman_particle_equals_ekf(env):
    cfg = FilterConfig(N=1, k_measure=4, roughen=False)
    mean0 = np.array([3.0, 4.0, 0.2])
    P0 = np.diag([0.3, 0.3, 0.1])
    kset = KalmanParticleSet([mean0], [1.0], [P0])
    belief = GaussianBelief(mean0, P0)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    truth = mean0.copy()
    for t in range(25):
        c = Control(0.2, 0.15 if t % 5 == 0 else 0.0)
        truth = motion_step(truth, c)
        z = measure(env, truth, 4, np.random.default_rng(t).normal(0, 0.1, 4))
        kset, est, _ = mkf_step(kset, c, z, env, cfg, r1)
        belief = ekf_update(ekf_predict(belief, c, cfg.M, cfg.q_samples, r2), z, env, cfg.R)
        np.testing.assert_allclose(kset.states[0], belief.mean, atol=1e-12)
        np.testing.assert_allclose(kset.covariances[0], belief.P, atol=1e-12)
        np.testing.assert_allclose(est, belief.mean, atol=1e-12)


def test_exact_particle_takes_all_weight(env):
    cfg = FilterConfig(N=3, k_measure=3, M=TINY_M, R=1e-8 * np.eye(3), roughen=False)
    truth = np.array([2.0, 2.0, 0.3])
    states = np.array([[2.0, 2.0, 0.3], [7.5, 2.0, 0.3], [2.0, 7.5, 0.3]])
    kset = KalmanParticleSet(states, np.full(3, 1 / 3), np.broadcast_to(1e-10 * np.eye(3), (3, 3, 3)))
    c = Control(0.1, 0.0)
    truth = motion_step(truth, c)
    out, est, neff = mkf_step(kset, c, measure(env, truth, 3), env, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(est, truth, atol=1e-6)
    assert neff == 1


def test_symmetric_twins_get_equal_weights():
    spec = SymmetrySpec(2, 1, 4.0, 4.0, (), ((1.0, 1.0), (3.0, 1.5), (2.0, 3.0)))
    env = generate_symmetric_world(spec)
    cfg = FilterConfig(N=2, k_measure=3, M=np.zeros((2, 2)), resample_every_step=False,
                       neff_threshold_fraction=0.01, roughen=False)
    states = np.array([[2.0, 2.0, 0.5], [6.0, 2.0, 0.5]])
    kset = KalmanParticleSet(states, [0.5, 0.5], np.broadcast_to(np.diag([0.25, 0.25, 0.5]), (2, 3, 3)))
    z = measure(env, (2.25, 1.75, 0.0), 3)
    out, _, _ = mkf_step(kset, Control(0.0, 0.0), z, env, cfg, np.random.default_rng(0))
    assert out.weights[0] == out.weights[1] == 0.5
    np.testing.assert_array_equal(out.states[1] - out.states[0], [4.0, 0.0, 0.0])


def test_roughen_noiseless_is_identity(env):
    s = mkf_init(env, 30, rng=np.random.default_rng(0))
    out = roughen(s, np.zeros((2, 2)), np.random.default_rng(1))
    np.testing.assert_array_equal(out.states, s.states)
    np.testing.assert_array_equal(out.weights, s.weights)


def test_roughen_displacement_half_normal(env):
    s = mkf_init(env, 200_000, rng=np.random.default_rng(0))
    s.weights[:] = np.random.default_rng(5).dirichlet(np.ones(len(s)))
    M = 4 * M0
    out = roughen(s, M, np.random.default_rng(1))
    disp = np.hypot(*(out.states[:, :2] - s.states[:, :2]).T)
    assert disp.mean() == pytest.approx(math.sqrt(M[0, 0]) * math.sqrt(2 / math.pi), rel=0.05)
    np.testing.assert_array_equal(out.weights, s.weights)
    np.testing.assert_array_equal(out.covariances, s.covariances)


# --- invariants under random steps -------------------------------------------

def _check_set(s, n):
    assert len(s) == n
    assert np.all(s.weights >= 0)
    assert abs(s.weights.sum() - 1) < 1e-9
    assert np.all((s.states[:, 2] >= 0) & (s.states[:, 2] < TWO_PI))
    if isinstance(s, KalmanParticleSet):
        P = s.covariances
        assert np.abs(P - np.swapaxes(P, 1, 2)).max() < 1e-9
        assert np.linalg.eigvalsh(P).min() >= -1e-9


@given(st.sampled_from(["PF", "MKF"]), st.integers(1, 60), st.integers(0, 2**32 - 1),
       st.booleans(), st.floats(0.25, 4.0))
@settings(max_examples=60, deadline=None)
def test_random_steps_keep_invariants(kind, n, seed, every, scale):
    env = Environment(10, 10, ((6, 6, 7, 8),), ((1, 1), (9, 1), (1, 9), (9, 9), (5, 5), (3, 6), (7, 3)))
    rng = np.random.default_rng(seed)
    cfg = FilterConfig(N=n, k_measure=int(rng.integers(1, 6)), M=scale * M0, resample_every_step=every)
    s = pf_init(env, n, rng) if kind == "PF" else mkf_init(env, n, rng=rng)
    step = pf_step if kind == "PF" else mkf_step
    for _ in range(8):
        truth = np.array([*rng.uniform(0, 10, 2), rng.uniform(0, TWO_PI)])
        z = measure(env, truth, cfg.k_measure, rng.normal(0, 0.5, cfg.k_measure))
        s, est, neff = step(s, (rng.uniform(0, 0.5), rng.uniform(-1, 1)), z, env, cfg, rng)
        _check_set(s, n)
        assert 1 <= neff <= n
        assert np.all(np.isfinite(est))


@pytest.mark.parametrize("kwargs", [dict(N=0), dict(q_samples=1), dict(k_measure=3, R=np.eye(2)),
                                    dict(neff_threshold_fraction=0.0)])
def test_bad_config(kwargs):
    with pytest.raises(ValueError):
        FilterConfig(**kwargs)
