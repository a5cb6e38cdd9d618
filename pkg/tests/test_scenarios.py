import math

import numpy as np
import pytest

from stf.fitting import ResidualSpec
from stf.inference import run_stf
from stf.observation import BearingModel, Observation, RangeModel
from stf.scenarios import ballistic, bearing, linear
from stf.scenarios.common import observations_csv, rk4_integrate, rk4_step, rmse, truth_csv
from stf.trajectory import BasisSpec, FotParams


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        cols.append((f(x + e) - f(x - e)) / (2 * e[i]))
    return np.column_stack(cols)


def assert_jacobian_close(J, J_fd, rel=1e-4):
    scale = np.maximum(np.abs(J_fd), np.abs(J_fd).max() * 1e-6)
    assert np.all(np.abs(J - J_fd) <= rel * scale + 1e-12)


# -- common ---------------------------------------------------------------------


def test_rmse_examples():
    truth = np.zeros((4, 2))
    assert rmse(truth, truth)[1] == 0.0
    per, _ = rmse(np.full((4, 1), 3.0), np.zeros((4, 1)))
    np.testing.assert_allclose(per, 3.0)
    per, _ = rmse(np.array([[[3.0]], [[4.0]]]), np.zeros((1, 1)))
    assert per[0] == pytest.approx(5 / math.sqrt(2))
    with pytest.raises(ValueError):
        rmse(np.zeros((3, 2)), np.zeros((4, 2)))


def test_rk4_fixed_point_and_constant_field():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(rk4_step(x, lambda z: np.zeros_like(z), 0.1), x)
    np.testing.assert_allclose(rk4_step(x, lambda z: np.array([3.0, -1.0]), 0.5), x + 0.5 * np.array([3.0, -1.0]))
    with pytest.raises(ValueError):
        rk4_step(x, lambda z: z, 0.0)


def test_rk4_convergence_ratio_decay():
    exact = math.exp(-2.0)
    e1 = abs(rk4_integrate(np.array([1.0]), lambda z: -z, 2.0, 8)[0] - exact)
    e2 = abs(rk4_integrate(np.array([1.0]), lambda z: -z, 2.0, 16)[0] - exact)
    assert 12 <= e1 / e2 <= 20


def test_rk4_convergence_ratio_ballistic():
    cfg = ballistic.Scenario3Config()
    x = ballistic.simulate_truth(cfg)[20]
    ref = ballistic.propagate(x, cfg, 1.0, 4096)
    e1 = abs(ballistic.propagate(x, cfg, 1.0, 4)[0] - ref[0])
    e2 = abs(ballistic.propagate(x, cfg, 1.0, 8)[0] - ref[0])
    assert 12 <= e1 / e2 <= 20


def test_rk4_64_vs_1024_substeps():
    cfg = ballistic.Scenario3Config()
    for x in [np.array(cfg.x0, dtype=float), *ballistic.simulate_truth(cfg)[::5]]:
        a = ballistic.propagate(x, cfg)
        b = ballistic.propagate(x, cfg, substeps=1024)
        assert abs(a[0] - b[0]) < 1e-3


def test_csv_exports():
    scans = [[Observation(0.0, 0, [1.0, 2.0])], [Observation(0.1, 1, [3.0, 4.0])]]
    text = observations_csv(scans)
    assert text.splitlines()[0] == "step,time,sensor_id,dim0,dim1"
    assert text.splitlines()[2] == "1,0.1,1,3.0,4.0"
    t = truth_csv([0.0, 1.0], [[5.0], [6.0]])
    assert t.splitlines()[1] == "0,0.0,-1,5.0"


# -- scenario 1 ------------------------------------------------------------------


def test_s1_initial_state_and_schedule():
    cfg = linear.Scenario1Config()
    X = linear.simulate_truth(cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(X[0], [0, 0, 0, -1, 0, 0])
    s = cfg.schedule()
    assert s[:50].sum() == 0 and s[50:70].all() and not s[70:120].any() and s[120:150].all()
    assert cfg.times()[-1] == pytest.approx(19.9)


def test_s1_zero_noise_is_straight_line():
    cfg = linear.Scenario1Config(q_wpv=0.0, q_wpa=0.0)
    X = linear.simulate_truth(cfg, np.random.default_rng(0))
    np.testing.assert_allclose(X[:, 1], -cfg.times(), atol=1e-12)
    np.testing.assert_allclose(X[:, 0], 0.0)


def test_s1_wpa_noise_covariance():
    cfg = linear.Scenario1Config()
    _, (F, Q) = linear.truth_models(cfg)
    L = linear._noise_factor(Q)
    draws = np.random.default_rng(0).standard_normal((100_000, 6)) @ L.T
    C = np.cov(draws.T)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    assert np.all(np.abs(C - Q) <= 0.02 * scale)


def test_s1_observation_noise_free():
    cfg = linear.Scenario1Config(obs_var=1e-300)
    X = linear.simulate_truth(cfg, np.random.default_rng(0))
    scans = linear.observe(cfg, X, np.random.default_rng(1))
    np.testing.assert_allclose([s[0].value for s in scans], X[:, :2], atol=1e-140)


def test_s1_bad_schedule():
    with pytest.raises(ValueError):
        linear.Scenario1Config(wpa_steps=((190, 210),))


# -- scenario 2 ------------------------------------------------------------------


def test_bearing_example():
    th = bearing.bearings(bearing.SENSORS, np.array([1.0, 0.0]))
    assert th[0] == pytest.approx(math.atan2(-3.5, 1.5))
    assert th[0] == pytest.approx(-1.16590, abs=1e-5)


def test_s2_truth_identical_across_seeds():
    cfg = bearing.Scenario2Config()
    a = bearing.simulate_truth(cfg, np.random.default_rng(1))
    b = bearing.simulate_truth(cfg, np.random.default_rng(2))
    assert a.tobytes() == b.tobytes()


def test_s2_path_stays_in_sensor_rectangle_and_turns_on_schedule():
    cfg = bearing.Scenario2Config()
    X = bearing.simulate_truth(cfg)
    assert X[:, 0].min() > -0.5 and X[:, 0].max() < 7.0
    assert X[:, 1].min() > -3.5 and X[:, 1].max() < 3.5
    speed = np.hypot(X[:, 2], X[:, 3])
    np.testing.assert_allclose(speed, cfg.speed, atol=1e-12)
    heading = np.unwrap(np.arctan2(X[:, 3], X[:, 2]))
    t = cfg.times()
    straight = (t < 6 - 1e-9) | ((t >= 8.1 - 1e-9) & (t < 13 - 1e-9)) | (t >= 15.1 - 1e-9)
    assert np.ptp(np.diff(heading)[straight[:-1] & straight[1:]]) < 1e-12
    assert abs(heading[80] - heading[60] - math.pi) < 1e-9


def test_ct_jacobian_vs_fd():
    for x in ([1.0, 2.0, 0.7, -0.3, 0.9], [0.0, 0.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.2, 0.5, -1.3]):
        J = bearing.ct_jacobian(np.array(x), 0.1)
        # a larger step keeps (1 - cos(w dt)) / w free of cancellation near w = 0
        assert_jacobian_close(J, fd_jacobian(lambda z: bearing.ct_transition(z, 0.1), x, h=1e-4))


def test_bearing_jacobians_vs_fd():
    p = np.array([1.3, 0.4])
    J = bearing.bearings_jacobian(bearing.SENSORS, p, 2)
    assert_jacobian_close(J, fd_jacobian(lambda z: bearing.bearings(bearing.SENSORS, z), p))
    model = BearingModel(bearing.SENSORS)
    for i in range(4):
        Jm = model.jacobian(p[None], np.array([i]))[0]
        assert_jacobian_close(Jm, fd_jacobian(lambda z: model(z, i), p))


def test_s2_fitting_family_runs():
    cfg = bearing.Scenario2Config()
    truth = bearing.simulate_truth(cfg)
    scans = bearing.observe(cfg, truth, np.random.default_rng(0))
    out = bearing.fitting_family(cfg, scans, truth=truth)
    for name in ("fit_online", "fit_delayed", "fit_smoothed"):
        est, secs = out[name]
        assert est.shape == (cfg.steps, 2) and np.all(np.isfinite(est)) and secs >= 0
    np.testing.assert_allclose(out["fit_online"][0][:2], truth[:2, :2], atol=1e-12)


# -- scenario 3 ------------------------------------------------------------------


def test_range_example():
    cfg = ballistic.Scenario3Config()
    assert ballistic.slant_range(3e5, cfg) == pytest.approx(math.sqrt(5) * 1e5)
    assert RangeModel(1e5, 1e5)(np.array([3e5]))[0] == pytest.approx(223606.797749979)


def test_s3_coefficient_constant():
    X = ballistic.simulate_truth(ballistic.Scenario3Config())
    np.testing.assert_array_equal(X[:, 2], 1e-3)
    assert np.all(np.diff(X[:, 0]) < 0)


def test_dynamics_and_propagation_jacobians_vs_fd():
    cfg = ballistic.Scenario3Config()
    for x in ballistic.simulate_truth(cfg)[[0, 10, 20]]:
        assert_jacobian_close(ballistic.dynamics_jacobian(x, cfg.gamma), fd_jacobian(lambda z: ballistic.dynamics(z, cfg.gamma), x))
        assert_jacobian_close(ballistic.propagate_jacobian(x, cfg), fd_jacobian(lambda z: ballistic.propagate(z, cfg), x))


def test_range_jacobian_vs_fd():
    model = RangeModel(1e5, 1e5)
    for h in (3e5, 0.5e5):
        J = model.jacobian(np.array([[h]]), np.array([0]))[0]
        assert_jacobian_close(J, fd_jacobian(lambda z: model(z), np.array([h])))


def test_negative_drag_floor():
    x = np.array([5e4, 1e3, -1e-3])
    np.testing.assert_allclose(ballistic.dynamics(x, 5e-5), [-1e3, 0.0, 0.0])


def test_falling_branch_mirror():
    fb = ballistic.FallingBranch(1e5)
    fit = FotParams(np.array([[1.3e5, 2e3, 5.0]]), BasisSpec("monomial", 3), 2.0, (0.0, 4.0))
    mir = fb.mirror(fit)
    t = np.linspace(0, 4, 5)
    np.testing.assert_allclose(mir.values(t) + fit.values(t), 2e5)
    chosen = fb(fit)
    assert chosen.values(4.0, deriv=1)[0] <= 0


def test_velocity_fit_noiseless():
    cfg = ballistic.Scenario3Config()
    X = ballistic.simulate_truth(cfg)
    t = cfg.times()
    sl = slice(12, 17)
    alt = FotParams(np.polyfit(t[sl] - t[14], X[sl, 0], 4)[::-1][None, :], BasisSpec("monomial", 5), t[14], (t[12], t[16]))
    vel, c_next = ballistic.ballistic_velocity_and_coeff_fit(alt, t[sl], 1e-3, cfg.gamma)
    np.testing.assert_allclose(vel.values(t[sl])[:, 0], X[sl, 1], rtol=2e-3)
    assert c_next == pytest.approx(1e-3, rel=0.1)


def test_coefficient_division_guard():
    zero = FotParams(np.zeros((1, 3)), BasisSpec("monomial", 3))
    with pytest.raises(ZeroDivisionError):
        ballistic.coefficient_from_velocity(zero, zero, 1.0, 5e-5)


def test_velocity_fit_consistent_with_finite_differences():
    cfg = ballistic.Scenario3Config()
    truth = ballistic.simulate_truth(cfg)
    scans = ballistic.observe(cfg, truth, np.random.default_rng(4))
    ys = np.array([s[0].value[0] for s in scans])
    fallback, _ = ballistic.o2_record(cfg, ys)
    spec = ResidualSpec(RangeModel(cfg.M, cfg.H), projector=ballistic.o2_projector(cfg))
    run = run_stf(scans, cfg.stf, spec, fallback=fallback[:, None], postfit=ballistic.FallingBranch(cfg.H))
    online = run.online()[:, 0]
    speeds, _ = ballistic.velocity_record(cfg, run.fits, cfg.times())
    fd = -np.diff(online) / cfg.interval
    ok = np.isfinite(speeds[1:])
    disc = np.sqrt(np.mean((speeds[1:][ok] - fd[ok]) ** 2))
    alt_rmse = np.sqrt(np.mean((online - truth[:, 0]) ** 2))
    assert disc < 2 * alt_rmse / cfg.interval


def test_s3_families_shapes():
    cfg = ballistic.Scenario3Config(particles=50, debias_samples=10)
    truth = ballistic.simulate_truth(cfg)
    scans = ballistic.observe(cfg, truth, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for mod in ("ekf", "ukf", "pf", "o2", "fitting"):
        fn, names = ballistic.FAMILIES[mod]
        out = fn(cfg, scans, rng=rng, truth=truth)
        for n in names:
            assert out[n][0].shape == (cfg.steps, 1)
