import numpy as np
import pytest

from stf.baselines.gaussian import GaussianBelief, LinearGaussianModel, run_filter, smooth_records, wiener_velocity
from stf.baselines.imm import ImmBank, imm_forecast, imm_smooth, imm_step, run_imm

TR = np.array([[0.98, 0.02], [0.02, 0.98]])


def cv_model(q=0.1, R=0.1):
    F, Q = wiener_velocity(q, 0.1, axes=1)
    return LinearGaussianModel(F, Q, [[1.0, 0.0]], [[R]])


def test_identical_models_probability_update():
    m = cv_model()
    bank = ImmBank((m, m), TR, np.array([0.9, 0.1]))
    b = GaussianBelief([0.0, 1.0], np.eye(2))
    step = imm_step(bank, [b, b], [0.2])
    np.testing.assert_allclose(step.bank.probabilities, [0.884, 0.116], atol=1e-12)


def test_zero_likelihood_collapses_probability():
    a = cv_model(R=0.01)
    b = LinearGaussianModel(a.F, a.Q, a.H, [[0.01]])
    bank = ImmBank((a, b), TR, np.array([0.5, 0.5]))
    far = GaussianBelief([1e4, 0.0], 1e-6 * np.eye(2))
    near = GaussianBelief([0.0, 0.0], 1e-6 * np.eye(2))
    step = imm_step(bank, [near, far], [0.0], predict=False)
    assert step.bank.probabilities[1] < 1e-100


def test_forecast_cv():
    m = LinearGaussianModel(*wiener_velocity(0.0, 0.1, axes=1), [[1.0, 0.0]], [[1.0]])
    bank = ImmBank((m,), np.array([[1.0]]), np.array([1.0]))
    out = imm_forecast(bank, [GaussianBelief([0.0, 1.0], np.eye(2))], 5)
    assert out.mean[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        imm_forecast(bank, [GaussianBelief([0.0, 1.0], np.eye(2))], 0)


def test_identical_models_reduce_to_rts():
    rng = np.random.default_rng(0)
    m = cv_model()
    ys = rng.normal(size=(30, 1)).cumsum(axis=0) * 0.1
    prior = GaussianBelief([0.0, 0.0], np.eye(2))
    bank = ImmBank((m, m), TR, np.array([0.9, 0.1]))
    recs = run_imm(bank, [prior, prior], ys)
    sm = imm_smooth(recs, bank)
    ref_f = run_filter(prior, m, ys)
    ref_s = smooth_records(ref_f)
    for r, f in zip(recs, ref_f):
        np.testing.assert_allclose(r.combined.mean, f.filtered.mean, atol=1e-10)
    for s, r in zip(sm, ref_s):
        np.testing.assert_allclose(s.mean, r.mean, atol=1e-8)
        np.testing.assert_allclose(s.covariance, r.covariance, atol=1e-8)


def test_bank_validation():
    m = cv_model()
    with pytest.raises(ValueError):
        ImmBank((m, m), np.eye(3), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        ImmBank((m, m), TR, np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        ImmBank((m, m), TR, np.array([0.5, 0.5]), "magic")


def test_mixed_dimension_bank_probabilities_valid():
    from stf.scenarios import linear

    cfg = linear.Scenario1Config()
    rng = np.random.default_rng(1)
    truth = linear.simulate_truth(cfg, rng)
    scans = linear.observe(cfg, truth, rng)
    wpv, wpa = linear.filter_models(cfg)
    bank = ImmBank((wpv, wpa), TR, np.array([0.9, 0.1]))
    recs = run_imm(bank, [linear.prior(cfg, 4), linear.prior(cfg, 6)], [s[0].value for s in scans])
    for r in recs:
        assert r.probabilities.sum() == pytest.approx(1.0)
        assert r.combined.dim == 6
    # the WPA model gains weight during the scheduled maneuvers
    sched = cfg.schedule()
    mu = np.array([r.probabilities[1] for r in recs])
    assert mu[sched == 1].mean() > mu[sched == 0].mean()
