import numpy as np
import pytest

from stf.baselines.particle import ParticleSet, gaussian_weights, heavy_tail_weights, pf_step, systematic_resample


def test_heavy_tail_weight_factors():
    y_pred = np.array([1.0, 2.0, 3.0])
    w = heavy_tail_weights(1.0, y_pred)
    raw = w / w[0]
    assert raw[0] == 1.0
    assert raw[2] == pytest.approx(np.exp(-1.0))
    assert raw[1] == pytest.approx(np.exp(-0.25))


def test_degenerate_denominator_uniform():
    np.testing.assert_allclose(heavy_tail_weights(2.0, np.full(7, 2.0)), np.full(7, 1 / 7))
    np.testing.assert_allclose(heavy_tail_weights(2.0, np.full(4, 5.0)), np.full(4, 0.25))


def test_nonfinite_predictions_get_zero_weight():
    w = heavy_tail_weights(0.0, np.array([0.0, np.nan, 1.0]))
    assert w[1] == 0.0 and w.sum() == pytest.approx(1.0)


def test_resampling_preserves_count_and_mean():
    rng = np.random.default_rng(0)
    X = rng.normal(size=50)
    w = rng.random(50)
    w /= w.sum()
    target = w @ X
    trials = 10_000
    means = np.empty(trials)
    for i in range(trials):
        idx = systematic_resample(w, rng)
        assert idx.size == 50
        means[i] = X[idx].mean()
    se = means.std(ddof=1) / np.sqrt(trials)
    assert abs(means.mean() - target) < 3 * se


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((1, 2)), np.ones(1))
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 1)), np.array([0.5, 0.5, 0.5]))


def test_gaussian_pf_tracks_kf_mean():
    rng = np.random.default_rng(3)
    n = 20000
    ps = ParticleSet.uniform(rng.normal(0.0, 1.0, (n, 1)))
    step = pf_step(ps, lambda X, r: X, lambda X: X[:, 0], 1.0, rng, gaussian_weights(1.0))
    assert step.estimate[0] == pytest.approx(0.5, abs=0.03)
    assert step.particles.n == n
