import math

import numpy as np
import pytest

from stf.baselines.o2 import SignState, mc_bias, o2_debias, o2_project, o2_triangulate

M = H = 1e5


def test_positive_branch():
    h, clamped = o2_project(math.sqrt(5) * 1e5, M, H)
    assert h == pytest.approx(3e5)
    assert not clamped


def test_zero_leg_and_clamp():
    assert o2_project(M, M, H)[0] == H
    h, clamped = o2_project(0.9 * M, M, H)
    assert h == H and clamped


def test_branch_symmetry():
    y = 1.3e5
    hp, _ = o2_project(y, M, H)
    hn, _ = o2_project(y, M, H, negative=True)
    assert hp + hn == pytest.approx(2 * H)
    assert hp - H == pytest.approx(math.sqrt(y * y - M * M))


def test_switch_happens_once_when_range_grows():
    # falling target crossing the radar altitude: ranges shrink then grow
    hs = np.linspace(1.6e5, 0.4e5, 13)
    ys = np.sqrt(M**2 + (hs - H) ** 2)
    state = SignState()
    out = []
    for y in ys:
        est = o2_triangulate(float(y), M, H, state)
        state = est.state
        out.append(est.altitude)
    np.testing.assert_allclose(out, hs, rtol=1e-9)
    assert state.negative


def test_linear_g_bias_small():
    rng = np.random.default_rng(0)
    R = 4.0
    b = mc_bias(lambda y: 3.0 * y + 1.0, np.array([2.0]), R, 100, rng)
    assert abs(b[0]) < 3 * (3.0 * math.sqrt(R) / math.sqrt(100))


def test_square_bias_matches_variance():
    rng = np.random.default_rng(1)
    b = mc_bias(lambda y: y**2, np.array([1.0]), 0.04, 1_000_000, rng)
    assert b[0] == pytest.approx(0.04, rel=0.05)


def test_debias_default_sample_count():
    import inspect

    assert inspect.signature(o2_debias).parameters["n_samples"].default == 100
    v = o2_debias(lambda y: y**2, np.array([1.0]), 0.04, rng=np.random.default_rng(2))
    assert v.shape == (1,)
