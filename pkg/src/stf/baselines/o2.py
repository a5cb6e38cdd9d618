"""Observation-only (O2) altitude inference for the vertically falling target.

Each range measurement is projected straight into altitude by
triangulation, ``h = H +/- sqrt(y^2 - M^2)``. The branch starts positive
(target above the radar) and switches once to negative when continuing on
the positive branch would contradict a steadily falling target.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np


class SignState(NamedTuple):
    """Branch bookkeeping carried from one measurement to the next."""

    negative: bool = False
    prev_altitude: float | None = None
    prev_speed: float | None = None
    dt: float = 1.0


class O2Estimate(NamedTuple):
    altitude: float
    state: SignState
    clamped: bool


def o2_project(y: float, M: float, H: float, negative: bool = False) -> tuple[float, bool]:
    """Triangulated altitude on a fixed branch; ranges below ``M`` are clamped."""
    clamped = y < M
    leg = math.sqrt(max(y * y - M * M, 0.0))
    return (H - leg if negative else H + leg), clamped


def o2_triangulate(y: float, M: float, H: float, state: SignState | None = None) -> O2Estimate:
    """Altitude from one range with the once-only sign switch.

    While on the positive branch the candidate altitudes on both branches are
    compared with a constant-speed extrapolation of the previous estimates
    (a falling target that does not slow down would be at or below it); the
    switch happens when the negative branch is the closer one.
    """
    state = state or SignState()
    h_pos, clamped = o2_project(y, M, H, negative=False)
    negative = state.negative
    if not negative and state.prev_altitude is not None:
        h_neg = 2 * H - h_pos
        speed = state.prev_speed if state.prev_speed is not None else 0.0
        expected = state.prev_altitude - max(speed, 0.0) * state.dt
        if h_pos >= state.prev_altitude or abs(h_neg - expected) < abs(h_pos - expected):
            negative = True
    h = 2 * H - h_pos if negative else h_pos
    speed = None
    if state.prev_altitude is not None:
        speed = (state.prev_altitude - h) / state.dt
    return O2Estimate(h, SignState(negative, h, speed, state.dt), clamped)


def mc_bias(g: Callable[[np.ndarray], np.ndarray], y, R, n_samples: int, rng: np.random.Generator):
    """Monte-Carlo estimate of ``E[g(y + v)] - g(y)`` with ``v ~ N(0, R)``."""
    y = np.asarray(y, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    v = rng.multivariate_normal(np.zeros(R.shape[0]), R, size=n_samples) if R.shape[0] > 1 else (
        rng.standard_normal((n_samples, 1)) * math.sqrt(R[0, 0])
    )
    samples = np.array([np.asarray(g(y + vi.reshape(y.shape)), dtype=float) for vi in v])
    return samples.mean(axis=0) - np.asarray(g(y), dtype=float)


def o2_debias(g: Callable, y, R, n_samples: int = 100, rng: np.random.Generator | None = None):
    """Projection ``g(y)`` corrected by its Monte-Carlo bias estimate."""
    rng = rng if rng is not None else np.random.default_rng()
    return np.asarray(g(np.asarray(y, dtype=float)), dtype=float) - mc_bias(g, y, R, n_samples, rng)
