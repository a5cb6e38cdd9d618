"""Sampling-importance-resampling particle filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ParticleSet:
    particles: np.ndarray  # (N, D)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        X = np.array(self.particles, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        w = np.array(self.weights, dtype=float)
        if len(X) < 2 or w.shape != (len(X),):
            raise ValueError("need at least 2 particles with one weight each")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise ValueError("particle weights must be nonnegative and sum to 1")
        object.__setattr__(self, "particles", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, particles) -> ParticleSet:
        X = np.asarray(particles, dtype=float)
        return cls(X, np.full(len(X), 1.0 / len(X)))

    @property
    def n(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset, N strata)."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def heavy_tail_weights(y: float, y_pred: np.ndarray) -> np.ndarray:
    """Residual-normalized likelihood ``exp(-e_i^2 / max_j e_j^2)``.

    Particles whose prediction is not finite get zero weight. When every
    residual is (numerically) zero the weights are uniform.
    """
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    e2 = (y - y_pred) ** 2
    finite = np.isfinite(e2)
    if not finite.any():
        return np.full(len(e2), 1.0 / len(e2))
    denom = e2[finite].max()
    if denom < DEGENERATE_TOL:
        w = finite.astype(float)
    else:
        w = np.where(finite, np.exp(-np.where(finite, e2, 0.0) / denom), 0.0)
    return w / w.sum()


def gaussian_weights(R: float) -> Callable[[float, np.ndarray], np.ndarray]:
    """Standard Gaussian likelihood weights (for sanity checks against a KF)."""

    def weights(y, y_pred):
        e2 = (y - np.asarray(y_pred, dtype=float).ravel()) ** 2
        logw = np.where(np.isfinite(e2), -0.5 * e2 / R, -np.inf)
        w = np.exp(logw - logw.max())
        return w / w.sum()

    return weights


class PfStep(NamedTuple):
    particles: ParticleSet  # resampled, uniform weights
    estimate: np.ndarray  # weighted mean before resampling
    weights: np.ndarray  # normalized weights before resampling


def pf_step(
    particles: ParticleSet,
    propagate: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    measure: Callable[[np.ndarray], np.ndarray],
    y: float,
    rng: np.random.Generator,
    likelihood: Callable[[float, np.ndarray], np.ndarray] = heavy_tail_weights,
) -> PfStep:
    """Propagate, weight, normalize and systematically resample."""
    X = propagate(particles.particles, rng)
    w = likelihood(y, measure(X)) * particles.weights
    w = w / w.sum()
    finite_rows = np.all(np.isfinite(X), axis=1)
    estimate = w[finite_rows] @ X[finite_rows] / w[finite_rows].sum()
    idx = systematic_resample(w, rng)
    return PfStep(ParticleSet.uniform(X[idx]), estimate, w)
