"""Scenario 1: maneuvering target with linear position observations.

The target switches between a quiet Wiener-process-velocity (WPV) regime and
a noisy Wiener-process-acceleration (WPA) regime on a fixed schedule. State
layout ``[x, y, vx, vy, ax, ay]``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from stf.baselines.gaussian import (
    GaussianBelief,
    LinearGaussianModel,
    run_filter,
    smooth_records,
    wiener_acceleration,
    wiener_velocity,
)
from stf.baselines.imm import ImmBank, imm_forecast, imm_smooth, run_imm
from stf.inference import StfConfig, run_stf
from stf.observation import Observation

WPV, WPA = 0, 1


@dataclass(frozen=True)
class Scenario1Config:
    dt: float = 0.1
    steps: int = 200
    q_wpv: float = 0.1
    q_wpa: float = 1.0
    # 1-based inclusive step ranges simulated with WPA; all others use WPV
    wpa_steps: tuple[tuple[int, int], ...] = ((51, 70), (121, 150))
    x0: tuple[float, ...] = (0.0, 0.0, 0.0, -1.0, 0.0, 0.0)
    p0: tuple[float, ...] = (0.1, 0.1, 0.1, 0.1, 0.5, 0.5)
    obs_var: float = 0.1
    mode_prior: tuple[float, float] = (0.9, 0.1)
    transition: tuple[tuple[float, float], tuple[float, float]] = ((0.98, 0.02), (0.02, 0.98))
    stf: StfConfig = StfConfig(window_count=10, order=2, delay_steps=5, horizon_steps=5, nominal_interval=0.1)

    def __post_init__(self):
        if self.steps < 2 or self.dt <= 0:
            raise ValueError("need steps >= 2 and dt > 0")
        for lo, hi in self.wpa_steps:
            if not (1 <= lo <= hi <= self.steps):
                raise ValueError(f"WPA interval ({lo}, {hi}) outside 1..{self.steps}")

    def schedule(self) -> np.ndarray:
        """Model index for each 1-based step (array position 0 is step 1)."""
        s = np.full(self.steps, WPV, dtype=int)
        for lo, hi in self.wpa_steps:
            s[lo - 1 : hi] = WPA
        return s

    def times(self) -> np.ndarray:
        return np.arange(self.steps) * self.dt


def truth_models(config: Scenario1Config):
    """6-state (F, Q) pairs for the two regimes; WPV zeroes the acceleration."""
    Fv, Qv = wiener_velocity(config.q_wpv, config.dt)
    Fa, Qa = wiener_acceleration(config.q_wpa, config.dt)
    F6 = np.zeros((6, 6))
    Q6 = np.zeros((6, 6))
    F6[:4, :4] = Fv
    Q6[:4, :4] = Qv
    return (F6, Q6), (Fa, Qa)


def _noise_factor(Q):
    w, V = np.linalg.eigh(Q)
    return V * np.sqrt(np.clip(w, 0, None))


def simulate_truth(config: Scenario1Config, rng: np.random.Generator) -> np.ndarray:
    """``(steps, 6)`` states; the first row is ``x0`` and step ``s`` is
    generated from step ``s-1`` with the regime scheduled for ``s``."""
    models = truth_models(config)
    factors = [_noise_factor(Q) for _, Q in models]
    sched = config.schedule()
    X = np.empty((config.steps, 6))
    X[0] = config.x0
    for k in range(1, config.steps):
        F, _ = models[sched[k]]
        X[k] = F @ X[k - 1] + factors[sched[k]] @ rng.standard_normal(6)
    return X


def observe(config: Scenario1Config, states: np.ndarray, rng: np.random.Generator) -> list[list[Observation]]:
    noise = rng.standard_normal((len(states), 2)) * np.sqrt(config.obs_var)
    ys = states[:, :2] + noise
    return [[Observation(t, 0, y)] for t, y in zip(config.times(), ys)]


def filter_models(config: Scenario1Config):
    R = config.obs_var * np.eye(2)
    Fv, Qv = wiener_velocity(config.q_wpv, config.dt)
    Fa, Qa = wiener_acceleration(config.q_wpa, config.dt)
    Hv = np.hstack([np.eye(2), np.zeros((2, 2))])
    Ha = np.hstack([np.eye(2), np.zeros((2, 4))])
    wpv = LinearGaussianModel(Fv, Qv, Hv, R, index=range(4))
    wpa = LinearGaussianModel(Fa, Qa, Ha, R, index=range(6))
    return wpv, wpa


def prior(config: Scenario1Config, dim: int = 6) -> GaussianBelief:
    return GaussianBelief(np.array(config.x0[:dim]), np.diag(config.p0[:dim]))


def _ys(scans):
    return np.array([scan[0].value for scan in scans])


# -- estimator families -------------------------------------------------------------
# Each returns {name: (estimates (steps, 2), seconds)}.


def kalman_family(config: Scenario1Config, scans, rng=None, truth=None) -> dict:
    ys = _ys(scans)
    out = {}
    for tag, model in zip(("wpv", "wpa"), filter_models(config)):
        t0 = time.perf_counter()
        recs = run_filter(prior(config, model.dim), model, ys, "kf")
        t1 = time.perf_counter()
        sm = smooth_records(recs)
        t2 = time.perf_counter()
        out[f"kf_{tag}"] = (np.array([r.filtered.mean[:2] for r in recs]), t1 - t0)
        out[f"ks_{tag}"] = (np.array([b.mean[:2] for b in sm]), t2 - t0)
    return out


def imm_family(config: Scenario1Config, scans, rng=None, truth=None) -> dict:
    ys = _ys(scans)
    wpv, wpa = filter_models(config)
    bank = ImmBank((wpv, wpa), np.array(config.transition), np.array(config.mode_prior), "kf")
    beliefs = [prior(config, 4), prior(config, 6)]
    t0 = time.perf_counter()
    recs = run_imm(bank, beliefs, ys)
    t1 = time.perf_counter()
    sm = imm_smooth(recs, bank)
    t2 = time.perf_counter()
    h = config.stf.horizon_steps
    fc = []
    for i, r in enumerate(recs):
        if i < h:
            fc.append(r.combined.mean[:2])
        else:
            src = recs[i - h]
            fc.append(imm_forecast(bank.with_probabilities(src.probabilities), src.beliefs, h).mean[:2])
    t3 = time.perf_counter()
    return {
        "imm": (np.array([r.combined.mean[:2] for r in recs]), t1 - t0),
        "imm_smoother": (np.array([b.mean[:2] for b in sm]), t2 - t0),
        "imm_forecast": (np.array(fc), (t1 - t0) + (t3 - t2)),
    }


def fitting_family(config: Scenario1Config, scans, rng=None, truth=None) -> dict:
    """Cold-start sliding-window line fits on the position observations.

    Steps before the first fit report the observation itself.
    """
    ys = _ys(scans)
    t0 = time.perf_counter()
    run = run_stf(scans, config.stf, fallback=ys)
    online = run.online()
    t1 = time.perf_counter()
    delayed = run.delayed()
    t2 = time.perf_counter()
    smoothed = run.smoothed(delayed)
    t3 = time.perf_counter()
    forecast = run.forecast()
    t4 = time.perf_counter()
    fit_time = t1 - t0
    return {
        "fit_online": (online, fit_time),
        "fit_delayed": (delayed, fit_time + (t2 - t1)),
        "fit_smoothed": (smoothed, fit_time + (t3 - t1)),
        "fit_forecast": (forecast, fit_time + (t4 - t3)),
    }


def truth_family(config: Scenario1Config, scans, rng=None, truth=None) -> dict:
    return {"truth": (np.asarray(truth)[:, :2].copy(), 0.0)}


FAMILIES = {
    "kalman": (kalman_family, ("kf_wpv", "ks_wpv", "kf_wpa", "ks_wpa")),
    "imm": (imm_family, ("imm", "imm_smoother", "imm_forecast")),
    "fitting": (fitting_family, ("fit_online", "fit_delayed", "fit_smoothed", "fit_forecast")),
    "truth": (truth_family, ("truth",)),
}


def position(states: np.ndarray) -> np.ndarray:
    return np.asarray(states)[:, :2]
