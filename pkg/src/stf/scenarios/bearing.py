"""Scenario 2: deterministic maneuvering target seen by four bearing-only sensors.

The truth path is scripted: unit speed along +x from the origin, a left
U-turn (+pi/2 rad/s) over t in [6, 8), straight flight back, a right U-turn
(-pi/2 rad/s) over t in [13, 15), then straight to the end. The path stays
inside the rectangle spanned by the sensors. Filter state layout
``[x, y, vx, vy]`` (WPV) and ``[x, y, vx, vy, omega]`` (coordinated turn).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from stf.baselines.gaussian import GaussianBelief, GaussianModel, run_filter, smooth_records, wiener_velocity
from stf.baselines.imm import ImmBank, imm_forecast, imm_smooth, run_imm
from stf.fitting import ResidualSpec
from stf.inference import StfConfig, run_stf
from stf.observation import BearingModel, Observation, wrap_angle
from stf.trajectory import FotParams

SENSORS = ((-0.5, 3.5), (-0.5, -3.5), (7.0, -3.5), (7.0, 3.5))
_SMALL_OMEGA = 1e-9
HALF_PI = math.pi / 2


@dataclass(frozen=True)
class Scenario2Config:
    dt: float = 0.1
    steps: int = 200
    sensors: tuple[tuple[float, float], ...] = SENSORS
    noise_var: float = 0.01
    # noise variance the Bayesian filters are told (None: the true value)
    filter_noise_var: float | None = None
    speed: float = 1.0
    # (start, end, turn rate) with the turn applied on [start, end)
    turns: tuple[tuple[float, float, float], ...] = ((6.0, 8.0, HALF_PI), (13.0, 15.0, -HALF_PI))
    x0: tuple[float, ...] = (0.0, 0.0, 1.0, 0.0, 0.0)
    p0: tuple[float, ...] = (10.1, 10.1, 1.1, 1.1, 1.0)
    q_wpv: float = 0.01
    # per-step turn-rate noise variance of the coordinated-turn filter model
    q_turn: float = 0.15
    mode_prior: tuple[float, float] = (0.9, 0.1)
    transition: tuple[tuple[float, float], tuple[float, float]] = ((0.9, 0.1), (0.1, 0.9))
    hot_start_steps: int = 2
    stf: StfConfig = StfConfig(window_count=10, order=2, delay_steps=5, horizon_steps=5, nominal_interval=0.1)

    def __post_init__(self):
        if len(self.sensors) != 4:
            raise ValueError("scenario 2 uses exactly 4 sensors")
        if self.noise_var <= 0 or (self.filter_noise_var is not None and self.filter_noise_var <= 0):
            raise ValueError("bearing noise variance must be positive")

    @property
    def assumed_noise_var(self) -> float:
        return self.noise_var if self.filter_noise_var is None else self.filter_noise_var

    def times(self) -> np.ndarray:
        return np.arange(self.steps) * self.dt

    def turn_rate(self, step: int) -> float:
        """Turn rate applied from step ``step`` to ``step + 1``."""
        t = step * self.dt
        for lo, hi, w in self.turns:
            if lo - 1e-9 <= t < hi - 1e-9:
                return w
        return 0.0


def ct_transition(x: np.ndarray, dt: float) -> np.ndarray:
    """Coordinated-turn motion for states ``[x, y, vx, vy, omega]`` (last axis)."""
    x = np.asarray(x, dtype=float)
    px, py, vx, vy, w = np.moveaxis(x, -1, 0)
    wt = w * dt
    small = np.abs(w) < _SMALL_OMEGA
    w_safe = np.where(small, 1.0, w)
    s = np.where(small, dt, np.sin(wt) / w_safe)
    c = np.where(small, 0.5 * w * dt**2, (1 - np.cos(wt)) / w_safe)
    cw, sw = np.cos(wt), np.sin(wt)
    out = np.stack([px + s * vx - c * vy, py + c * vx + s * vy, cw * vx - sw * vy, sw * vx + cw * vy, w], axis=-1)
    return out


def ct_jacobian(x: np.ndarray, dt: float) -> np.ndarray:
    px, py, vx, vy, w = np.asarray(x, dtype=float)
    J = np.eye(5)
    if abs(w) < _SMALL_OMEGA:
        s, c = dt, 0.0
        ds, dc = 0.0, dt**2 / 2
    else:
        wt = w * dt
        s = math.sin(wt) / w
        c = (1 - math.cos(wt)) / w
        ds = (dt * math.cos(wt) * w - math.sin(wt)) / w**2
        dc = (dt * math.sin(wt) * w - (1 - math.cos(wt))) / w**2
    cw, sw = math.cos(w * dt), math.sin(w * dt)
    J[0, 2], J[0, 3], J[0, 4] = s, -c, ds * vx - dc * vy
    J[1, 2], J[1, 3], J[1, 4] = c, s, dc * vx + ds * vy
    J[2, 2], J[2, 3], J[2, 4] = cw, -sw, -dt * (sw * vx + cw * vy)
    J[3, 2], J[3, 3], J[3, 4] = sw, cw, dt * (cw * vx - sw * vy)
    return J


def simulate_truth(config: Scenario2Config, rng: np.random.Generator | None = None) -> np.ndarray:
    """``(steps, 5)`` deterministic states; ``rng`` is accepted and ignored."""
    X = np.empty((config.steps, 5))
    X[0] = (0.0, 0.0, config.speed, 0.0, config.turn_rate(0))
    for k in range(1, config.steps):
        prev = X[k - 1].copy()
        prev[4] = config.turn_rate(k - 1)
        X[k] = ct_transition(prev, config.dt)
        X[k, 4] = config.turn_rate(k)
    return X


def bearings(sensors, positions: np.ndarray) -> np.ndarray:
    """Bearings (last axis: one per sensor) from planar positions (last axis 2)."""
    S = np.asarray(sensors, dtype=float)
    p = np.asarray(positions, dtype=float)[..., None, :2]
    d = p - S
    return np.arctan2(d[..., 1], d[..., 0])


def bearings_jacobian(sensors, position: np.ndarray, dim: int) -> np.ndarray:
    S = np.asarray(sensors, dtype=float)
    d = np.asarray(position, dtype=float)[:2] - S
    r2 = np.sum(d**2, axis=1)
    H = np.zeros((len(S), dim))
    H[:, 0] = -d[:, 1] / r2
    H[:, 1] = d[:, 0] / r2
    return H


def observe(config: Scenario2Config, states: np.ndarray, rng: np.random.Generator) -> list[list[Observation]]:
    th = bearings(config.sensors, states)
    th = wrap_angle(th + rng.standard_normal(th.shape) * math.sqrt(config.noise_var))
    return [[Observation(t, i, row[i]) for i in range(len(config.sensors))] for t, row in zip(config.times(), th)]


def _bearing_residual(y, y_hat):
    return wrap_angle(np.asarray(y) - np.asarray(y_hat))


def filter_models(config: Scenario2Config):
    R = config.assumed_noise_var * np.eye(len(config.sensors))
    sensors = config.sensors
    dt = config.dt
    Fv, Qv = wiener_velocity(config.q_wpv, dt)
    wpv = GaussianModel(
        lambda x: x @ Fv.T,
        Qv,
        lambda x: bearings(sensors, x),
        R,
        f_jacobian=lambda x: Fv,
        h_jacobian=lambda x: bearings_jacobian(sensors, x, 4),
        residual=_bearing_residual,
        index=range(4),
    )
    ct = GaussianModel(
        lambda x: ct_transition(x, dt),
        np.diag([0.0, 0.0, 0.0, 0.0, config.q_turn]),
        lambda x: bearings(sensors, x),
        R,
        f_jacobian=lambda x: ct_jacobian(x, dt),
        h_jacobian=lambda x: bearings_jacobian(sensors, x, 5),
        residual=_bearing_residual,
        index=range(5),
    )
    return wpv, ct


def prior(config: Scenario2Config, dim: int) -> GaussianBelief:
    return GaussianBelief(np.array(config.x0[:dim]), np.diag(config.p0[:dim]))


def _ys(scans) -> np.ndarray:
    return np.array([[o.value[0] for o in scan] for scan in scans])


# -- estimator families ----------------------------------------------------------------


def _single(config, scans, method):
    wpv, _ = filter_models(config)
    ys = _ys(scans)
    t0 = time.perf_counter()
    recs = run_filter(prior(config, 4), wpv, ys, method)
    t1 = time.perf_counter()
    sm = smooth_records(recs)
    t2 = time.perf_counter()
    return (np.array([r.filtered.mean[:2] for r in recs]), t1 - t0), (np.array([b.mean[:2] for b in sm]), t2 - t0)


def ekf_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    f, s = _single(config, scans, "ekf")
    return {"ekf": f, "eks": s}


def ukf_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    f, s = _single(config, scans, "ukf")
    return {"ukf": f, "uks": s}


def _imm(config, scans, method, forecast: bool):
    wpv, ct = filter_models(config)
    bank = ImmBank((wpv, ct), np.array(config.transition), np.array(config.mode_prior), method)
    ys = _ys(scans)
    t0 = time.perf_counter()
    recs = run_imm(bank, [prior(config, 4), prior(config, 5)], ys)
    t1 = time.perf_counter()
    sm = imm_smooth(recs, bank)
    t2 = time.perf_counter()
    out = {
        f"{method}_imm": (np.array([r.combined.mean[:2] for r in recs]), t1 - t0),
        f"{method}_imm_smoother": (np.array([b.mean[:2] for b in sm]), t2 - t0),
    }
    if forecast:
        h = config.stf.horizon_steps
        fc = []
        for i, r in enumerate(recs):
            if i < h:
                fc.append(r.combined.mean[:2])
            else:
                src = recs[i - h]
                fc.append(imm_forecast(bank.with_probabilities(src.probabilities), src.beliefs, h).mean[:2])
        t3 = time.perf_counter()
        out[f"{method}_imm_forecast"] = (np.array(fc), (t1 - t0) + (t3 - t2))
    return out


def ekf_imm_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    return _imm(config, scans, "ekf", forecast=False)


def ukf_imm_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    return _imm(config, scans, "ukf", forecast=True)


def hot_start_seed(config: Scenario2Config) -> FotParams:
    """Straight line through the known initial position with the initial velocity."""
    x0 = np.asarray(config.x0, dtype=float)
    return FotParams(np.array([[x0[0], x0[2]], [x0[1], x0[3]]]), config.stf.basis, 0.0)


def fitting_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    """Joint four-sensor bearing fits, hot-started from the initial state.

    The first ``hot_start_steps`` outputs come from the seed trajectory.
    """
    seed = hot_start_seed(config)
    times = config.times()
    fallback = np.array([seed.values(t) for t in times])
    spec = ResidualSpec(BearingModel(config.sensors))
    t0 = time.perf_counter()
    run = run_stf(scans, config.stf, spec, fallback=fallback, seed_params=seed, start_step=config.hot_start_steps)
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


def truth_family(config: Scenario2Config, scans, rng=None, truth=None) -> dict:
    return {"truth": (np.asarray(truth)[:, :2].copy(), 0.0)}


FAMILIES = {
    "ekf": (ekf_family, ("ekf", "eks")),
    "ukf": (ukf_family, ("ukf", "uks")),
    "ekf_imm": (ekf_imm_family, ("ekf_imm", "ekf_imm_smoother")),
    "ukf_imm": (ukf_imm_family, ("ukf_imm", "ukf_imm_smoother", "ukf_imm_forecast")),
    "fitting": (fitting_family, ("fit_online", "fit_delayed", "fit_smoothed", "fit_forecast")),
    "truth": (truth_family, ("truth",)),
}


def position(states: np.ndarray) -> np.ndarray:
    return np.asarray(states)[:, :2]
