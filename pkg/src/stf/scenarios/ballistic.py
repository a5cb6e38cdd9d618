"""Scenario 3: vertically falling body tracked by a range-only radar.

State ``[h, s, c]``: altitude, falling speed and ballistic coefficient, with
``h' = -s``, ``s' = -exp(-gamma h) s^2 c`` and ``c' = 0``. The radar sits at
horizontal distance ``M`` and altitude ``H``; one range per second.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from stf.baselines.gaussian import GaussianBelief, GaussianModel, run_filter
from stf.baselines.o2 import SignState, o2_debias, o2_project, o2_triangulate
from stf.baselines.particle import ParticleSet, heavy_tail_weights, pf_step
from stf.fitting import ResidualSpec
from stf.inference import StfConfig, run_stf
from stf.observation import Observation, RangeModel
from stf.scenarios.common import rk4_step
from stf.trajectory import FotParams


@dataclass(frozen=True)
class Scenario3Config:
    M: float = 1e5
    H: float = 1e5
    gamma: float = 5e-5
    x0: tuple[float, float, float] = (3e5, 2e4, 1e-3)
    prior_mean: tuple[float, float, float] = (3e5, 2e4, 3e-3)
    prior_var: tuple[float, float, float] = (1e6, 4e6, 1e-4)
    R: float = 1e4
    steps: int = 30
    interval: float = 1.0
    substeps: int = 64
    particles: int = 200
    debias_samples: int = 100
    c0: float = 3e-3
    stf: StfConfig = StfConfig(window_count=5, order=3, delay_steps=0, horizon_steps=1, nominal_interval=1.0)

    def __post_init__(self):
        for name in ("M", "H", "gamma", "R", "interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.substeps < 1 or self.steps < 1:
            raise ValueError("steps and substeps must be >= 1")

    def times(self) -> np.ndarray:
        """Observation times (the truth starts one interval earlier, at t=0)."""
        return np.arange(1, self.steps + 1) * self.interval


def dynamics(x: np.ndarray, gamma: float) -> np.ndarray:
    """Time derivative of ``[h, s, c]``; negative coefficients act as zero drag."""
    x = np.asarray(x, dtype=float)
    h, s, c = x[..., 0], x[..., 1], x[..., 2]
    with np.errstate(over="ignore", invalid="ignore"):
        ds = -np.exp(-gamma * h) * s**2 * np.maximum(c, 0.0)
    return np.stack([-s, ds, np.zeros_like(h)], axis=-1)


def dynamics_jacobian(x: np.ndarray, gamma: float) -> np.ndarray:
    h, s, c = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-gamma * h)
        if c < 0:
            return np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        return np.array(
            [
                [0.0, -1.0, 0.0],
                [gamma * e * s * s * c, -2.0 * e * s * c, -e * s * s],
                [0.0, 0.0, 0.0],
            ]
        )


def propagate(x: np.ndarray, config: Scenario3Config, duration: float | None = None, substeps: int | None = None) -> np.ndarray:
    duration = config.interval if duration is None else duration
    n = round(config.substeps * duration / config.interval) if substeps is None else substeps
    dt = duration / n
    f = lambda z: dynamics(z, config.gamma)  # noqa: E731
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            x = rk4_step(x, f, dt)
    return x


def propagate_jacobian(x: np.ndarray, config: Scenario3Config) -> np.ndarray:
    """Exact derivative of the discrete RK4 map over one interval (tangent linear)."""
    n = config.substeps
    dt = config.interval / n
    g = config.gamma
    I = np.eye(3)
    J = I.copy()
    x = np.asarray(x, dtype=float)
    for _ in range(n):
        k1 = dynamics(x, g)
        A1 = dynamics_jacobian(x, g)
        x2 = x + 0.5 * dt * k1
        k2 = dynamics(x2, g)
        A2 = dynamics_jacobian(x2, g) @ (I + 0.5 * dt * A1)
        x3 = x + 0.5 * dt * k2
        k3 = dynamics(x3, g)
        A3 = dynamics_jacobian(x3, g) @ (I + 0.5 * dt * A2)
        x4 = x + dt * k3
        k4 = dynamics(x4, g)
        A4 = dynamics_jacobian(x4, g) @ (I + dt * A3)
        J = (I + dt / 6.0 * (A1 + 2 * A2 + 2 * A3 + A4)) @ J
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return J


def slant_range(h, config: Scenario3Config):
    return np.sqrt(config.M**2 + (np.asarray(h, dtype=float) - config.H) ** 2)


def simulate_truth(config: Scenario3Config, rng: np.random.Generator | None = None) -> np.ndarray:
    """``(steps, 3)`` deterministic states at the observation times."""
    x = np.array(config.x0, dtype=float)
    out = np.empty((config.steps, 3))
    for k in range(config.steps):
        x = propagate(x, config)
        out[k] = x
    return out


def observe(config: Scenario3Config, states: np.ndarray, rng: np.random.Generator) -> list[list[Observation]]:
    y = slant_range(states[:, 0], config) + rng.standard_normal(len(states)) * math.sqrt(config.R)
    return [[Observation(t, 0, v)] for t, v in zip(config.times(), y)]


def filter_model(config: Scenario3Config) -> GaussianModel:
    def h(x):
        return slant_range(np.asarray(x)[..., 0], config)[..., None]

    def h_jac(x):
        dh = x[0] - config.H
        return np.array([[dh / math.sqrt(config.M**2 + dh**2), 0.0, 0.0]])

    return GaussianModel(
        lambda x: propagate(x, config),
        np.zeros((3, 3)),
        h,
        [[config.R]],
        f_jacobian=lambda x: propagate_jacobian(x, config),
        h_jacobian=h_jac,
    )


def prior(config: Scenario3Config) -> GaussianBelief:
    return GaussianBelief(np.array(config.prior_mean), np.diag(config.prior_var))


def _ys(scans) -> np.ndarray:
    return np.array([scan[0].value[0] for scan in scans])


# -- O2 ----------------------------------------------------------------------------------


def o2_record(config: Scenario3Config, ys) -> tuple[np.ndarray, np.ndarray]:
    """Biased O2 altitudes and the branch (True: below the radar) used at each step."""
    state = SignState(dt=config.interval)
    hs, branch = [], []
    for y in ys:
        est = o2_triangulate(float(y), config.M, config.H, state)
        state = est.state
        hs.append(est.altitude)
        branch.append(state.negative)
    return np.array(hs), np.array(branch)


def o2_projector(config: Scenario3Config):
    """Cold-start projector for the range fit: sequential O2 over the window."""

    def project(observations):
        obs = sorted(observations, key=lambda o: o.time)
        hs, _ = o2_record(config, [o.value[0] for o in obs])
        return np.array([o.time for o in obs]), hs[:, None]

    return project


class FallingBranch:
    """Post-fit branch rule for the range fit.

    A fit and its mirror image about the radar altitude give identical
    ranges. The first fit keeps the candidate that is falling at the window
    end. Later fits keep the candidate closest to a constant-speed
    extrapolation of the previous online estimates; the speed is the finite
    difference of the last two estimates (the fit slope when only one
    exists), floored at zero.
    """

    def __init__(self, H: float):
        self.H = float(H)
        self.history: list[tuple[float, float]] = []  # (time, online altitude)
        self._last: FotParams | None = None

    def mirror(self, fit: FotParams) -> FotParams:
        coeffs = -fit.coeffs
        coeffs[:, 0] += 2 * self.H / fit.bases[0].matrix(np.array([0.0]))[0, 0]
        return FotParams(coeffs, fit.basis, fit.t_ref, fit.valid_window)

    def __call__(self, fit: FotParams) -> FotParams:
        t = fit.valid_window[1]
        candidates = (fit, self.mirror(fit))
        if not self.history:
            choice = fit if fit.values(t, deriv=1)[0] <= 0 else candidates[1]
        else:
            tp, hp = self.history[-1]
            if len(self.history) >= 2 and tp > self.history[-2][0]:
                tq, hq = self.history[-2]
                speed = (hq - hp) / (tp - tq)
            else:
                speed = -float(self._last.values(tp, deriv=1)[0])
            expected = hp - max(speed, 0.0) * (t - tp)
            choice = min(candidates, key=lambda c: abs(float(c.values(t)[0]) - expected))
        self.history.append((t, float(choice.values(t)[0])))
        self._last = choice
        return choice


# -- velocity and ballistic-coefficient fit ---------------------------------------------------


def coefficient_from_velocity(velocity: FotParams, altitude: FotParams, t: float, gamma: float) -> float:
    """``c = -s'(t) / (exp(-gamma h(t)) s(t)^2)``; raises when ``s(t) = 0``."""
    s = float(velocity.values(t)[0])
    if s == 0.0:
        raise ZeroDivisionError(f"falling speed is zero at t={t}; ballistic coefficient undefined")
    ds = float(velocity.values(t, deriv=1)[0])
    h = float(altitude.values(t)[0])
    return -ds / (math.exp(-gamma * h) * s * s)


def ballistic_velocity_and_coeff_fit(
    altitude: FotParams,
    times,
    c_hat: float,
    gamma: float = 5e-5,
    scale: float = 1.0,
) -> tuple[FotParams, float]:
    """Velocity trajectory matching the altitude fit through the dynamics.

    Minimizes ``sum(phi1^2 + (scale * phi2)^2)`` over the sample ``times``
    with ``phi1 = h'(t) + s(t)`` and ``phi2 = s'(t) + exp(-gamma h(t)) s(t)^2 c_hat``.
    The velocity basis and reference time follow the altitude fit.

    Returns:
        The velocity fit and the coefficient re-estimated at the last sample
        time, to be used as ``c_hat`` for the next window.
    """
    times = np.asarray(times, dtype=float)
    basis = altitude.bases[0]
    tau = times - altitude.t_ref
    B = basis.matrix(tau)
    dB = basis.derivative_matrix(tau, 1)
    hdot = altitude.values(times, deriv=1).reshape(len(times))
    h = altitude.values(times).reshape(len(times))
    decay = np.exp(-gamma * h)

    def residuals(b):
        s = B @ b
        return np.concatenate([hdot + s, scale * (dB @ b + decay * s * s * c_hat)])

    def jac(b):
        s = B @ b
        return np.vstack([B, scale * (dB + (2 * decay * s * c_hat)[:, None] * B)])

    b0 = np.linalg.lstsq(B, -hdot, rcond=None)[0]
    sol = least_squares(residuals, b0, jac=jac, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    velocity = FotParams(sol.x[None, :], basis, altitude.t_ref, altitude.valid_window)
    return velocity, coefficient_from_velocity(velocity, altitude, float(times[-1]), gamma)


# -- estimator families -----------------------------------------------------------------------


def ekf_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    return _gaussian(config, scans, "ekf")


def ukf_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    return _gaussian(config, scans, "ukf")


def _gaussian(config, scans, method):
    ys = _ys(scans)[:, None]
    t0 = time.perf_counter()
    recs = run_filter(prior(config), filter_model(config), ys, method, predict_first=True)
    t1 = time.perf_counter()
    return {method: (np.array([r.filtered.mean[:1] for r in recs]), t1 - t0)}


def pf_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    """SIR particle filter with the residual-normalized likelihood and no process noise."""
    ys = _ys(scans)
    t0 = time.perf_counter()
    p0 = prior(config)
    X = rng.multivariate_normal(p0.mean, p0.covariance, size=config.particles)
    ps = ParticleSet.uniform(X)
    out = []
    for y in ys:
        step = pf_step(
            ps,
            lambda Z, _rng: propagate(Z, config),
            lambda Z: slant_range(Z[:, 0], config),
            float(y),
            rng,
            heavy_tail_weights,
        )
        ps = step.particles
        out.append(step.estimate[:1])
    return {"pf": (np.array(out), time.perf_counter() - t0)}


def o2_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    ys = _ys(scans)
    t0 = time.perf_counter()
    biased, branch = o2_record(config, ys)
    t1 = time.perf_counter()
    unbiased = np.empty_like(biased)
    for k, (y, neg) in enumerate(zip(ys, branch)):
        g = lambda v, neg=neg: o2_project(float(np.ravel(v)[0]), config.M, config.H, bool(neg))[0]  # noqa: E731
        unbiased[k] = o2_debias(g, y, [[config.R]], config.debias_samples, rng)
    t2 = time.perf_counter()
    return {"o2_biased": (biased[:, None], t1 - t0), "o2_unbiased": (unbiased[:, None], (t1 - t0) + (t2 - t1))}


def fitting_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    """Online quadratic altitude fit on the raw ranges (cold start from O2 projections).

    Steps before the first fit report the biased O2 altitude.
    """
    ys = _ys(scans)
    t0 = time.perf_counter()
    fallback, _ = o2_record(config, ys)
    spec = ResidualSpec(RangeModel(config.M, config.H), projector=o2_projector(config))
    run = run_stf(scans, config.stf, spec, fallback=fallback[:, None], postfit=FallingBranch(config.H))
    online = run.online()
    return {"fit_online": (online, time.perf_counter() - t0)}


def velocity_record(config: Scenario3Config, run_fits, times) -> tuple[np.ndarray, np.ndarray]:
    """Per-step velocity and coefficient estimates from a record of altitude fits."""
    c_hat = config.c0
    speeds, coeffs = [], []
    for fit, t in zip(run_fits, times):
        if fit is None:
            speeds.append(math.nan)
            coeffs.append(c_hat)
            continue
        lo, hi = fit.valid_window
        window_times = times[(times >= lo) & (times <= hi)]
        vel, c_next = ballistic_velocity_and_coeff_fit(fit, window_times, c_hat, config.gamma)
        speeds.append(float(vel.values(t)[0]))
        coeffs.append(c_hat)
        c_hat = c_next
    return np.array(speeds), np.array(coeffs)


def truth_family(config: Scenario3Config, scans, rng=None, truth=None) -> dict:
    return {"truth": (np.asarray(truth)[:, :1].copy(), 0.0)}


FAMILIES = {
    "ekf": (ekf_family, ("ekf",)),
    "ukf": (ukf_family, ("ukf",)),
    "pf": (pf_family, ("pf",)),
    "o2": (o2_family, ("o2_biased", "o2_unbiased")),
    "fitting": (fitting_family, ("fit_online",)),
    "truth": (truth_family, ("truth",)),
}


def position(states: np.ndarray) -> np.ndarray:
    return np.asarray(states)[:, :1]
