"""Sliding-window smoothing, tracking and forecasting from fitted trajectories."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from stf.errors import NoFitError
from stf.fitting import (
    FitProblem,
    FitResult,
    ResidualSpec,
    TimeWindow,
    linear_ls_fit,
    nonlinear_ls_fit,
    warm_start_seed,
)
from stf.observation import IdentityModel, Observation
from stf.trajectory import MONOMIAL, BasisSpec, FotParams, evaluate

DELAYED = "delayed"
ONLINE = "online"
FORECAST = "forecast"
SMOOTHED = "smoothed"
MODES = (DELAYED, ONLINE, FORECAST, SMOOTHED)


@dataclass(frozen=True)
class StfConfig:
    """Sliding-window settings.

    ``window_count`` caps the number of distinct sample times kept;
    ``max_span`` optionally caps the window duration as well. Default
    query offsets use ``nominal_interval`` rather than the realized spacing.
    """

    window_count: int = 10
    order: int = 2
    delay_steps: int = 5
    horizon_steps: int = 5
    nominal_interval: float = 0.1
    max_span: float | None = None
    basis_kind: str = MONOMIAL

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.window_count < self.order:
            raise ValueError(f"window_count {self.window_count} is smaller than order {self.order}")
        if self.delay_steps < 0:
            raise ValueError("delay_steps must be >= 0")
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.nominal_interval <= 0:
            raise ValueError("nominal_interval must be positive")

    @property
    def basis(self) -> BasisSpec:
        return BasisSpec(self.basis_kind, self.order)


class StfOutput(NamedTuple):
    query_time: float
    estimate: np.ndarray
    mode: str
    extrapolated: bool


class Tracker:
    """Single-stream sliding-window fitter.

    ``push`` keeps the buffer time-sorted (late or out-of-order data are
    fine), evicts the oldest samples and refits. Identity observation models
    are solved in closed form; other models use Levenberg-Marquardt seeded
    by the previous fit (or ``seed_params`` for a hot start).

    ``postfit`` may replace each fit by an equivalent one (same objective),
    e.g. to pick one branch of a symmetric observation model.
    """

    def __init__(
        self,
        config: StfConfig | None = None,
        spec: ResidualSpec | None = None,
        *,
        basis: BasisSpec | None = None,
        seed_params: FotParams | None = None,
        bounds=None,
        postfit: Callable[[FotParams], FotParams] | None = None,
    ):
        self.config = config or StfConfig()
        self.postfit = postfit
        self.spec = spec
        self.basis = basis or self.config.basis
        self.bounds = bounds
        self.buffer: list[Observation] = []
        self.current_fit: FotParams | None = None
        self.last_result: FitResult | None = None
        self.last_params_for_warm_start: FotParams | None = seed_params
        self.duplicate_replaced = False

    # -- buffer management ----------------------------------------------------

    def _key(self, o: Observation):
        return (o.time, o.sensor_id)

    def _insert(self, obs: Observation):
        keys = [self._key(o) for o in self.buffer]
        i = bisect.bisect_left(keys, self._key(obs))
        if i < len(keys) and keys[i] == self._key(obs):
            self.buffer[i] = obs
            self.duplicate_replaced = True
        else:
            self.buffer.insert(i, obs)

    def _evict(self):
        times = self.sample_times()
        keep_from = times[max(0, len(times) - self.config.window_count)] if times else None
        if self.config.max_span is not None and times:
            keep_from = max(keep_from, times[-1] - self.config.max_span)
        if keep_from is not None:
            self.buffer = [o for o in self.buffer if o.time >= keep_from]

    def sample_times(self) -> list[float]:
        return sorted({o.time for o in self.buffer})

    @property
    def window(self) -> TimeWindow:
        if not self.buffer:
            raise NoFitError("tracker buffer is empty")
        return TimeWindow(self.buffer[0].time, self.buffer[-1].time, self.config.window_count)

    # -- fitting ----------------------------------------------------------------

    def _spec(self) -> ResidualSpec:
        if self.spec is None:
            self.spec = ResidualSpec(IdentityModel(self.buffer[0].value.size))
        return self.spec

    def push(self, obs: Observation) -> "Tracker":
        self.duplicate_replaced = False
        self._insert(obs)
        self._evict()
        self.refit()
        return self

    def extend(self, observations: Sequence[Observation]) -> "Tracker":
        """Insert a batch (e.g. all sensors of one scan) and refit once."""
        self.duplicate_replaced = False
        for o in observations:
            self._insert(o)
        self._evict()
        self.refit()
        return self

    def refit(self):
        if len(self.sample_times()) < self.basis.order:
            return
        spec = self._spec()
        window = self.window
        problem = FitProblem(window, tuple(self.buffer), spec, self.basis, self.bounds)
        linear = (
            spec.observation_model.identity
            and self.bounds is None
            and (spec.penalty is None or spec.penalty.trade_off == 0)
        )
        if linear:
            result = linear_ls_fit(problem)
        else:
            seed = warm_start_seed(self.last_params_for_warm_start, window, problem)
            problem = FitProblem(window, problem.observations, spec, self.basis, self.bounds, seed)
            result = nonlinear_ls_fit(problem)
        params = result.params if self.postfit is None else self.postfit(result.params)
        self.last_result = result
        self.current_fit = params
        self.last_params_for_warm_start = params

    # -- queries ------------------------------------------------------------------

    def default_query_time(self, mode: str) -> float:
        k2 = self.window.k2
        dt = self.config.nominal_interval
        if mode == DELAYED:
            return k2 - self.config.delay_steps * dt
        if mode == ONLINE:
            return k2
        if mode == FORECAST:
            return k2 + self.config.horizon_steps * dt
        if mode == SMOOTHED:
            raise ValueError("smoothed estimates need the full record; use smoothed_pass")
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")

    def infer(self, mode: str = ONLINE, query_time: float | None = None) -> StfOutput:
        if self.current_fit is None:
            raise NoFitError(f"no fit yet: need {self.basis.order} distinct sample times")
        t = self.default_query_time(mode) if query_time is None else float(query_time)
        w = self.window
        return StfOutput(t, evaluate(self.current_fit, t).value, mode, not (w.k1 <= t <= w.k2))

    def effective_window(self) -> tuple[float, float]:
        if self.current_fit is None:
            raise NoFitError("no fit yet")
        w = self.window
        dt = self.config.nominal_interval
        return (w.k1 - self.config.delay_steps * dt, w.k2 + self.config.horizon_steps * dt)


def push_observation(tracker: Tracker, obs: Observation) -> Tracker:
    return tracker.push(obs)


def infer_at(tracker: Tracker, mode: str, query_time: float | None = None) -> StfOutput:
    return tracker.infer(mode, query_time)


def effective_window(tracker: Tracker) -> tuple[float, float]:
    return tracker.effective_window()


# -- whole-record passes ----------------------------------------------------------


def _sliding_delayed(times: np.ndarray, values: np.ndarray, config: StfConfig) -> np.ndarray:
    """Delayed fitting over state-space values: estimate i from the window ending d samples later."""
    n = len(times)
    W, d, basis = config.window_count, config.delay_steps, config.basis
    spec = ResidualSpec(IdentityModel(values.shape[1]))
    out = values.copy()
    fits: dict[int, FotParams] = {}
    for i in range(n):
        j = min(i + d, n - 1)
        if j not in fits:
            lo = max(0, j - W + 1)
            if j - lo + 1 < basis.order:
                continue
            obs = tuple(Observation(times[k], 0, values[k]) for k in range(lo, j + 1))
            problem = FitProblem(TimeWindow(times[lo], times[j]), obs, spec, basis)
            fits[j] = linear_ls_fit(problem).params
        out[i] = fits[j].values(times[i])
    return out


def smoothed_pass(times, delayed_estimates, config: StfConfig) -> np.ndarray:
    """Backward sliding-window refit of a forward delayed-fitting record.

    The delayed pass is repeated on the time-reversed estimates, giving the
    once-forward-once-backward smoothed fit.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(delayed_estimates, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(times) < config.order:
        raise ValueError(f"record of {len(times)} samples is shorter than order {config.order}")
    rev = _sliding_delayed(-times[::-1], values[::-1], config)
    return rev[::-1].copy()


@dataclass
class StfRun:
    """Per-step fits of a tracker fed one scan per step, plus the derived series.

    ``fallback`` supplies estimates for steps without a usable fit (startup).
    """

    times: np.ndarray
    fits: list[FotParams | None]
    config: StfConfig
    fallback: np.ndarray | None = None
    iterations: list[int] = field(default_factory=list)

    def _fill(self, i: int, fit: FotParams | None) -> np.ndarray:
        if fit is not None:
            return fit.values(self.times[i])
        if self.fallback is None:
            return np.full(self._dim(), math.nan)
        return self.fallback[i]

    def _dim(self) -> int:
        for f in self.fits:
            if f is not None:
                return f.dim
        return self.fallback.shape[1]

    def online(self) -> np.ndarray:
        return np.array([self._fill(i, f) for i, f in enumerate(self.fits)])

    def delayed(self) -> np.ndarray:
        n = len(self.times)
        d = self.config.delay_steps
        return np.array([self._fill(i, self.fits[min(i + d, n - 1)]) for i in range(n)])

    def forecast(self) -> np.ndarray:
        h = self.config.horizon_steps
        out = []
        for i in range(len(self.times)):
            fit = self.fits[i - h] if i >= h else None
            out.append(self._fill(i, fit) if fit is not None else self._fill(i, self.fits[i]))
        return np.array(out)

    def smoothed(self, delayed: np.ndarray | None = None) -> np.ndarray:
        return smoothed_pass(self.times, self.delayed() if delayed is None else delayed, self.config)


def run_stf(
    scans: Sequence[Sequence[Observation]],
    config: StfConfig,
    spec: ResidualSpec | None = None,
    *,
    fallback: np.ndarray | None = None,
    seed_params: FotParams | None = None,
    start_step: int = 0,
    on_error: Callable[[Exception, int], None] | None = None,
    postfit: Callable[[FotParams], FotParams] | None = None,
) -> StfRun:
    """Feed one scan per step and record the fit available after each step.

    Steps before ``start_step`` only fill the buffer (hot-start phase).
    """
    tracker = Tracker(config, spec, seed_params=seed_params, postfit=postfit)
    times, fits, iters = [], [], []
    for k, scan in enumerate(scans):
        times.append(scan[0].time)
        try:
            tracker.extend(scan)
        except Exception as exc:  # noqa: BLE001 - reported through on_error
            if on_error is None:
                raise
            on_error(exc, k)
        usable = k >= start_step and tracker.current_fit is not None
        fits.append(tracker.current_fit if usable else None)
        iters.append(tracker.last_result.iterations if tracker.last_result is not None else 0)
    return StfRun(np.array(times), fits, config, fallback, iters)
