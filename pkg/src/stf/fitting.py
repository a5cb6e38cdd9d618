"""Windowed trajectory fitting.

Solves

    argmin_C  sum_t w~_t * ||y_t - h(F(t; C)) - v_bar||^2  +  lam_pen * ||F(t0; C) - x0||

where ``w~_t`` are the observation weights (times an optional fading factor)
normalized to sum to one over the window. Identity observation models use a
closed-form QR solve; everything else goes through a damped Gauss-Newton
(Levenberg-Marquardt) iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from stf.errors import EvaluationError, RankDeficientError
from stf.observation import Observation, ObservationModel
from stf.trajectory import BasisSpec, FotParams, recenter

COND_WARN = 1e10
MAX_ITER = 100
REL_TOL = 1e-8
STEP_TOL = 1e-10
_MU_MAX = 1e20


@dataclass(frozen=True)
class TimeWindow:
    k1: float
    k2: float
    max_count: int | None = None

    def __post_init__(self):
        if self.k1 > self.k2:
            raise ValueError(f"window start {self.k1} after end {self.k2}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.k1 + self.k2)


@dataclass(frozen=True, eq=False)
class Penalty:
    """Soft anchor: the trajectory should pass near ``anchor_state`` at ``anchor_time``."""

    anchor_time: float
    anchor_state: np.ndarray
    trade_off: float = 1.0

    def __post_init__(self):
        if self.trade_off < 0:
            raise ValueError("penalty trade-off must be >= 0")
        object.__setattr__(self, "anchor_state", np.array(self.anchor_state, dtype=float, ndmin=1))


@dataclass(frozen=True, eq=False)
class ResidualSpec:
    """How a trajectory is compared against the data.

    Args:
        observation_model: the sensor model ``h``.
        noise_mean: known observation bias ``v_bar``, added to the prediction.
        fading: forgetting factor in (0, 1]; older data get weight
            ``fading ** ((k2 - t) / fade_interval)``.
        fade_interval: time (s) per fading step.
        penalty: optional anchor penalty.
        projector: optional override of ``observation_model.project`` used
            for cold starts.
    """

    observation_model: ObservationModel
    noise_mean: np.ndarray | None = None
    fading: float = 1.0
    fade_interval: float = 1.0
    penalty: Penalty | None = None
    projector: Callable[[Sequence[Observation]], tuple[np.ndarray, np.ndarray] | None] | None = None

    def __post_init__(self):
        if not (0 < self.fading <= 1):
            raise ValueError(f"fading factor must lie in (0, 1], got {self.fading}")
        if self.fade_interval <= 0:
            raise ValueError("fade_interval must be positive")

    def project(self, observations):
        if self.projector is not None:
            return self.projector(observations)
        return self.observation_model.project(observations)


@dataclass(frozen=True, eq=False)
class FitProblem:
    window: TimeWindow
    observations: tuple[Observation, ...]
    spec: ResidualSpec
    basis: BasisSpec = field(default_factory=BasisSpec)
    bounds: tuple[np.ndarray, np.ndarray] | None = None
    initial_params: FotParams | None = None

    def __post_init__(self):
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        w = self.window
        for o in obs:
            if not (w.k1 <= o.time <= w.k2):
                raise ValueError(f"observation at t={o.time} outside window [{w.k1}, {w.k2}]")

    @property
    def state_dim(self) -> int:
        return self.spec.observation_model.state_dim

    @property
    def t_ref(self) -> float:
        return self.window.midpoint


@dataclass(frozen=True, eq=False)
class FitResult:
    params: FotParams
    objective: float
    iterations: int
    converged: bool
    condition_warning: bool = False
    objective_trace: tuple[float, ...] = ()


class _Data(NamedTuple):
    times: np.ndarray
    sensor_ids: np.ndarray
    values: np.ndarray  # (N, Dy)
    weights: np.ndarray  # normalized


def normalized_weights(problem: FitProblem) -> np.ndarray:
    spec = problem.spec
    w = np.array([o.weight for o in problem.observations], dtype=float)
    if spec.fading != 1.0:
        age = (problem.window.k2 - np.array([o.time for o in problem.observations])) / spec.fade_interval
        w = w * spec.fading**age
    total = w.sum()
    if not total > 0:
        raise ValueError("all observation weights are zero")
    return w / total


def _stack(problem: FitProblem) -> _Data:
    obs = problem.observations
    if not obs:
        raise ValueError("fit problem has no observations")
    values = np.array([o.value for o in obs], dtype=float)
    if problem.spec.noise_mean is not None:
        values = values - np.asarray(problem.spec.noise_mean, dtype=float)
    return _Data(
        np.array([o.time for o in obs]),
        np.array([o.sensor_id for o in obs], dtype=int),
        values,
        normalized_weights(problem),
    )


def residual_l2(params: FotParams, obs: Observation, spec: ResidualSpec) -> float:
    """Squared discrepancy ``||y - h(F(t)) - v_bar||^2`` for one observation."""
    model = spec.observation_model
    state = params.values(obs.time).reshape(1, -1)
    y_hat = model.predict(state, np.array([obs.sensor_id]))[0]
    if spec.noise_mean is not None:
        y_hat = y_hat + np.asarray(spec.noise_mean, dtype=float)
    d = model.difference(obs.value, y_hat)
    return float(np.dot(d, d))


def _penalty_value(params: FotParams, penalty: Penalty | None) -> float:
    if penalty is None or penalty.trade_off == 0:
        return 0.0
    e = params.values(penalty.anchor_time) - penalty.anchor_state
    return penalty.trade_off * float(np.linalg.norm(e))


def weighted_objective(problem: FitProblem, params: FotParams) -> float:
    """Normalized weighted sum of squared residuals plus the anchor penalty."""
    w = normalized_weights(problem)
    total = sum(wi * residual_l2(params, o, problem.spec) for wi, o in zip(w, problem.observations))
    return float(total) + _penalty_value(params, problem.spec.penalty)


def _window_params(coeffs, basis, problem: FitProblem) -> FotParams:
    return FotParams(coeffs, basis, problem.t_ref, (problem.window.k1, problem.window.k2))


def _check_rank(times, weights, m: int):
    distinct = np.unique(times[weights > 0]).size
    if distinct < m:
        raise RankDeficientError(f"{distinct} distinct sample time(s) with positive weight; order {m} needs {m}")


def linear_ls_fit(problem: FitProblem) -> FitResult:
    """Closed-form weighted LS fit for directly observed states.

    Each dimension is solved independently; all dimensions share the
    collocation matrix, factored once by QR.
    """
    spec = problem.spec
    if not spec.observation_model.identity:
        raise ValueError("linear_ls_fit needs an identity observation model; use nonlinear_ls_fit")
    if spec.penalty is not None and spec.penalty.trade_off > 0:
        raise ValueError("anchor penalty is not quadratic; use nonlinear_ls_fit")
    basis = problem.basis
    data = _stack(problem)
    _check_rank(data.times, data.weights, basis.order)

    sw = np.sqrt(data.weights)
    A = sw[:, None] * basis.matrix(data.times - problem.t_ref)
    Y = sw[:, None] * data.values
    Q, R = np.linalg.qr(A)
    cond = np.linalg.cond(R)
    coeffs = np.linalg.solve(R, Q.T @ Y).T
    params = _window_params(coeffs, basis, problem)
    obj = _objective_from_data(params, data, spec)
    return FitResult(params, obj, 0, True, bool(cond > COND_WARN or not np.isfinite(cond)), (obj,))


# -- nonlinear path ---------------------------------------------------------


class _Residuals:
    """Residual vector and Jacobian with respect to the flattened coefficients."""

    def __init__(self, problem: FitProblem, data: _Data):
        self.problem = problem
        self.data = data
        self.spec = problem.spec
        self.model = problem.spec.observation_model
        self.basis = problem.basis
        self.D = problem.state_dim
        self.m = problem.basis.order
        self.Phi = self.basis.matrix(data.times - problem.t_ref)
        self.sw = np.sqrt(data.weights)
        pen = self.spec.penalty
        self.penalty = pen if pen is not None and pen.trade_off > 0 else None
        if self.penalty is not None:
            self.phi0 = self.basis.matrix(self.penalty.anchor_time - problem.t_ref)[0]

    def coeffs(self, theta):
        return theta.reshape(self.D, self.m)

    def states(self, theta):
        return self.Phi @ self.coeffs(theta).T

    def data_residual(self, theta) -> np.ndarray:
        try:
            y_hat = self.model.predict(self.states(theta), self.data.sensor_ids)
        except EvaluationError as exc:
            raise EvaluationError(str(exc), self._bad_time(theta)) from exc
        return self.sw[:, None] * self.model.difference(self.data.values, y_hat)

    def _bad_time(self, theta):
        states = self.states(theta)
        for k, t in enumerate(self.data.times):
            try:
                self.model.predict(states[k : k + 1], self.data.sensor_ids[k : k + 1])
            except EvaluationError:
                return float(t)
        return None

    def objective(self, theta) -> float:
        r = self.data_residual(theta)
        obj = float(np.sum(r * r))
        if self.penalty is not None:
            e = self.phi0 @ self.coeffs(theta).T - self.penalty.anchor_state
            obj += self.penalty.trade_off * float(np.linalg.norm(e))
        return obj

    def vector_and_jacobian(self, theta):
        r = self.data_residual(theta).ravel()
        J = self._data_jacobian(theta)
        if self.penalty is None:
            return r, J
        lam = self.penalty.trade_off
        e = self.phi0 @ self.coeffs(theta).T - self.penalty.anchor_state
        n = max(float(np.linalg.norm(e)), 1e-12)
        # rho^T rho = lam * ||e||, with the exact Jacobian of rho
        rho = math.sqrt(lam / n) * e
        Je = np.kron(np.eye(self.D), self.phi0[None, :])
        u = e / n
        Jrho = math.sqrt(lam / n) * (np.eye(self.D) - 0.5 * np.outer(u, u)) @ Je
        return np.concatenate([r, rho]), np.vstack([J, Jrho])

    def _data_jacobian(self, theta):
        Hx = self.model.jacobian(self.states(theta), self.data.sensor_ids)
        if Hx is None:
            return self._fd_jacobian(theta)
        # r = sw * (y - h(Phi C^T)) => dr/dC[d, i] = -sw * H[:, :, d] * Phi[:, i]
        J = -np.einsum("n,nad,ni->nadi", self.sw, np.asarray(Hx), self.Phi)
        return J.reshape(-1, self.D * self.m)

    def _fd_jacobian(self, theta):
        cols = []
        for i in range(theta.size):
            h = max(1e-6, 1e-6 * abs(theta[i]))
            tp = theta.copy()
            tm = theta.copy()
            tp[i] += h
            tm[i] -= h
            cols.append((self.data_residual(tp).ravel() - self.data_residual(tm).ravel()) / (2 * h))
        return np.column_stack(cols)


def _objective_from_data(params: FotParams, data: _Data, spec: ResidualSpec) -> float:
    model = spec.observation_model
    y_hat = model.predict(params.values(data.times).reshape(len(data.times), -1), data.sensor_ids)
    d = model.difference(data.values, y_hat)
    return float(np.sum(data.weights * np.sum(d * d, axis=1))) + _penalty_value(params, spec.penalty)


def _bounds_arrays(problem: FitProblem, shape):
    if problem.bounds is None:
        return None, None
    lo, hi = problem.bounds
    lo = np.broadcast_to(np.asarray(lo, dtype=float), shape).ravel()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), shape).ravel()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


def nonlinear_ls_fit(problem: FitProblem, max_iter: int = MAX_ITER) -> FitResult:
    """Levenberg-Marquardt fit of the trajectory coefficients.

    Starts from ``problem.initial_params`` (or :func:`warm_start_seed`).
    A step is accepted only if it lowers the objective, so the returned
    objective never exceeds the starting one. Bounds are enforced by
    projecting each trial point onto the box.
    """
    data = _stack(problem)
    res = _Residuals(problem, data)
    D, m = res.D, res.m
    seed = problem.initial_params or warm_start_seed(None, problem.window, problem)
    if seed.coeffs.shape != (D, m):
        raise ValueError(f"initial params have shape {seed.coeffs.shape}, expected {(D, m)}")
    lo, hi = _bounds_arrays(problem, (D, m))
    theta = recenter(seed, problem.t_ref).coeffs.ravel().copy()
    if seed.t_ref != problem.t_ref and recenter(seed, problem.t_ref) is seed:
        # non-monomial seed: refit its values in the window's time frame
        theta = _refit_seed(seed, problem).ravel()
    if lo is not None:
        theta = np.clip(theta, lo, hi)

    r, J = res.vector_and_jacobian(theta)
    obj = res.objective(theta)
    trace = [obj]
    A = J.T @ J
    g = J.T @ r
    mu = 1e-3 * float(np.max(np.diag(A))) if A.size and np.max(np.diag(A)) > 0 else 1e-3
    converged = False
    it = 0
    eye = np.eye(theta.size)
    while it < max_iter:
        it += 1
        if obj == 0.0:
            converged = True
            break
        try:
            step = np.linalg.solve(A + mu * eye, -g)
        except np.linalg.LinAlgError:
            mu *= 10
            continue
        trial = theta + step
        if lo is not None:
            trial = np.clip(trial, lo, hi)
        step = trial - theta
        if np.max(np.abs(step)) < STEP_TOL:
            converged = True
            break
        try:
            trial_obj = res.objective(trial)
        except EvaluationError:
            trial_obj = math.inf
        if trial_obj < obj:
            rel = (obj - trial_obj) / obj
            theta, obj = trial, trial_obj
            trace.append(obj)
            mu = max(mu / 10, 1e-300)
            if rel < REL_TOL:
                converged = True
                break
            r, J = res.vector_and_jacobian(theta)
            A = J.T @ J
            g = J.T @ r
        else:
            mu *= 10
            if mu > _MU_MAX:
                converged = True
                break
    params = _window_params(theta.reshape(D, m), problem.basis, problem)
    return FitResult(params, obj, it, converged, False, tuple(trace))


def _refit_seed(seed: FotParams, problem: FitProblem) -> np.ndarray:
    t = np.linspace(problem.window.k1, problem.window.k2, max(2 * problem.basis.order, 4))
    A = problem.basis.matrix(t - problem.t_ref)
    return np.linalg.lstsq(A, seed.values(t).reshape(len(t), -1), rcond=None)[0].T


def warm_start_seed(previous: FotParams | None, window: TimeWindow, problem: FitProblem) -> FotParams:
    """Initial coefficients for a window fit.

    With a previous fit, it is re-expressed about the new window midpoint.
    Otherwise (cold start) the observations are projected into state space
    when the model allows it and fitted linearly; failing that, the seed is
    all zeros apart from a constant term taken from the first projection.
    """
    basis = problem.basis
    t_ref = window.midpoint
    if previous is not None:
        return recenter(previous, t_ref).with_window((window.k1, window.k2))
    D, m = problem.state_dim, basis.order
    coeffs = np.zeros((D, m))
    proj = problem.spec.project(problem.observations)
    if proj is not None:
        times, states = proj
        states = np.asarray(states, dtype=float).reshape(len(times), -1)
        if np.unique(times).size >= m:
            A = basis.matrix(np.asarray(times) - t_ref)
            coeffs = np.linalg.lstsq(A, states, rcond=None)[0].T
        else:
            const = basis.matrix(np.array([0.0]))[0, 0]
            if const != 0:
                coeffs[:, 0] = states[0] / const
    return FotParams(coeffs, basis, t_ref, (window.k1, window.k2))


# -- recursive least squares --------------------------------------------------


class RlsState(NamedTuple):
    coeffs: np.ndarray
    P: np.ndarray
    gain: np.ndarray | None = None


def rls_init(X, y) -> RlsState:
    """Exact batch initialization from at least ``m`` linearly independent rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    P = np.linalg.inv(X.T @ X)
    P = 0.5 * (P + P.T)
    return RlsState(P @ X.T @ y, P)


def recursive_ls_update(state: RlsState, x, y: float, forgetting: float = 1.0) -> RlsState:
    """One recursive least-squares step with forgetting factor ``forgetting``."""
    if not (0 < forgetting <= 1):
        raise ValueError("forgetting factor must lie in (0, 1]")
    x = np.asarray(x, dtype=float).ravel()
    c = np.asarray(state.coeffs, dtype=float)
    P = np.asarray(state.P, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(y) and np.all(np.isfinite(c)) and np.all(np.isfinite(P))):
        raise ValueError("non-finite input to recursive_ls_update")
    Px = P @ x
    denom = forgetting + x @ Px
    gain = Px / denom
    c_new = c + gain * (y - x @ c)
    P_new = (P - np.outer(Px, Px) / denom) / forgetting
    P_new = 0.5 * (P_new + P_new.T)
    return RlsState(c_new, P_new, gain)
