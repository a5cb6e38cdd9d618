"""Gaussian filters (KF, EKF, UKF) and the RTS smoother."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

PSD_TOL = 1e-10
_LOG2PI = math.log(2 * math.pi)


def _psd(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
        return P
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(P)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w.min() < -PSD_TOL * scale:
        warnings.warn(f"covariance eigenvalue {w.min():.3g} clamped to zero", RuntimeWarning, stacklevel=3)
    if w.min() < 0:
        P = (V * np.clip(w, 0, None)) @ V.T
        P = 0.5 * (P + P.T)
    return P


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, dtype=float, ndmin=1)
        P = np.array(self.covariance, dtype=float, ndmin=2)
        if P.shape != (m.size, m.size):
            raise ValueError(f"covariance shape {P.shape} does not match mean of size {m.size}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", _psd(P))

    @property
    def dim(self) -> int:
        return self.mean.size


class GaussianModel:
    """Discrete-time state space model ``x' = f(x) + u``, ``y = h(x) + v``.

    ``f`` and ``h`` act on the last axis so a stack of sigma points or
    particles can be passed at once. ``index`` lists which components of a
    larger joint state this model describes (used by IMM banks whose models
    have different dimensions).
    """

    def __init__(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        Q,
        h: Callable[[np.ndarray], np.ndarray],
        R,
        *,
        f_jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
        h_jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
        residual: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        index: Sequence[int] | None = None,
    ):
        self.f = f
        self.h = h
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.f_jacobian = f_jacobian
        self.h_jacobian = h_jacobian
        self._residual = residual
        self.dim = self.Q.shape[0]
        self.index = tuple(range(self.dim)) if index is None else tuple(index)
        if len(self.index) != self.dim:
            raise ValueError("index length must match the model dimension")

    def residual(self, y, y_hat):
        if self._residual is None:
            return np.asarray(y, dtype=float) - y_hat
        return self._residual(y, y_hat)

    def F_at(self, x) -> np.ndarray:
        if self.f_jacobian is None:
            raise ValueError("model has no transition Jacobian")
        return np.atleast_2d(self.f_jacobian(x))

    def H_at(self, x) -> np.ndarray:
        if self.h_jacobian is None:
            raise ValueError("model has no measurement Jacobian")
        return np.atleast_2d(self.h_jacobian(x))


class LinearGaussianModel(GaussianModel):
    """``x' = F x + u``, ``y = Hm x + v``."""

    def __init__(self, F, Q, H, R, *, index: Sequence[int] | None = None):
        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        F_, H_ = self.F, self.H
        super().__init__(
            lambda x: x @ F_.T,
            Q,
            lambda x: x @ H_.T,
            R,
            f_jacobian=lambda x: F_,
            h_jacobian=lambda x: H_,
            index=index,
        )


def wiener_velocity(q: float, dt: float, axes: int = 2):
    """Discretized Wiener-process-velocity model, state ``[pos(axes), vel(axes)]``."""
    I = np.eye(axes)
    F = np.block([[I, dt * I], [np.zeros((axes, axes)), I]])
    Q = q * np.block([[dt**3 / 3 * I, dt**2 / 2 * I], [dt**2 / 2 * I, dt * I]])
    return F, Q


def wiener_acceleration(q: float, dt: float, axes: int = 2):
    """Discretized Wiener-process-acceleration model, state ``[pos, vel, acc]`` per block."""
    I = np.eye(axes)
    Z = np.zeros((axes, axes))
    F = np.block([[I, dt * I, dt**2 / 2 * I], [Z, I, dt * I], [Z, Z, I]])
    Qb = np.array(
        [
            [dt**5 / 20, dt**4 / 8, dt**3 / 6],
            [dt**4 / 8, dt**3 / 3, dt**2 / 2],
            [dt**3 / 6, dt**2 / 2, dt],
        ]
    )
    return F, q * np.kron(Qb, I)


class Prediction(NamedTuple):
    belief: GaussianBelief
    cross: np.ndarray  # Cov(x_k, x_{k+1}), shape (len(source), model.dim)


class Update(NamedTuple):
    belief: GaussianBelief
    loglik: float


def _select(model: GaussianModel, belief: GaussianBelief, from_full: bool):
    if from_full:
        idx = list(model.index)
        S = np.zeros((model.dim, belief.dim))
        S[np.arange(model.dim), idx] = 1.0
        return belief.mean[idx], S
    return belief.mean, None


def _gauss_loglik(innov, S) -> float:
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, innov)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * innov.size * _LOG2PI)


def _correct(m, P, innov, S, C):
    """Gain-based correction with cross-covariance ``C = Cov(x, y)``."""
    try:
        K = np.linalg.solve(S.T, C.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular innovation covariance:\n{S}") from exc
    m_new = m + K @ innov
    P_new = P - K @ S @ K.T
    return GaussianBelief(m_new, P_new), _gauss_loglik(innov, S)


# -- Kalman filter -----------------------------------------------------------


def kf_predict(belief: GaussianBelief, model: LinearGaussianModel, from_full: bool = False) -> Prediction:
    F = model.F
    if from_full:
        _, S = _select(model, belief, True)
        F = F @ S
    m = F @ belief.mean
    P = F @ belief.covariance @ F.T + model.Q
    return Prediction(GaussianBelief(m, P), belief.covariance @ F.T)


def kf_update(belief: GaussianBelief, model: LinearGaussianModel, y) -> Update:
    H = model.H
    P = belief.covariance
    S = H @ P @ H.T + model.R
    S = 0.5 * (S + S.T)
    innov = model.residual(np.asarray(y, dtype=float), H @ belief.mean)
    return Update(*_correct(belief.mean, P, innov, S, P @ H.T))


def kf_step(belief: GaussianBelief, model: LinearGaussianModel, y) -> GaussianBelief:
    """Predict one step then correct with ``y``."""
    return kf_update(kf_predict(belief, model).belief, model, y).belief


# -- extended Kalman filter ------------------------------------------------------


def ekf_predict(belief: GaussianBelief, model: GaussianModel, from_full: bool = False) -> Prediction:
    x, S = _select(model, belief, from_full)
    F = model.F_at(x)
    if S is not None:
        F = F @ S
    m = model.f(x)
    P = F @ belief.covariance @ F.T + model.Q
    return Prediction(GaussianBelief(m, P), belief.covariance @ F.T)


def ekf_update(belief: GaussianBelief, model: GaussianModel, y) -> Update:
    x = belief.mean
    H = model.H_at(x)
    P = belief.covariance
    S = H @ P @ H.T + model.R
    S = 0.5 * (S + S.T)
    innov = model.residual(np.asarray(y, dtype=float), model.h(x))
    return Update(*_correct(x, P, innov, S, P @ H.T))


def ekf_step(belief: GaussianBelief, model: GaussianModel, y) -> GaussianBelief:
    return ekf_update(ekf_predict(belief, model).belief, model, y).belief


# -- unscented Kalman filter ---------------------------------------------------


class UtWeights(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    scale: float


def ut_weights(n: int, alpha: float = 1.0, beta: float = 2.0, kappa: float | None = None) -> UtWeights:
    kappa = 3.0 - n if kappa is None else kappa
    lam = alpha**2 * (n + kappa) - n
    c = n + lam
    wm = np.full(2 * n + 1, 1.0 / (2 * c))
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1 - alpha**2 + beta)
    return UtWeights(wm, wc, c)


def matrix_sqrt(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, or the symmetric eigen square root when P is singular."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (P + P.T))
        scale = max(1.0, float(np.max(np.abs(w))))
        if w.min() < -PSD_TOL * scale:
            raise np.linalg.LinAlgError(f"covariance is not positive semidefinite:\n{P}") from None
        return V * np.sqrt(np.clip(w, 0, None))


def sigma_points(mean, cov, weights: UtWeights | None = None) -> tuple[np.ndarray, UtWeights]:
    """``2n+1`` sigma points (rows) of N(mean, cov)."""
    mean = np.asarray(mean, dtype=float)
    n = mean.size
    weights = weights or ut_weights(n)
    L = matrix_sqrt(np.asarray(cov, dtype=float)) * math.sqrt(weights.scale)
    X = np.empty((2 * n + 1, n))
    X[0] = mean
    X[1 : n + 1] = mean + L.T
    X[n + 1 :] = mean - L.T
    return X, weights


def unscented_transform(func, mean, cov, residual=None):
    """Mean, covariance and cross-covariance of ``func`` applied to N(mean, cov)."""
    X, w = sigma_points(mean, cov)
    Y = np.asarray(func(X), dtype=float).reshape(len(X), -1)
    if residual is None:
        y_mean = w.mean @ Y
        dY = Y - y_mean
    else:
        ref = Y[0]
        y_mean = ref + w.mean @ residual(Y, ref)
        dY = residual(Y, y_mean)
    dX = X - np.asarray(mean, dtype=float)
    cov_y = (w.cov * dY.T) @ dY
    cross = (w.cov * dX.T) @ dY
    return y_mean, cov_y, cross


def ukf_predict(belief: GaussianBelief, model: GaussianModel, from_full: bool = False) -> Prediction:
    if from_full:
        idx = list(model.index)
        func = lambda X: model.f(X[:, idx])  # noqa: E731
    else:
        func = model.f
    m, P, C = unscented_transform(func, belief.mean, belief.covariance)
    return Prediction(GaussianBelief(m, P + model.Q), C)


def ukf_update(belief: GaussianBelief, model: GaussianModel, y) -> Update:
    z, S, C = unscented_transform(model.h, belief.mean, belief.covariance, model._residual)
    S = S + model.R
    S = 0.5 * (S + S.T)
    innov = model.residual(np.asarray(y, dtype=float), z)
    return Update(*_correct(belief.mean, belief.covariance, innov, S, C))


def ukf_step(belief: GaussianBelief, model: GaussianModel, y) -> GaussianBelief:
    return ukf_update(ukf_predict(belief, model).belief, model, y).belief


# -- whole-record filtering and RTS smoothing ------------------------------------------

METHODS = {
    "kf": (kf_predict, kf_update),
    "ekf": (ekf_predict, ekf_update),
    "ukf": (ukf_predict, ukf_update),
}


class FilterRecord(NamedTuple):
    predicted: GaussianBelief | None
    filtered: GaussianBelief
    cross: np.ndarray | None


def run_filter(prior: GaussianBelief, model: GaussianModel, ys, method: str = "kf", predict_first: bool = False) -> list[FilterRecord]:
    """Filter a record. The first observation is applied to the prior directly
    unless ``predict_first`` is set."""
    predict, update = METHODS[method]
    out = []
    b = prior
    for k, y in enumerate(ys):
        if k > 0 or predict_first:
            pred = predict(b, model)
            b_pred, cross = pred.belief, pred.cross
        else:
            b_pred, cross = None, None
        b = update(b if b_pred is None else b_pred, model, y).belief
        out.append(FilterRecord(b_pred, b, cross))
    return out


def rts_step(filtered: GaussianBelief, predicted_next: GaussianBelief, cross_next: np.ndarray, smoothed_next: GaussianBelief) -> GaussianBelief:
    """One backward step with gain ``G = Cov(x_k, x_{k+1}) P_{k+1|k}^-1``."""
    try:
        G = np.linalg.solve(predicted_next.covariance.T, cross_next.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular predicted covariance in RTS smoother") from exc
    m = filtered.mean + G @ (smoothed_next.mean - predicted_next.mean)
    P = filtered.covariance + G @ (smoothed_next.covariance - predicted_next.covariance) @ G.T
    return GaussianBelief(m, P)


def rts_smooth(filtered: Sequence[GaussianBelief], predicted: Sequence[GaussianBelief | None], model: GaussianModel | None = None, crosses=None) -> list[GaussianBelief]:
    """Rauch-Tung-Striebel smoother.

    ``predicted[k]`` is the one-step prediction for step ``k``. Cross
    covariances default to ``P_k F^T`` from a linear ``model``; pass
    ``crosses`` (aligned like ``predicted``) for EKF/UKF records.
    """
    n = len(filtered)
    out: list[GaussianBelief] = [None] * n  # type: ignore[list-item]
    out[-1] = filtered[-1]
    for k in range(n - 2, -1, -1):
        if crosses is not None:
            C = crosses[k + 1]
        else:
            C = filtered[k].covariance @ model.F_at(filtered[k].mean).T
        out[k] = rts_step(filtered[k], predicted[k + 1], C, out[k + 1])
    return out


def smooth_records(records: Sequence[FilterRecord]) -> list[GaussianBelief]:
    return rts_smooth(
        [r.filtered for r in records],
        [r.predicted for r in records],
        crosses=[r.cross for r in records],
    )
