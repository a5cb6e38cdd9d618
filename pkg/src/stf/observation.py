"""Observations and sensor models used by the fitting engine."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from stf.errors import EvaluationError


@dataclass(frozen=True, eq=False)
class Observation:
    """A timestamped sensor datum.

    ``value`` is always stored as a 1-D float array.
    """

    time: float
    sensor_id: int
    value: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.time):
            raise ValueError(f"observation time must be finite, got {self.time}")
        if not (self.weight >= 0):
            raise ValueError(f"observation weight must be >= 0, got {self.weight}")
        v = np.array(self.value, dtype=float, ndmin=1)
        v.setflags(write=False)
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "sensor_id", int(self.sensor_id))


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


class ObservationModel:
    """Maps a directly-observed state to a predicted observation.

    Subclasses implement ``predict``; ``jacobian`` returning ``None`` makes
    the fitting engine fall back to finite differences on the coefficients.
    """

    state_dim: int = 1
    #: True when ``h(x) = x`` so the closed-form linear fit applies.
    identity: bool = False

    def predict(self, states: np.ndarray, sensor_ids: np.ndarray) -> np.ndarray:
        """Batch prediction: ``states`` (N, D) -> observations (N, Dy)."""
        raise NotImplementedError

    def jacobian(self, states: np.ndarray, sensor_ids: np.ndarray) -> np.ndarray | None:
        """Batch Jacobian ``dh/dx`` of shape (N, Dy, D), or None."""
        return None

    def difference(self, y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
        return y - y_hat

    def project(self, observations: Sequence[Observation]):
        """Observation-only (O2) projection into state space.

        Returns ``(times, states)`` arrays or ``None`` when the model is not
        invertible from the given data.
        """
        return None

    def __call__(self, state, sensor_id: int = 0) -> np.ndarray:
        s = np.asarray(state, dtype=float).reshape(1, -1)
        return self.predict(s, np.array([sensor_id]))[0]


class IdentityModel(ObservationModel):
    """Direct observation of every state dimension."""

    identity = True

    def __init__(self, dim: int):
        self.state_dim = int(dim)

    def predict(self, states, sensor_ids):
        return np.asarray(states, dtype=float)

    def jacobian(self, states, sensor_ids):
        n = len(states)
        return np.broadcast_to(np.eye(self.state_dim), (n, self.state_dim, self.state_dim))

    def project(self, observations):
        if not observations:
            return None
        return (np.array([o.time for o in observations]), np.array([o.value for o in observations]))


class BearingModel(ObservationModel):
    """Two-argument arctangent bearing from fixed sensors to a planar target."""

    state_dim = 2

    def __init__(self, sensors, min_range: float = 1e-9):
        self.sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
        self.min_range = min_range

    def _offsets(self, states, sensor_ids):
        d = np.asarray(states, dtype=float)[:, :2] - self.sensors[np.asarray(sensor_ids, dtype=int)]
        r2 = d[:, 0] ** 2 + d[:, 1] ** 2
        if np.any(r2 < self.min_range**2):
            raise EvaluationError("bearing undefined: target coincides with sensor")
        return d, r2

    def predict(self, states, sensor_ids):
        d, _ = self._offsets(states, sensor_ids)
        return np.arctan2(d[:, 1], d[:, 0])[:, None]

    def jacobian(self, states, sensor_ids):
        d, r2 = self._offsets(states, sensor_ids)
        J = np.empty((len(d), 1, 2))
        J[:, 0, 0] = -d[:, 1] / r2
        J[:, 0, 1] = d[:, 0] / r2
        return J

    def difference(self, y, y_hat):
        return wrap_angle(y - y_hat)

    def triangulate(self, bearings, sensor_ids) -> np.ndarray | None:
        """Least-squares intersection of the bearing lines (needs >= 2 sensors)."""
        ids = np.asarray(sensor_ids, dtype=int)
        if len(set(ids.tolist())) < 2:
            return None
        th = np.asarray(bearings, dtype=float).ravel()
        n = np.column_stack([-np.sin(th), np.cos(th)])
        rhs = np.einsum("ij,ij->i", n, self.sensors[ids])
        A = n.T @ n
        if np.linalg.cond(A) > 1e12:
            return None
        return np.linalg.solve(A, n.T @ rhs)

    def project(self, observations):
        groups: dict[float, list[Observation]] = {}
        for o in observations:
            groups.setdefault(o.time, []).append(o)
        times, states = [], []
        for t in sorted(groups):
            obs = groups[t]
            p = self.triangulate([o.value[0] for o in obs], [o.sensor_id for o in obs])
            if p is not None:
                times.append(t)
                states.append(p)
        if not times:
            return None
        return np.array(times), np.array(states)


class RangeModel(ObservationModel):
    """Slant range from a radar at horizontal offset ``M`` and altitude ``H``."""

    state_dim = 1

    def __init__(self, M: float, H: float):
        self.M = float(M)
        self.H = float(H)

    def predict(self, states, sensor_ids):
        dh = np.asarray(states, dtype=float)[:, 0] - self.H
        return np.sqrt(self.M**2 + dh**2)[:, None]

    def jacobian(self, states, sensor_ids):
        dh = np.asarray(states, dtype=float)[:, 0] - self.H
        r = np.sqrt(self.M**2 + dh**2)
        if np.any(r == 0):
            raise EvaluationError("range Jacobian undefined at zero range")
        return (dh / r)[:, None, None]


class CallableModel(ObservationModel):
    """Wraps a user function ``h(state, sensor_id) -> observation``.

    No analytic Jacobian: the fitting engine differentiates numerically.
    """

    def __init__(self, func: Callable[[np.ndarray, int], np.ndarray], state_dim: int):
        self.func = func
        self.state_dim = int(state_dim)

    def predict(self, states, sensor_ids):
        return np.array(
            [np.atleast_1d(self.func(s, int(i))) for s, i in zip(np.asarray(states, dtype=float), sensor_ids)],
            dtype=float,
        )
