"""Pieces shared by the benchmark scenarios: RK4, RMSE and CSV export."""

from __future__ import annotations

import csv
import io
from typing import Callable, Sequence

import numpy as np

from stf.observation import Observation


def rk4_step(x: np.ndarray, f: Callable[[np.ndarray], np.ndarray], dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step (``f`` acts on the last axis)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_integrate(x: np.ndarray, f, duration: float, substeps: int) -> np.ndarray:
    dt = duration / substeps
    for _ in range(substeps):
        x = rk4_step(x, f, dt)
    return x


def rmse(estimates, truths) -> tuple[np.ndarray, float]:
    """Per-step RMSE over runs and its mean over steps.

    Args:
        estimates: ``(runs, steps, d)`` (or ``(steps, d)`` for one run).
        truths: same shape, or ``(steps, d)`` shared by all runs.

    Returns:
        ``(rmse_k, mean)`` with ``rmse_k[k] = sqrt(mean_r |e_rk|^2)``.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.ndim == 2:
        est = est[None]
    if tru.ndim == 1:
        tru = tru[:, None]
    if tru.ndim == 2:
        tru = np.broadcast_to(tru, est.shape)
    if est.shape != tru.shape:
        raise ValueError(f"estimate shape {est.shape} does not match truth shape {tru.shape}")
    err2 = np.sum((est - tru) ** 2, axis=-1)
    per_step = np.sqrt(err2.mean(axis=0))
    return per_step, float(per_step.mean())


def observations_csv(scans: Sequence[Sequence[Observation]]) -> str:
    """``step,time,sensor_id,dim0..`` rows, one per observation."""
    dims = max(o.value.size for scan in scans for o in scan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", "sensor_id"] + [f"dim{i}" for i in range(dims)])
    for k, scan in enumerate(scans):
        for o in scan:
            w.writerow([k, repr(float(o.time)), o.sensor_id] + [repr(float(v)) for v in o.value])
    return buf.getvalue()


def truth_csv(times, states) -> str:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", "sensor_id"] + [f"dim{i}" for i in range(states.shape[1])])
    for k, (t, x) in enumerate(zip(times, states)):
        w.writerow([k, repr(float(t)), -1] + [repr(float(v)) for v in x])
    return buf.getvalue()
