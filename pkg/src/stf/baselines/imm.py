"""Interacting multiple model estimation.

Models in a bank may describe different subsets of a joint state (e.g. a
4-state constant-velocity model next to a 6-state constant-acceleration
model); components a model does not carry are treated as zero mean with zero
covariance when mixing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from stf.baselines.gaussian import METHODS, GaussianBelief, GaussianModel, rts_step


@dataclass(frozen=True, eq=False)
class ImmBank:
    models: tuple[GaussianModel, ...]
    transition: np.ndarray
    probabilities: np.ndarray
    method: str = "kf"

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        mu = np.asarray(self.probabilities, dtype=float)
        n = len(self.models)
        if T.shape != (n, n):
            raise ValueError(f"transition matrix must be {n}x{n}")
        if not np.allclose(T.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix rows must sum to 1")
        if mu.shape != (n,) or np.any(mu < 0) or not np.isclose(mu.sum(), 1.0, atol=1e-12):
            raise ValueError("mode probabilities must be a probability vector")
        if self.method not in METHODS:
            raise ValueError(f"unknown filter method {self.method!r}")
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "probabilities", mu)

    @property
    def full_dim(self) -> int:
        return 1 + max(max(m.index) for m in self.models)

    def with_probabilities(self, mu) -> ImmBank:
        return replace(self, probabilities=np.asarray(mu, dtype=float))


def pad(belief: GaussianBelief, index: Sequence[int], dim: int) -> GaussianBelief:
    idx = list(index)
    m = np.zeros(dim)
    P = np.zeros((dim, dim))
    m[idx] = belief.mean
    P[np.ix_(idx, idx)] = belief.covariance
    return GaussianBelief(m, P)


def restrict(belief: GaussianBelief, index: Sequence[int]) -> GaussianBelief:
    idx = list(index)
    return GaussianBelief(belief.mean[idx], belief.covariance[np.ix_(idx, idx)])


def moment_match(weights, beliefs: Sequence[GaussianBelief]) -> GaussianBelief:
    w = np.asarray(weights, dtype=float)
    means = np.array([b.mean for b in beliefs])
    m = w @ means
    P = np.zeros((m.size, m.size))
    for wi, b, mi in zip(w, beliefs, means):
        d = mi - m
        P += wi * (b.covariance + np.outer(d, d))
    return GaussianBelief(m, P)


def combine(bank: ImmBank, beliefs: Sequence[GaussianBelief], mu=None) -> GaussianBelief:
    D = bank.full_dim
    mu = bank.probabilities if mu is None else mu
    return moment_match(mu, [pad(b, mod.index, D) for b, mod in zip(beliefs, bank.models)])


def _mix(bank: ImmBank, beliefs):
    """Mixing step; returns the predicted mode probabilities and mixed priors."""
    T, mu = bank.transition, bank.probabilities
    c = T.T @ mu
    D = bank.full_dim
    padded = [pad(b, mod.index, D) for b, mod in zip(beliefs, bank.models)]
    mixed = []
    for j, mod in enumerate(bank.models):
        if c[j] > 0:
            w = T[:, j] * mu / c[j]
        else:
            w = np.eye(len(mu))[j]
        mixed.append(restrict(moment_match(w, padded), mod.index))
    return c, mixed


class ImmStep(NamedTuple):
    bank: ImmBank
    beliefs: list[GaussianBelief]
    combined: GaussianBelief


def imm_step(bank: ImmBank, beliefs: Sequence[GaussianBelief], y, predict: bool = True) -> ImmStep:
    """Mixing, per-model predict/update, mode-probability update, combination.

    With ``predict=False`` the observation is applied to the current beliefs
    directly (first step of a record).
    """
    predict_fn, update_fn = METHODS[bank.method]
    if predict:
        c, mixed = _mix(bank, beliefs)
        priors = [predict_fn(b, mod).belief for b, mod in zip(mixed, bank.models)]
    else:
        c = bank.probabilities
        priors = list(beliefs)
    posts, logliks = [], []
    for b, mod in zip(priors, bank.models):
        u = update_fn(b, mod, y)
        posts.append(u.belief)
        logliks.append(u.loglik)
    ll = np.array(logliks)
    finite = np.isfinite(ll)
    if not finite.any():
        warnings.warn("all IMM model likelihoods vanished; keeping predicted mode probabilities", RuntimeWarning, stacklevel=2)
        mu = c / c.sum()
    else:
        lik = np.where(finite, np.exp(ll - ll[finite].max()), 0.0)
        mu = c * lik
        if mu.sum() <= 0:
            warnings.warn("all IMM model likelihoods vanished; using uniform mode probabilities", RuntimeWarning, stacklevel=2)
            mu = np.full(len(c), 1.0 / len(c))
        else:
            mu = mu / mu.sum()
    new_bank = bank.with_probabilities(mu)
    return ImmStep(new_bank, posts, combine(new_bank, posts))


def imm_forecast(bank: ImmBank, beliefs: Sequence[GaussianBelief], n_steps: int) -> GaussianBelief:
    """``n_steps`` mixing + prediction cycles without measurement updates."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    predict_fn, _ = METHODS[bank.method]
    for _ in range(n_steps):
        c, mixed = _mix(bank, beliefs)
        beliefs = [predict_fn(b, mod).belief for b, mod in zip(mixed, bank.models)]
        bank = bank.with_probabilities(c / c.sum())
    return combine(bank, beliefs)


class ImmRecord(NamedTuple):
    probabilities: np.ndarray
    beliefs: list[GaussianBelief]
    combined: GaussianBelief


def run_imm(bank: ImmBank, beliefs: Sequence[GaussianBelief], ys) -> list[ImmRecord]:
    out = []
    for k, y in enumerate(ys):
        step = imm_step(bank, beliefs, y, predict=k > 0)
        bank, beliefs = step.bank, step.beliefs
        out.append(ImmRecord(bank.probabilities, beliefs, step.combined))
    return out


def imm_smooth(records: Sequence[ImmRecord], bank: ImmBank) -> list[GaussianBelief]:
    """Fixed-interval IMM smoother (per-model RTS passes with smoothed mode probabilities).

    For each pair (model i at k, model j at k+1) model i's filtered belief is
    RTS-smoothed through model j's dynamics towards model j's smoothed
    belief; the pairs are mixed with backward mode weights.
    """
    T = bank.transition
    D = bank.full_dim
    models = bank.models
    r = len(models)
    predict_fn, _ = METHODS[bank.method]
    n = len(records)
    mu_s = records[-1].probabilities.copy()
    sm = list(records[-1].beliefs)
    out: list[GaussianBelief] = [None] * n  # type: ignore[list-item]
    out[-1] = combine(bank, sm, mu_s)
    for k in range(n - 2, -1, -1):
        rec = records[k]
        mu_f = rec.probabilities
        c = T.T @ mu_f
        ratio = np.where(c > 0, mu_s / np.where(c > 0, c, 1.0), 0.0)
        new_mu = mu_f * (T @ ratio)
        if new_mu.sum() <= 0:
            new_mu = mu_f.copy()
        new_mu = new_mu / new_mu.sum()
        new_sm = []
        for i, mod_i in enumerate(models):
            padded = pad(rec.beliefs[i], mod_i.index, D)
            w = T[i] * ratio
            if w.sum() <= 0:
                new_sm.append(rec.beliefs[i])
                continue
            w = w / w.sum()
            pair = []
            for j, mod_j in enumerate(models):
                pred = predict_fn(padded, mod_j, from_full=True)
                pair.append(restrict(_rts_padded(padded, pred.belief, pred.cross, sm[j]), mod_i.index))
            new_sm.append(moment_match(w, pair))
        sm, mu_s = new_sm, new_mu
        out[k] = combine(bank, sm, mu_s)
    return out


def _rts_padded(filtered_full: GaussianBelief, predicted: GaussianBelief, cross, smoothed_next) -> GaussianBelief:
    return rts_step(filtered_full, predicted, cross, smoothed_next)
