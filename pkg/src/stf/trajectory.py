"""Continuous-time trajectory functions (FoT).

A trajectory is a linear combination of basis functions evaluated in the
shifted time ``tau = t - t_ref``::

    F(t; C) = sum_i C[d, i] * phi_i(t - t_ref)      for every state dimension d

The *order* ``m`` is the number of basis terms, so an order-``m`` monomial
basis is a polynomial of degree ``m - 1``: order 2 is a constant-velocity
line, order 3 a constant-acceleration parabola.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

MONOMIAL = "monomial"
TRIGONOMETRIC = "trigonometric"
CUSTOM = "custom"
_KINDS = (MONOMIAL, TRIGONOMETRIC, CUSTOM)

_CUSTOM_FD_STEP = 1e-4


@dataclass(frozen=True)
class BasisSpec:
    """Basis function family of a trajectory.

    Args:
        kind: ``"monomial"`` gives ``[1, tau, tau**2, ...]``.
            ``"trigonometric"`` gives ``[1, sin(w tau + p), cos(w tau + p),
            sin(2 w tau + p), ...]`` truncated to ``order`` terms, so order 2
            is ``[1, sin(w tau)]``; use ``phase=pi/2`` for ``[1, cos(w tau)]``.
            ``"custom"`` uses ``functions`` verbatim.
        order: number of terms ``m`` (degree ``m - 1`` for monomials).
        omega: fundamental angular frequency (rad/s), trigonometric only.
        phase: phase offset (rad), trigonometric only.
        functions: vectorized callables ``f(tau) -> array`` for ``"custom"``.
    """

    kind: str = MONOMIAL
    order: int = 2
    omega: float = 1.0
    phase: float = 0.0
    functions: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == CUSTOM:
            if not self.functions:
                raise ValueError("custom basis needs at least one function")
            object.__setattr__(self, "order", len(self.functions))
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"basis order must be a positive integer, got {self.order}")

    def matrix(self, tau) -> np.ndarray:
        """Collocation matrix, shape ``(len(tau), order)``."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        m = self.order
        if self.kind == MONOMIAL:
            return np.vander(tau, m, increasing=True)
        if self.kind == TRIGONOMETRIC:
            out = np.empty((tau.size, m))
            out[:, 0] = 1.0
            for j in range(1, m):
                k = (j + 1) // 2
                arg = k * self.omega * tau + self.phase
                out[:, j] = np.sin(arg) if j % 2 else np.cos(arg)
            return out
        return np.column_stack([np.broadcast_to(f(tau), tau.shape) for f in self.functions]).astype(float)

    def derivative_matrix(self, tau, order: int) -> np.ndarray:
        """Matrix of ``d^order phi_i / dt^order`` at ``tau``."""
        if order < 0:
            raise ValueError("derivative order must be nonnegative")
        if order == 0:
            return self.matrix(tau)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        m = self.order
        if self.kind == MONOMIAL:
            out = np.zeros((tau.size, m))
            for i in range(order, m):
                scale = math.perm(i, order)
                out[:, i] = scale * tau ** (i - order)
            return out
        if self.kind == TRIGONOMETRIC:
            out = np.zeros((tau.size, m))
            for j in range(1, m):
                k = (j + 1) // 2
                w = k * self.omega
                arg = w * tau + self.phase + order * math.pi / 2
                out[:, j] = w**order * (np.sin(arg) if j % 2 else np.cos(arg))
            return out
        # custom: repeated central differences
        h = _CUSTOM_FD_STEP
        return (self.derivative_matrix(tau + h, order - 1) - self.derivative_matrix(tau - h, order - 1)) / (2 * h)


def basis_vector(spec: BasisSpec, t: float, t_ref: float = 0.0) -> np.ndarray:
    """``[phi_1(tau), ..., phi_m(tau)]`` with ``tau = t - t_ref``."""
    return spec.matrix(float(t) - float(t_ref))[0]


class Evaluation(NamedTuple):
    value: np.ndarray
    extrapolated: bool


@dataclass(frozen=True, eq=False)
class FotParams:
    """Fitted trajectory coefficients.

    ``coeffs`` has shape ``(D, m)``: one row of ``m`` coefficients per state
    dimension, expressed in ``tau = t - t_ref``. ``basis`` is either one
    ``BasisSpec`` shared by all dimensions or a tuple with one per dimension
    (all of the same order).
    """

    coeffs: np.ndarray
    basis: BasisSpec | tuple[BasisSpec, ...] = field(default_factory=BasisSpec)
    t_ref: float = 0.0
    valid_window: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, ndmin=2)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        bases = self.bases
        if len(bases) != c.shape[0]:
            raise ValueError(f"{len(bases)} bases given for {c.shape[0]} dimensions")
        for b in bases:
            if b.order != c.shape[1]:
                raise ValueError(f"basis order {b.order} does not match {c.shape[1]} coefficients")
        k1, k2 = self.valid_window
        if k1 > k2:
            raise ValueError(f"valid window is reversed: {self.valid_window}")

    @property
    def bases(self) -> tuple[BasisSpec, ...]:
        if isinstance(self.basis, BasisSpec):
            return (self.basis,) * self.coeffs.shape[0]
        return tuple(self.basis)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def order(self) -> int:
        return self.coeffs.shape[1]

    def values(self, t, deriv: int = 0) -> np.ndarray:
        """Trajectory (or its ``deriv``-th time derivative) at times ``t``.

        Returns shape ``(D,)`` for scalar ``t`` and ``(N, D)`` otherwise.
        """
        scalar = np.ndim(t) == 0
        tau = np.atleast_1d(np.asarray(t, dtype=float)) - self.t_ref
        if isinstance(self.basis, BasisSpec):
            out = self.basis.derivative_matrix(tau, deriv) @ self.coeffs.T
        else:
            out = np.column_stack(
                [b.derivative_matrix(tau, deriv) @ c for b, c in zip(self.basis, self.coeffs)]
            )
        return out[0] if scalar else out

    __call__ = values

    def contains(self, t: float) -> bool:
        k1, k2 = self.valid_window
        return k1 <= t <= k2

    def with_window(self, valid_window: tuple[float, float]) -> FotParams:
        return FotParams(self.coeffs, self.basis, self.t_ref, valid_window)


def evaluate(fot: FotParams, t: float) -> Evaluation:
    """State at ``t``; flagged as extrapolated outside ``fot.valid_window``."""
    return Evaluation(fot.values(float(t)), not fot.contains(float(t)))


def derivative(fot: FotParams, t: float, order: int = 1) -> np.ndarray:
    """Analytic ``order``-th time derivative of the trajectory at ``t``."""
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    return fot.values(float(t), deriv=order)


def _shift_matrix(m: int, s: float) -> np.ndarray:
    # B[i, j] = binom(i, j) s^(i-j): re-expands sum c_i (tau' + s)^i in powers of tau'
    B = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1):
            B[i, j] = math.comb(i, j) * s ** (i - j)
    return B


def recenter(fot: FotParams, t_ref: float) -> FotParams:
    """Express the same trajectory about a new reference time.

    Monomial coefficients are re-expanded binomially. Other bases have no
    exact finite re-expansion in general, so they keep their reference time
    (evaluation is unaffected either way).
    """
    bases = fot.bases
    if not all(b.kind == MONOMIAL for b in bases):
        return fot
    B = _shift_matrix(fot.order, float(t_ref) - fot.t_ref)
    return FotParams(fot.coeffs @ B, fot.basis, float(t_ref), fot.valid_window)


_RECOMMENDED = {"CV": 2, "CA": 3}


def recommended_order(motion_class: str) -> int:
    """Basis order for a nominal motion class: CV -> 2 terms, CA -> 3 terms."""
    try:
        return _RECOMMENDED[motion_class.upper()]
    except KeyError:
        raise ValueError(f"unknown motion class {motion_class!r}; expected CV or CA") from None


def truncation_bound(deriv_bound: float, half_width: float, m: int) -> float:
    """Worst-case Lagrange remainder of an order-``m`` fit over ``t_ref +/- half_width``.

    ``deriv_bound`` bounds ``|f^(m)|`` over the window; the result is
    ``deriv_bound * half_width**m / m!``.
    """
    if deriv_bound < 0 or half_width < 0:
        raise ValueError("deriv_bound and half_width must be nonnegative")
    return deriv_bound * half_width**m / math.factorial(m)


def fot_from_coefficients(rows: Sequence[Sequence[float]], basis: BasisSpec | None = None, t_ref: float = 0.0) -> FotParams:
    """Convenience constructor from nested coefficient lists."""
    c = np.array(rows, dtype=float, ndmin=2)
    return FotParams(c, basis or BasisSpec(MONOMIAL, c.shape[1]), t_ref)
