"""Interpolated excitation over one prediction interval.

Knots are ``u_0`` (always), ``u_{T/2}`` (second order only) and ``u_T``
(first and second order), with t* = t / T::

    order 1: u_T t* + (1 - t*) u_0
    order 2: (2u_0 - 4u_T/2 + 2u_T) t*^2 + (-3u_0 + 4u_T/2 - u_T) t* + u_0

Both are evaluated in the Lagrange basis, whose weights are exactly 0 or 1
at the knot times, so every knot is reproduced exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORDERS = (0, 1, 2)


def n_knots(order: int) -> int:
    if order not in ORDERS:
        raise ValueError(f"excitation order must be one of {ORDERS}, got {order}")
    return order + 1


def knot_times(order: int, T: float) -> tuple:
    return {0: (0.0,), 1: (0.0, T), 2: (0.0, 0.5 * T, T)}[order]


def interpolate(knots, order: int, t, T: float, t_limit: float | None = None):
    """Excitation at time(s) ``t`` from knots of shape (..., order + 1, p).

    ``t`` is a scalar or broadcasts against the leading axes of ``knots``.
    """
    knots = np.asarray(knots, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("excitation requested before the interval start")
    limit = 1.1 * T if t_limit is None else t_limit
    if np.any(t > limit * (1 + 1e-12)):
        raise ValueError(f"excitation requested beyond the trained horizon {limit}")
    if knots.shape[-2] != n_knots(order):
        raise ValueError(f"order {order} needs {order + 1} knots, got {knots.shape[-2]}")
    if order == 0:
        return knots[..., 0, :] + 0.0 * t[..., None]
    s = (t / T)[..., None]
    # Lagrange basis: exactly 0 or 1 at the knot times, so knots are reproduced exactly
    if order == 1:
        return (1.0 - s) * knots[..., 0, :] + s * knots[..., 1, :]
    l0 = (2.0 * s - 1.0) * (s - 1.0)
    l1 = 4.0 * s * (1.0 - s)
    l2 = s * (2.0 * s - 1.0)
    return l0 * knots[..., 0, :] + l1 * knots[..., 1, :] + l2 * knots[..., 2, :]


@dataclass
class ExcitationPlan:
    """Knots of one interval; ``knots`` has shape (order + 1, p)."""

    order: int
    knots: np.ndarray
    T: float

    def __post_init__(self):
        self.knots = np.atleast_2d(np.asarray(self.knots, dtype=float))
        if self.knots.shape[0] != n_knots(self.order):
            raise ValueError(f"order {self.order} needs {self.order + 1} knots")
        if not self.T > 0:
            raise ValueError("interval length must be positive")

    @property
    def T_s(self) -> float:
        return 1.1 * self.T

    @property
    def flat(self) -> np.ndarray:
        """Concatenated knot vector (u_0, [u_T/2], [u_T])."""
        return self.knots.reshape(-1)

    @classmethod
    def from_signal(cls, signal, order: int, t0: float, T: float) -> "ExcitationPlan":
        return cls(order, sample_knots(signal, order, t0, T), T)


def sample_knots(signal, order: int, t0: float, T: float) -> np.ndarray:
    """Knots of the interval starting at ``t0`` taken from a signal u(t)."""
    return np.stack([np.atleast_1d(np.asarray(signal(t0 + dt), dtype=float))
                     for dt in knot_times(order, T)])


def interpolate_excitation(plan: ExcitationPlan, t):
    return interpolate(plan.knots, plan.order, t, plan.T)
