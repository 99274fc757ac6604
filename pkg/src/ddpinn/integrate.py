"""Fixed-step RK4 reference integration and training-data generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import excitation
from .sample import SamplingBox, lhs_box

log = logging.getLogger(__name__)


class IntegrationError(FloatingPointError):
    """Non-finite state during integration (stiffness or blow-up)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        n = len(self.times)
        if len(self.states) != n or len(self.inputs) != n:
            raise ValueError("times, states and inputs need equal lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def rk4_step(rhs, x, u_of_t, t, h):
    """One classical Runge-Kutta step; the input is sampled at t, t + h/2, t + h.

    ``x`` may be a batch (n, m) with per-row ``t`` and ``h`` of shape (n,).
    """
    if np.any(np.asarray(h) <= 0):
        raise ValueError("step size must be positive")
    hh = np.asarray(h)[..., None] if np.ndim(h) else h
    u0 = u_of_t(t)
    um = u_of_t(t + 0.5 * np.asarray(h))
    u1 = u_of_t(t + np.asarray(h))
    k1 = rhs(x, u0)
    k2 = rhs(x + 0.5 * hh * k1, um)
    k3 = rhs(x + 0.5 * hh * k2, um)
    k4 = rhs(x + hh * k3, u1)
    out = x + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after RK4 step at t={t}", time=t)
    return out


def _as_input(signal, t):
    return np.atleast_1d(np.asarray(signal(t), dtype=float))


def simulate(rhs, x0, u_signal, duration: float, h: float) -> Trajectory:
    """Fixed-step RK4 rollout recording every step on the grid t_i = i h."""
    if not duration > 0 or not h > 0:
        raise ValueError("duration and step must be positive")
    n = int(round(duration / h))
    x = np.asarray(x0, dtype=float).copy()
    u_of_t = lambda t: _as_input(u_signal, t)
    states = np.empty((n + 1, x.size))
    inputs = np.empty((n + 1, u_of_t(0.0).size))
    times = np.arange(n + 1) * h
    states[0] = x
    for i in range(n):
        inputs[i] = u_of_t(times[i])
        x = rk4_step(rhs, x, u_of_t, times[i], h)
        states[i + 1] = x
    inputs[n] = u_of_t(times[n])
    return Trajectory(times, states, inputs)


def integrate_interval(rhs, x0, knots, order: int, T: float, t, substeps: int):
    """Integrate batched initial states from 0 to ``t`` under interpolated excitation.

    Every row takes ``substeps`` equal steps of size t_i / substeps; rows with
    t_i = 0 are returned unchanged.
    """
    x = np.array(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    knots = np.asarray(knots, dtype=float)
    moving = t > 0
    if not np.any(moving):
        return x
    xm, km, tm = x[moving], knots[moving], t[moving]
    h = tm / substeps
    u_of_t = lambda s: excitation.interpolate(km, order, s, T, t_limit=np.inf)
    for i in range(substeps):
        xm = rk4_step(rhs, xm, u_of_t, i * h, h)
    x[moving] = xm
    return x


@dataclass
class Dataset:
    """Supervised tuples (x0, excitation knots, t) -> x_t."""

    x0: np.ndarray
    knots: np.ndarray
    t: np.ndarray
    x_t: np.ndarray

    def __len__(self):
        return len(self.t)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x0[idx], self.knots[idx], self.t[idx], self.x_t[idx])

    @classmethod
    def empty(cls, m: int, p: int, order: int) -> "Dataset":
        k = order + 1
        return cls(np.zeros((0, m)), np.zeros((0, k, p)), np.zeros(0), np.zeros((0, m)))


def generate_dataset(rhs, box: SamplingBox, order: int, T: float, n_data: int, seed,
                     substeps: int = 110, max_retries: int = 10) -> Dataset:
    """Latin hypercube draws of (x0, knots, t) with RK4 targets.

    The default ``substeps`` keeps the step at most T/100 over the full
    horizon 1.1 T.
    """
    m, p, k = box.m, box.p, order + 1
    if n_data < 0:
        raise ValueError("n_data must be non-negative")
    if n_data == 0:
        return Dataset.empty(m, p, order)
    pts = lhs_box(n_data, box, k, seed)
    x0 = pts[:, :m]
    knots = pts[:, m:m + k * p].reshape(n_data, k, p)
    t = pts[:, -1]
    x_t = np.full((n_data, m), np.nan)
    todo = np.arange(n_data)
    for attempt in range(max_retries + 1):
        try:
            x_t[todo] = integrate_interval(rhs, x0[todo], knots[todo], order, T, t[todo], substeps)
            todo = todo[:0]
        except IntegrationError:
            pass
        for i in todo:
            try:
                x_t[i] = integrate_interval(rhs, x0[i:i + 1], knots[i:i + 1], order, T,
                                            t[i:i + 1], substeps)[0]
            except IntegrationError:
                x_t[i] = np.nan
        todo = np.flatnonzero(~np.all(np.isfinite(x_t), axis=1))
        if todo.size == 0:
            break
        if attempt == max_retries:
            raise IntegrationError(f"{todo.size} dataset points kept diverging")
        log.warning("resampling %d diverged dataset points", todo.size)
        fresh = lhs_box(todo.size, box, k, (seed, attempt + 1))
        x0[todo] = fresh[:, :m]
        knots[todo] = fresh[:, m:m + k * p].reshape(todo.size, k, p)
        t[todo] = fresh[:, -1]
    return Dataset(x0, knots, t, x_t)
