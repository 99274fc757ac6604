"""Self-loop prediction, the RK4 reference model and trajectory metrics."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .integrate import IntegrationError, Trajectory, rk4_step
from .models import RangeWarning
from .sample import SamplingBox

DIVERGENCE_FACTOR = 1e3


@dataclass
class RolloutResult:
    trajectory: Trajectory
    latency_s: np.ndarray
    diverged: bool = False
    divergence_step: int | None = None
    warmup: int = 10
    scaled_mse: float | None = None

    @property
    def median_latency(self) -> float:
        lat = self.latency_s[self.warmup:] if len(self.latency_s) > self.warmup else self.latency_s
        return float(np.median(lat)) if len(lat) else float("nan")


class RK4Oracle:
    """Stands in for a surrogate by integrating the true dynamics.

    Step k integrates ``substeps`` RK4 steps of size T / substeps at global
    times (k * substeps + i) * h, so a self-loop with the oracle reproduces
    ``simulate`` on the same step grid exactly. ``step_inputs`` hands the
    signal and the step start time to ``advance`` rather than knots.
    """

    arch = "rk4"
    order = None

    def __init__(self, rhs, f: float, signal, substeps: int = 10, box: SamplingBox | None = None):
        self.rhs = rhs
        self.f = f
        self.signal = signal
        self.substeps = substeps
        self.box = box

    @property
    def T(self) -> float:
        return 1.0 / self.f

    @property
    def h(self) -> float:
        return self.T / self.substeps

    def step_inputs(self, signal, t0: float):
        return int(round(t0 * self.f))

    def advance(self, x, k):
        u_of_t = lambda t: np.atleast_1d(np.asarray(self.signal(t), dtype=float))
        h = self.h
        for i in range(self.substeps):
            x = rk4_step(self.rhs, x, u_of_t, (k * self.substeps + i) * h, h)
        return x


def _diverged(x, box) -> bool:
    if not np.all(np.isfinite(x)):
        return True
    if box is None:
        return False
    return bool(np.any(np.abs(x - box.x_center) > DIVERGENCE_FACTOR * box.x_half))


def self_loop(model, x0, signal, n_steps: int, warmup: int = 10) -> RolloutResult:
    """Feed each prediction back as the next initial state at step T = 1/f.

    Step k uses the excitation knots of [kT, (k+1)T] taken from ``signal``.
    Only the prediction call is timed. A non-finite state, or one farther
    than 1e3 half-widths from the box center, truncates the rollout.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    x = np.asarray(x0, dtype=float).copy()
    T = model.T
    times = [0.0]
    states = [x.copy()]
    inputs = [np.atleast_1d(np.asarray(signal(0.0), dtype=float))]
    lat = np.empty(n_steps)
    box = getattr(model, "box", None)
    diverged, div_step = False, None
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RangeWarning)
        for k in range(n_steps):
            knots = model.step_inputs(signal, k * T)
            t0 = time.perf_counter()
            try:
                x = model.advance(x, knots)
            except (IntegrationError, FloatingPointError):
                x = np.full_like(x, np.nan)
            lat[k] = time.perf_counter() - t0
            if _diverged(x, box):
                diverged, div_step = True, k + 1
                lat = lat[:k + 1]
                break
            times.append((k + 1) * T)
            states.append(np.array(x))
            inputs.append(np.atleast_1d(np.asarray(signal((k + 1) * T), dtype=float)))
    traj = Trajectory(np.array(times), np.array(states), np.array(inputs))
    return RolloutResult(traj, lat, diverged, div_step, warmup=warmup)


def _truth_on_grid(truth: Trajectory, t: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(truth.times, t), 0, len(truth.times) - 1)
    prev = np.clip(idx - 1, 0, None)
    near = np.where(np.abs(truth.times[prev] - t) < np.abs(truth.times[idx] - t), prev, idx)
    exact = np.abs(truth.times[near] - t) <= 1e-9 * np.maximum(1.0, np.abs(t))
    out = np.empty((len(t), truth.states.shape[1]))
    out[exact] = truth.states[near[exact]]
    if np.any(~exact):
        for j in range(out.shape[1]):
            out[~exact, j] = np.interp(t[~exact], truth.times, truth.states[:, j])
    return out


def scaled_mse(pred: Trajectory, truth: Trajectory, box: SamplingBox, horizon: float | None = None) -> float:
    """MSE with every state channel divided by its box half-width.

    Uses the prediction points in (0, horizon]; the shared start point is
    left out. Truth values come from matching grid points or linear
    interpolation.
    """
    end = min(pred.times[-1], truth.times[-1])
    if horizon is not None:
        if horizon > end * (1 + 1e-12):
            raise ValueError(f"horizon {horizon} exceeds the available overlap {end}")
        end = horizon
    tol = 1e-9 * max(1.0, end)
    keep = (pred.times > tol) & (pred.times <= end + tol) & (pred.times >= truth.times[0] - tol)
    if not np.any(keep):
        raise ValueError("prediction and truth do not overlap after t = 0")
    t = pred.times[keep]
    ref = _truth_on_grid(truth, t)
    err = (pred.states[keep] - ref) / box.x_half
    return float(np.mean(err ** 2))


def benchmark_prediction_time(model, reference, x0, signal, n_steps: int = 1000,
                              warmup: int = 50) -> dict:
    """Median per-step latency of ``model`` relative to ``reference``.

    Both run interleaved self-loops on the same signal; a state that leaves
    the finite range is reset to ``x0`` so timing continues.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    x0 = np.asarray(x0, dtype=float)
    runners = [model, reference]
    knots = [[r.step_inputs(signal, k * r.T) for k in range(n_steps + warmup)] for r in runners]
    xs = [x0.copy(), x0.copy()]
    lat = np.zeros((2, n_steps + warmup))
    clock = time.perf_counter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RangeWarning)
        with np.errstate(all="ignore"):
            for k in range(n_steps + warmup):
                for i in (0, 1) if k % 2 == 0 else (1, 0):
                    r = runners[i]
                    t0 = clock()
                    x = r.advance(xs[i], knots[i][k])
                    lat[i, k] = clock() - t0
                    xs[i] = x if np.all(np.isfinite(x)) and np.all(np.abs(x) < 1e12) else x0.copy()
    med = np.median(lat[:, warmup:], axis=1)
    return {"model_s": float(med[0]), "reference_s": float(med[1]),
            "ratio": float(med[0] / med[1]), "n_steps": n_steps}
