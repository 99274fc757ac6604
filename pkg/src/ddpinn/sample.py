"""Latin hypercube sampling of collocation points and box normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SamplingBox:
    """Per-channel bounds of states, excitation and the time horizon.

    ``u_low``/``u_high`` bound a single excitation vector; every knot of a
    higher-order excitation shares them.
    """

    x_low: np.ndarray
    x_high: np.ndarray
    u_low: np.ndarray
    u_high: np.ndarray
    t_max: float

    def __post_init__(self):
        for name in ("x_low", "x_high", "u_low", "u_high"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        self.t_max = float(self.t_max)
        if np.any(self.x_high <= self.x_low) or np.any(self.u_high <= self.u_low):
            raise ValueError("degenerate sampling box: every channel needs min < max")
        if self.x_low.shape != self.x_high.shape or self.u_low.shape != self.u_high.shape:
            raise ValueError("bounds of the same group must have equal length")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    @classmethod
    def for_frequency(cls, x_low, x_high, u_low, u_high, f: float) -> "SamplingBox":
        return cls(x_low, x_high, u_low, u_high, 1.1 / f)

    @property
    def m(self) -> int:
        return self.x_low.size

    @property
    def p(self) -> int:
        return self.u_low.size

    @property
    def x_center(self):
        return 0.5 * (self.x_low + self.x_high)

    @property
    def x_half(self):
        return 0.5 * (self.x_high - self.x_low)

    @property
    def u_center(self):
        return 0.5 * (self.u_low + self.u_high)

    @property
    def u_half(self):
        return 0.5 * (self.u_high - self.u_low)

    def bounds(self, n_knots: int = 1, with_time: bool = True):
        """Low/high vectors over (x, u knots..., [t])."""
        lo = [self.x_low] + [self.u_low] * n_knots
        hi = [self.x_high] + [self.u_high] * n_knots
        if with_time:
            lo.append([0.0])
            hi.append([self.t_max])
        return np.concatenate(lo), np.concatenate(hi)

    def to_dict(self) -> dict:
        return {
            "x_low": self.x_low.tolist(), "x_high": self.x_high.tolist(),
            "u_low": self.u_low.tolist(), "u_high": self.u_high.tolist(),
            "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingBox":
        return cls(d["x_low"], d["x_high"], d["u_low"], d["u_high"], d["t_max"])


def latin_hypercube(n: int, low, high, seed) -> np.ndarray:
    """``n`` points in the box [low, high] with one point per stratum per axis.

    Each axis is cut into ``n`` equal strata; a uniform draw is placed in each
    and the strata are permuted independently per axis.
    """
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if n < 1:
        raise ValueError("need at least one sample")
    if low.shape != high.shape or np.any(high <= low):
        raise ValueError("degenerate box: every axis needs low < high")
    rng = np.random.default_rng(seed)
    d = low.size
    u = rng.uniform(size=(n, d))
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    unit = (strata + u) / n
    return low + unit * (high - low)


def lhs_box(n: int, box: SamplingBox, n_knots: int, seed) -> np.ndarray:
    """Collocation points over (x0, u knots, t) drawn from ``box``."""
    lo, hi = box.bounds(n_knots, with_time=True)
    return latin_hypercube(n, lo, hi, seed)


def normalize(point, low, high):
    """Affine map of each channel from [low, high] to [-1, 1].

    Written as ((x - low) - (high - x)) / (high - low) so the box corners land
    on -1 and +1 exactly.
    """
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    x = np.asarray(point, dtype=float)
    return ((x - low) - (high - x)) / (high - low)


def denormalize(values, low, high):
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    return 0.5 * (low + high) + np.asarray(values, dtype=float) * (0.5 * (high - low))


def derive_box_from_trajectory(states, inputs, f: float, margin: float = 0.10,
                               eps: float = 1e-3) -> SamplingBox:
    """Bounds of a simulated path widened by ``margin`` of each channel's range.

    A constant channel is widened by ``eps`` on both sides instead.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.asarray(inputs, dtype=float)
    if states.size == 0:
        raise ValueError("empty trajectory")
    if inputs.ndim == 1:
        inputs = inputs[:, None]

    def widen(a):
        lo, hi = a.min(axis=0), a.max(axis=0)
        pad = margin * (hi - lo)
        pad = np.where(hi > lo, pad, 0.0)
        lo, hi = lo - pad, hi + pad
        flat = hi <= lo
        return np.where(flat, lo - eps, lo), np.where(flat, hi + eps, hi)

    xl, xh = widen(states)
    ul, uh = widen(inputs)
    return SamplingBox(xl, xh, ul, uh, 1.1 / f)
