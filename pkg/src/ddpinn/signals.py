"""Parameterized test excitations.

Signals are callables u(t) -> array of shape (p,), deterministic given their
parameters (including the seed that fixes phases).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class Chirp:
    """Linear frequency sweep from ``f0`` to ``f1`` over ``duration`` seconds.

    Channel phases are drawn from ``seed``; with one channel and seed 0 the
    phase is zero. After ``duration`` the sweep holds frequency ``f1``.
    """

    amplitude: float = 0.5
    f0: float = 0.2
    f1: float = 3.0
    duration: float = 1.0
    p: int = 1
    offset: float = 0.0
    seed: int = 0
    kind: str = field(default="chirp", init=False)

    def _phases(self):
        if self.p == 1 and self.seed == 0:
            return np.zeros(1)
        return np.random.default_rng(self.seed).uniform(0, 2 * np.pi, self.p)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = (self.f1 - self.f0) / self.duration
        tc = np.minimum(t, self.duration)
        arg = 2 * np.pi * (self.f0 * tc + 0.5 * k * tc ** 2 + self.f1 * (t - tc))
        return self.offset + self.amplitude * np.sin(arg[..., None] + self._phases())


@dataclass(frozen=True)
class Multisine:
    """Sum of ``n_tones`` sines with log-spaced frequencies in [f_low, f_high].

    Phases are random from ``seed``; the sum is scaled so its peak bound is
    ``amplitude``.
    """

    amplitude: float = 0.5
    f_low: float = 0.2
    f_high: float = 5.0
    n_tones: int = 8
    p: int = 1
    offset: float = 0.0
    seed: int = 0
    kind: str = field(default="multisine", init=False)

    def __post_init__(self):
        if self.n_tones < 1 or not 0 < self.f_low <= self.f_high:
            raise ValueError("multisine needs n_tones >= 1 and 0 < f_low <= f_high")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        freqs = np.geomspace(self.f_low, self.f_high, self.n_tones)
        phases = np.random.default_rng(self.seed).uniform(0, 2 * np.pi, (self.p, self.n_tones))
        arg = 2 * np.pi * t[..., None, None] * freqs + phases
        return self.offset + self.amplitude / self.n_tones * np.sin(arg).sum(axis=-1)


@dataclass(frozen=True)
class Constant:
    value: tuple = (0.0,)
    kind: str = field(default="constant", init=False)

    @property
    def p(self):
        return len(self.value)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.value, dtype=float), t.shape + (self.p,)).copy()


_KINDS = {"chirp": Chirp, "multisine": Multisine, "constant": Constant}


def from_spec(spec: dict, p: int | None = None):
    """Build a signal from a dict such as ``{"kind": "chirp", "amplitude": 0.5}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "chirp")
    if kind not in _KINDS:
        raise ValueError(f"unknown signal kind {kind!r}; choose from {sorted(_KINDS)}")
    cls = _KINDS[kind]
    if kind == "constant":
        if "value" in spec:
            spec["value"] = tuple(np.atleast_1d(spec["value"]).tolist())
        elif p is not None:
            spec["value"] = (0.0,) * p
    elif p is not None:
        spec.setdefault("p", p)
    allowed = {f for f in cls.__dataclass_fields__ if f != "kind"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown {kind} fields: {sorted(unknown)}")
    sig = cls(**spec)
    if p is not None and sig.p != p:
        raise ValueError(f"signal has {sig.p} channels, system expects {p}")
    return sig


def to_spec(signal) -> dict:
    d = asdict(signal)
    if "value" in d:
        d["value"] = list(d["value"])
    return d


# Defaults chosen by simulation so the test paths stay inside the sampling boxes.
DEFAULT_TEST_SIGNALS = {
    "msd": {"kind": "chirp", "amplitude": 0.5, "f0": 0.2, "f1": 3.0, "duration": 1.0},
    "chain": {"kind": "multisine", "amplitude": 1.0, "f_low": 0.5, "f_high": 10.0,
              "n_tones": 6, "seed": 0},
    "twolink": {"kind": "chirp", "amplitude": 0.3, "f0": 0.1, "f1": 1.0, "duration": 5.0,
                "seed": 1},
}

# The arm starts tilted off the upright equilibrium and swings down under the chirp.
DEFAULT_TEST_X0 = {"msd": [0.0, 0.0], "chain": [0.0] * 10, "twolink": [0.5, 0.0, 0.0, 0.0]}
