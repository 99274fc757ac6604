"""DD-PINN and PINC surrogate models.

Both map an initial state and excitation knots to the state after time ``t``
within the horizon T_s = 1.1 / f. Network inputs are scaled to [-1, 1] with
the sampling box.

DD-PINN: the network emits Ansatz coefficients and the prediction is
x0 + half_width * g(a, t / T_s), so t = 0 returns x0 exactly and the time
derivative is closed-form. PINC: the network takes the (scaled) time as an
input and emits the scaled state; its time derivative is forward-mode.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import ansatz, diffcore as dc, excitation
from .ansatz import AnsatzCoefficients, BaseFunction
from .diffcore import MlpParameters
from .excitation import ExcitationPlan, interpolate_excitation  # noqa: F401  (re-export)
from .sample import SamplingBox


class RangeWarning(UserWarning):
    """Model queried outside the sampling box it was trained on."""


def _knots_array(knots, n_knots: int, p: int) -> np.ndarray:
    if isinstance(knots, ExcitationPlan):
        knots = knots.knots
    k = np.asarray(knots, dtype=float)
    if k.shape[-1] == n_knots * p and (k.ndim == 1 or k.shape[-2:] != (n_knots, p)):
        k = k.reshape(k.shape[:-1] + (n_knots, p))
    if k.shape[-2:] != (n_knots, p):
        raise ValueError(f"expected excitation knots of shape (..., {n_knots}, {p}), got {k.shape}")
    return k


@dataclass
class _Surrogate:
    net: MlpParameters
    box: SamplingBox
    f: float

    @property
    def m(self) -> int:
        return self.box.m

    @property
    def p(self) -> int:
        return self.box.p

    @property
    def T(self) -> float:
        return 1.0 / self.f

    @property
    def T_s(self) -> float:
        return 1.1 / self.f

    def with_net(self, net: MlpParameters):
        return replace(self, net=net)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T_s * (1 + 1e-12)):
            raise ValueError(f"t must lie in [0, {self.T_s}]")
        return t

    def _check_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape[-1] != self.m:
            raise ValueError(f"state has {x0.shape[-1]} entries, model expects {self.m}")
        return x0

    def _warn_range(self, z):
        if np.any(np.abs(z) > 1.0 + 1e-9):
            warnings.warn("input outside the sampling box", RangeWarning, stacklevel=3)

    def step_inputs(self, signal, t0: float):
        """Excitation knots of the rollout interval starting at ``t0``."""
        return excitation.sample_knots(signal, self.order, t0, self.T)


@dataclass
class DdPinnModel(_Surrogate):
    n_g: int = 5
    damped: bool = True
    order: int = 0
    phi: BaseFunction = field(default=ansatz.SINE)

    arch = "ddpinn"

    def __post_init__(self):
        n_in = self.m + self.p * self.n_knots
        n_out = AnsatzCoefficients.flat_length(self.m, self.n_g, self.damped)
        if self.net.layer_sizes[0] != n_in or self.net.layer_sizes[-1] != n_out:
            raise ValueError(
                f"net {self.net.layer_sizes} does not fit inputs {n_in} / coefficients {n_out}")

    @property
    def n_knots(self) -> int:
        return excitation.n_knots(self.order)

    @classmethod
    def create(cls, box, f, hidden, n_g=5, damped=True, order=0, phi=ansatz.SINE, seed=0):
        n_in = box.m + box.p * excitation.n_knots(order)
        n_out = AnsatzCoefficients.flat_length(box.m, n_g, damped)
        net = MlpParameters.glorot([n_in, *hidden, n_out], np.random.default_rng(seed))
        return cls(net, box, f, n_g=n_g, damped=damped, order=order, phi=phi)

    def net_input(self, x0, knots):
        z = dc.concatenate([
            _normalize_x(self.box, x0),
            _normalize_u(self.box, knots).reshape(knots.shape[:-2] + (-1,)),
        ], axis=-1)
        return z

    def coefficients(self, x0, knots, net=None):
        """Flat Ansatz coefficients produced by the network."""
        x0 = self._check_state(x0)
        knots = _knots_array(knots, self.n_knots, self.p)
        z = self.net_input(x0, knots)
        self._warn_range(z)
        return dc.mlp_forward(net or self.net, z)

    def _ansatz(self, a_flat):
        if not np.all(np.isfinite(a_flat)):
            raise FloatingPointError("network produced non-finite Ansatz coefficients")
        return AnsatzCoefficients.from_flat(a_flat, self.m, self.n_g, self.damped)

    def predict(self, x0, knots, t):
        """State after time ``t`` (physical units)."""
        t = self._check_time(t)
        x0 = self._check_state(x0)
        a = self._ansatz(self.coefficients(x0, knots))
        return x0 + self.box.x_half * ansatz.eval_g(a, self.phi, t / self.T_s)

    def predict_dot(self, x0, knots, t):
        """Time derivative of :meth:`predict` (physical units per second)."""
        t = self._check_time(t)
        a = self._ansatz(self.coefficients(x0, knots))
        return self.box.x_half * ansatz.eval_g_dot(a, self.phi, t / self.T_s) / self.T_s

    def state_and_rate(self, net, x0, knots, t):
        """Prediction and its time derivative with ``net`` possibly on a tape.

        ``x0`` (n, m), ``knots`` (n, k, p), ``t`` (n,). The rate is returned in
        scaled form d(x/half_width)/d(t/T_s), which is what the physics loss uses.
        """
        z = self.net_input(x0, knots)
        a = dc.mlp_forward(net, z)
        g, g_dot = ansatz.g_and_g_dot_on_tape(a, self.m, self.n_g, self.damped, self.phi,
                                              np.asarray(t) / self.T_s)
        return x0 + g * self.box.x_half, g_dot

    def advance(self, x, knots):
        """One rollout step: the state after T."""
        return self.predict(x, knots, self.T)


@dataclass
class PincModel(_Surrogate):
    order: int = 0

    arch = "pinc"
    n_knots = 1

    def __post_init__(self):
        if self.order != 0:
            raise ValueError("the PINC assumes constant excitation over the interval")
        n_in = self.m + self.p + 1
        if self.net.layer_sizes[0] != n_in or self.net.layer_sizes[-1] != self.m:
            raise ValueError(f"net {self.net.layer_sizes} does not fit PINC shape {n_in}->{self.m}")

    @classmethod
    def create(cls, box, f, hidden, seed=0):
        net = MlpParameters.glorot([box.m + box.p + 1, *hidden, box.m],
                                   np.random.default_rng(seed))
        return cls(net, box, f)

    @property
    def t_index(self) -> int:
        return self.m + self.p

    def net_input(self, x0, knots, t):
        u0 = knots[..., 0, :]
        tn = np.asarray(t, dtype=float) / self.T_s
        tn = np.broadcast_to(tn, np.shape(u0)[:-1])[..., None]
        return np.concatenate([_normalize_x(self.box, x0), _normalize_u(self.box, u0), tn], axis=-1)

    def _prepare(self, x0, knots, t):
        t = self._check_time(t)
        x0 = self._check_state(x0)
        knots = _knots_array(knots, 1, self.p)
        z = self.net_input(x0, knots, t)
        self._warn_range(z[..., :-1])
        return z

    def predict(self, x0, knots, t):
        z = self._prepare(x0, knots, t)
        return self.box.x_center + self.box.x_half * dc.mlp_forward(self.net, z)

    def predict_dot(self, x0, knots, t):
        z = self._prepare(x0, knots, t)
        _, dy = dc.mlp_forward_with_t_derivative(self.net, z, self.t_index)
        # the t channel enters as t / T_s
        return self.box.x_half * dy / self.T_s

    def state_and_rate(self, net, x0, knots, t):
        """Tape-capable prediction and scaled rate d(x/half_width)/d(t/T_s)."""
        z = self.net_input(x0, knots, t)
        y, dy = dc.mlp_forward_with_t_derivative(net, z, self.t_index)
        return self.box.x_center + y * self.box.x_half, dy

    def initial_output(self, net, x0, knots):
        """Scaled prediction at t = 0 and the scaled target x0."""
        z = self.net_input(x0, knots, 0.0)
        y = dc.mlp_forward(net, z)
        return y, _normalize_x(self.box, x0)

    def advance(self, x, knots):
        return self.predict(x, knots, self.T)


def _normalize_x(box: SamplingBox, x):
    return (x - box.x_center) / box.x_half


def _normalize_u(box: SamplingBox, u):
    return (u - box.u_center) / box.u_half
