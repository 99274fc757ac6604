"""Closed-form Ansatz for the residual state over one prediction interval.

For state ``j`` and sub-function ``i`` with coefficients (alpha, beta, gamma[, delta])::

    g_j    = sum_i alpha_ij * (exp(-delta_ij t) phi(beta_ij t + gamma_ij) - phi(gamma_ij))
    gdot_j = sum_i alpha_ij * exp(-delta_ij t) * (beta_ij phi'(z) - delta_ij phi(z))

The undamped form is the same with ``delta = 0``. The subtracted ``phi(gamma)``
makes ``g(a, 0)`` exactly zero.

Coefficient arrays have shape ``(..., m, n_g)``; the flat layout of a
coefficient vector is block-wise ``[alpha, beta, gamma(, delta)]`` with each
block stored state-major (index ``j * n_g + i``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc


@dataclass(frozen=True)
class BaseFunction:
    """Base construction function with its first and second derivatives."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    second_derivative: Callable[[np.ndarray], np.ndarray]


SINE = BaseFunction("sin", np.sin, np.cos, lambda z: -np.sin(z))
TANH = BaseFunction(
    "tanh",
    np.tanh,
    lambda z: 1.0 - np.tanh(z) ** 2,
    lambda z: -2.0 * np.tanh(z) * (1.0 - np.tanh(z) ** 2),
)
BASE_FUNCTIONS = {f.name: f for f in (SINE, TANH)}


def base_function(name: str) -> BaseFunction:
    try:
        return BASE_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown base function {name!r}; choose from {sorted(BASE_FUNCTIONS)}")


@dataclass
class AnsatzCoefficients:
    """Coefficient matrices of shape ``(..., m, n_g)``; ``delta`` is None if undamped."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray | None = None

    def __post_init__(self):
        shapes = {np.shape(self.alpha), np.shape(self.beta), np.shape(self.gamma)}
        if self.delta is not None:
            shapes.add(np.shape(self.delta))
        if len(shapes) != 1:
            raise ValueError(f"coefficient blocks differ in shape: {shapes}")
        for blk in self.blocks():
            if not np.all(np.isfinite(blk)):
                raise ValueError("Ansatz coefficients must be finite")

    @property
    def damped(self) -> bool:
        return self.delta is not None

    @property
    def m(self) -> int:
        return np.shape(self.alpha)[-2]

    @property
    def n_g(self) -> int:
        return np.shape(self.alpha)[-1]

    @staticmethod
    def flat_length(m: int, n_g: int, damped: bool) -> int:
        return (4 if damped else 3) * m * n_g

    @classmethod
    def from_flat(cls, a, m: int, n_g: int, damped: bool) -> "AnsatzCoefficients":
        a = np.asarray(a, dtype=float)
        n_blocks = 4 if damped else 3
        if a.shape[-1] != n_blocks * m * n_g:
            raise ValueError(
                f"coefficient vector has length {a.shape[-1]}, expected {n_blocks * m * n_g}")
        blocks = a.reshape(a.shape[:-1] + (n_blocks, m, n_g))
        parts = [blocks[..., k, :, :] for k in range(n_blocks)]
        return cls(*parts) if damped else cls(*parts, None)

    def to_flat(self) -> np.ndarray:
        parts = [self.alpha, self.beta, self.gamma] + ([self.delta] if self.damped else [])
        stacked = np.stack(parts, axis=-3)
        return stacked.reshape(stacked.shape[:-3] + (-1,))

    def blocks(self) -> list[np.ndarray]:
        return [self.alpha, self.beta, self.gamma] + ([self.delta] if self.damped else [])


def _broadcast_t(t):
    t = np.asarray(t, dtype=float)
    # one time per leading batch entry, shared across (m, n_g)
    return t.reshape(t.shape + (1, 1)) if t.ndim else t


def _terms(a: AnsatzCoefficients, phi: BaseFunction, t):
    tt = _broadcast_t(t)
    z = a.beta * tt + a.gamma
    s = phi.value(z)
    c = phi.derivative(z)
    s0 = phi.value(a.gamma)
    if a.damped:
        e = np.exp(-a.delta * tt)
    else:
        e = None
    return tt, z, s, c, s0, e


def eval_g(a: AnsatzCoefficients, phi: BaseFunction, t) -> np.ndarray:
    """Residual state g(a, t), shape ``(..., m)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    _, _, s, _, s0, e = _terms(a, phi, t)
    if e is not None:
        s = e * s
    return np.sum(a.alpha * (s - s0), axis=-1)


def eval_g_dot(a: AnsatzCoefficients, phi: BaseFunction, t) -> np.ndarray:
    """Time derivative of :func:`eval_g`, shape ``(..., m)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    _, _, s, c, _, e = _terms(a, phi, t)
    if e is None:
        return np.sum(a.alpha * a.beta * c, axis=-1)
    return np.sum(a.alpha * e * (a.beta * c - a.delta * s), axis=-1)


def partials_wrt_a(a: AnsatzCoefficients, phi: BaseFunction, t):
    """Partials of g and gdot with respect to each coefficient block.

    Returns ``(dg, dgdot)``, each of shape ``(..., n_blocks, m, n_g)``: entry
    ``[k, j, i]`` is the derivative of ``g_j`` (resp. ``gdot_j``) with respect to
    coefficient ``i`` of block ``k`` for state ``j``. Derivatives across
    different states vanish, so this is the full Jacobian.
    """
    return _values_and_partials(a, phi, t)[2:]


def _values_and_partials(a: AnsatzCoefficients, phi: BaseFunction, t):
    tt, z, s, c, s0, e = _terms(a, phi, t)
    al, be = a.alpha, a.beta
    c0 = phi.derivative(a.gamma)
    cc = phi.second_derivative(z)
    tb = np.broadcast_to(tt, z.shape)
    if e is None:
        ac = al * c
        g = np.sum(al * (s - s0), axis=-1)
        gd = np.sum(ac * be, axis=-1)
        dg = [s - s0, ac * tb, al * (c - c0)]
        dgd = [be * c, ac + al * be * cc * tb, al * be * cc]
    else:
        de = a.delta
        es = e * s
        inner = be * c - de * s
        ae = al * e
        g = np.sum(al * (es - s0), axis=-1)
        gd = np.sum(ae * inner, axis=-1)
        dinner = be * cc - de * c
        dg = [es - s0, ae * c * tb, al * (e * c - c0), -al * tb * es]
        dgd = [e * inner, ae * (c + tb * dinner), ae * dinner, -ae * (tb * inner + s)]
    return g, gd, np.stack(dg, axis=-3), np.stack(dgd, axis=-3)


def g_and_g_dot_on_tape(coeffs, m: int, n_g: int, damped: bool, phi: BaseFunction, t):
    """Evaluate (g, gdot) for a batch of flat coefficient rows held on a tape.

    ``coeffs`` has shape (n, flat_length); ``t`` has shape (n,). Returns two tape
    variables of shape (n, m) whose backward passes use the closed-form partials.
    """
    flat = dc.value_of(coeffs)
    a = AnsatzCoefficients.from_flat(flat, m, n_g, damped)
    if not isinstance(coeffs, dc.Var):
        return eval_g(a, phi, t), eval_g_dot(a, phi, t)
    g, gd, dg, dgd = _values_and_partials(a, phi, t)
    n = flat.shape[0]

    def back_g(grad):
        coeffs._accumulate((dg * grad[:, None, :, None]).reshape(n, -1))

    def back_gd(grad):
        coeffs._accumulate((dgd * grad[:, None, :, None]).reshape(n, -1))

    return dc._node(g, (coeffs,), back_g), dc._node(gd, (coeffs,), back_gd)
