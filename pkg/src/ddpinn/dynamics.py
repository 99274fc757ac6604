"""State-space models of the three benchmark systems.

Every ``rhs(x, u)`` takes states of shape (..., m) and inputs of shape (..., p)
and returns the state derivative. The same code runs on numpy arrays and on
tape variables (batched, 2-D), which is how the physics loss differentiates
through the dynamics.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import diffcore as dc


@dataclass(frozen=True)
class MsdParams:
    mass: float = 0.001
    damping: float = 0.001
    stiffness: float = 1.0
    stiffness_nl: float = 15.0

    def __post_init__(self):
        if min(self.mass, self.damping, self.stiffness, self.stiffness_nl) <= 0:
            raise ValueError("mass-spring-damper parameters must be positive")


@dataclass(frozen=True)
class ChainParams:
    masses: tuple = (0.1, 0.1, 0.1, 0.1, 0.1)
    stiffness: tuple = (50.0, 50.0, 50.0, 50.0, 50.0)
    damping: tuple = (0.1, 0.1, 0.1, 0.1, 0.1)


@dataclass(frozen=True)
class TwoLinkParams:
    """Planar 2R arm; joint angles are zero in the upright position."""

    m1: float = 2.0
    m2: float = 2.0
    l1: float = 0.3
    l2: float = 0.3
    lc1: float = 0.15
    lc2: float = 0.15
    inertia1: float = 0.015
    inertia2: float = 0.015
    damping1: float = 12.0
    damping2: float = 6.0
    motor1: float = 10.0
    motor2: float = 5.0
    gravity: float = 9.81


@dataclass
class SystemSpec:
    name: str
    m: int
    p: int
    rhs: Callable
    params: object
    x_low: np.ndarray | None = None
    x_high: np.ndarray | None = None
    u_low: np.ndarray | None = None
    u_high: np.ndarray | None = None
    frequencies: tuple = ()
    state_names: tuple = ()
    input_names: tuple = ()
    energy: Callable | None = None
    extras: dict = field(default_factory=dict)

    @property
    def has_box(self) -> bool:
        return self.x_low is not None and self.u_low is not None


# --- nonlinear mass-spring-damper -----------------------------------------

def msd_rhs(x, u, params: MsdParams = MsdParams()):
    q, qd = x[..., 0], x[..., 1]
    force = u[..., 0]
    qdd = (force - params.damping * qd - params.stiffness * q
           - params.stiffness_nl * q ** 3) / params.mass
    return dc.stack([qd, qdd], axis=-1)


def msd_energy(x, params: MsdParams = MsdParams()):
    q, qd = x[..., 0], x[..., 1]
    return (0.5 * params.mass * qd ** 2 + 0.5 * params.stiffness * q ** 2
            + 0.25 * params.stiffness_nl * q ** 4)


def make_msd(params: MsdParams | None = None) -> SystemSpec:
    params = params or MsdParams()
    return SystemSpec(
        name="msd", m=2, p=1,
        rhs=lambda x, u: msd_rhs(x, u, params),
        params=params,
        x_low=np.array([-0.4, -18.0]), x_high=np.array([0.4, 18.0]),
        u_low=np.array([-1.0]), u_high=np.array([1.0]),
        frequencies=(50.0, 100.0, 200.0),
        state_names=("q", "qd"), input_names=("u",),
        energy=lambda x: msd_energy(x, params),
    )


# --- five-mass chain ---------------------------------------------------------

CHAIN_INPUT_VECTOR = np.array([-1.0, 0.0, 0.0, 0.0, 1.0])


class ChainModel:
    """Linear chain in relative coordinates: M qdd + D qd + K q = P u.

    Absolute displacements are cumulative sums of the relative ones, so the
    mass matrix is L^T diag(m) L with L lower-triangular ones.
    """

    def __init__(self, params: ChainParams = ChainParams()):
        n = len(params.masses)
        if not (len(params.stiffness) == len(params.damping) == n):
            raise ValueError("chain needs one stiffness and damper per mass")
        self.params = params
        L = np.tril(np.ones((n, n)))
        self.M = L.T @ np.diag(params.masses) @ L
        self.K = np.diag(np.asarray(params.stiffness, dtype=float))
        self.D = np.diag(np.asarray(params.damping, dtype=float))
        self.P = CHAIN_INPUT_VECTOR.copy() if n == 5 else np.eye(n)[0]
        if np.linalg.cond(self.M) > 1e12:
            raise ValueError("chain mass matrix is singular")
        Minv = np.linalg.inv(self.M)
        self._A_q = (-Minv @ self.K).T
        self._A_qd = (-Minv @ self.D).T
        self._b = Minv @ self.P
        self.n = n

    def rhs(self, x, u):
        n = self.n
        q, qd = x[..., :n], x[..., n:]
        qdd = q @ self._A_q + qd @ self._A_qd + u[..., 0:1] * self._b
        return dc.concatenate([qd, qdd], axis=-1)

    def energy(self, x):
        n = self.n
        q, qd = x[..., :n], x[..., n:]
        return 0.5 * np.einsum("...i,ij,...j->...", qd, self.M, qd) + \
            0.5 * np.einsum("...i,ij,...j->...", q, self.K, q)


def make_chain(params: ChainParams | None = None) -> SystemSpec:
    model = ChainModel(params or ChainParams())
    n = model.n
    return SystemSpec(
        name="chain", m=2 * n, p=1, rhs=model.rhs, params=model.params,
        frequencies=(50.0,),
        state_names=tuple(f"q{i + 1}" for i in range(n)) + tuple(f"qd{i + 1}" for i in range(n)),
        input_names=("u",), energy=model.energy, extras={"model": model},
    )


# --- two-link manipulator --------------------------------------------------

class TwoLinkModel:
    """M(q) qdd = h(q, qd) - k(q, qd) + B u.

    ``h`` holds gravity and viscous joint damping, ``k`` the centrifugal and
    Coriolis terms.
    """

    def __init__(self, params: TwoLinkParams = TwoLinkParams()):
        p = params
        self.params = p
        self.a1 = p.inertia1 + p.inertia2 + p.m1 * p.lc1 ** 2 + p.m2 * (p.l1 ** 2 + p.lc2 ** 2)
        self.a2 = p.m2 * p.l1 * p.lc2
        self.a3 = p.inertia2 + p.m2 * p.lc2 ** 2
        self.g1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity
        self.g2 = p.m2 * p.lc2 * p.gravity
        # det M(q) = a1 a3 - a3^2 - a2^2 cos^2(q2) is smallest at cos(q2) = +-1
        if self.a1 * self.a3 - self.a3 ** 2 - self.a2 ** 2 <= 0 or self.a3 <= 0:
            raise ValueError("two-link parameters give an indefinite mass matrix")

    def mass_matrix(self, q):
        c2 = np.cos(q[1])
        m12 = self.a3 + self.a2 * c2
        return np.array([[self.a1 + 2 * self.a2 * c2, m12], [m12, self.a3]])

    def coriolis_matrix(self, q, qd):
        h = self.a2 * np.sin(q[1])
        return np.array([[-h * qd[1], -h * (qd[0] + qd[1])], [h * qd[0], 0.0]])

    def potential(self, q):
        return self.g1 * np.cos(q[..., 0]) + self.g2 * np.cos(q[..., 0] + q[..., 1])

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        q, qd = x[..., :2], x[..., 2:]
        c2 = np.cos(q[..., 1])
        kin = 0.5 * ((self.a1 + 2 * self.a2 * c2) * qd[..., 0] ** 2
                     + 2 * (self.a3 + self.a2 * c2) * qd[..., 0] * qd[..., 1]
                     + self.a3 * qd[..., 1] ** 2)
        return kin + self.potential(q)

    def rhs(self, x, u):
        p = self.params
        q1, q2, qd1, qd2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        c2 = dc.cos(q2)
        s2 = dc.sin(q2)
        s1 = dc.sin(q1)
        s12 = dc.sin(q1 + q2)
        m11 = self.a1 + 2 * self.a2 * c2
        m12 = self.a3 + self.a2 * c2
        m22 = self.a3
        h = self.a2 * s2
        # tau = B u - k(q, qd) + h(q, qd)
        tau1 = (p.motor1 * u[..., 0] + h * (2 * qd1 * qd2 + qd2 * qd2)
                + self.g1 * s1 + self.g2 * s12 - p.damping1 * qd1)
        tau2 = (p.motor2 * u[..., 1] - h * qd1 * qd1
                + self.g2 * s12 - p.damping2 * qd2)
        det = m11 * m22 - m12 * m12
        qdd1 = (m22 * tau1 - m12 * tau2) / det
        qdd2 = (m11 * tau2 - m12 * tau1) / det
        return dc.stack([qd1, qd2, qdd1, qdd2], axis=-1)


def make_twolink(params: TwoLinkParams | None = None) -> SystemSpec:
    model = TwoLinkModel(params or TwoLinkParams())
    return SystemSpec(
        name="twolink", m=4, p=2, rhs=model.rhs, params=model.params,
        x_low=np.array([-np.pi, -np.pi, -1.0, -1.0]), x_high=np.array([np.pi, np.pi, 1.0, 1.0]),
        u_low=np.array([-0.6, -0.6]), u_high=np.array([0.6, 0.6]),
        frequencies=(5.0,),
        state_names=("q1", "q2", "qd1", "qd2"), input_names=("i1", "i2"),
        energy=model.energy, extras={"model": model},
    )


_PARAM_TYPES = {"msd": MsdParams, "chain": ChainParams, "twolink": TwoLinkParams}
_FACTORIES = {"msd": make_msd, "chain": make_chain, "twolink": make_twolink}


def make_system(name: str, overrides: dict | None = None) -> SystemSpec:
    """Build a system by name with optional parameter overrides."""
    if name not in _FACTORIES:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(_FACTORIES)}")
    params = _PARAM_TYPES[name]()
    if overrides:
        known = {f.name for f in fields(params)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown {name} parameters: {sorted(unknown)}")
        clean = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
        params = replace(params, **clean)
    return _FACTORIES[name](params)


def params_dict(params) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(params).items()}
