"""Planar fixed-base serial chains: kinematics, derivatives and dynamics.

World frame is the vertical (x, z) plane with gravity along -z. Every joint is
revolute about the axis normal to that plane. The absolute angle of link ``i``
is ``phi_i = q_0 + ... + q_i``; at ``phi = 0`` a link points straight up and a
positive angle turns it towards -x, so ``phi = -pi`` hangs down and
``phi = -pi/2`` lies along +x::

    u(phi) = (-sin(phi), cos(phi))

Links are modelled as point masses placed ``com_offset`` along the link, plus an
optional rotational inertia about that point (``m l^2 / 12`` with the offset at
``l / 2`` gives a thin rod).

All derivatives are closed form. The task Hessian costs O(n^2) because
``d^2 p / dq_k dq_m`` only depends on ``max(k, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PlanarChain",
    "KinematicState",
    "link_points",
    "forward_kinematics",
    "task_jacobian",
    "jacobian_time_derivative",
    "task_hessian",
    "com_position",
    "com_jacobian",
    "com_hessian",
    "mass_matrix",
    "bias_forces",
    "potential_energy",
    "kinetic_energy",
    "total_energy",
    "forward_dynamics",
]

STANDARD_GRAVITY = 9.81


@dataclass(frozen=True)
class PlanarChain:
    """Fixed-base planar chain of ``n`` revolute joints.

    ``com_offsets`` defaults to the link lengths (mass lumped at the distal
    joint), ``link_inertias`` to zero.
    """

    link_lengths: np.ndarray
    link_masses: np.ndarray
    com_offsets: np.ndarray | None = None
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -STANDARD_GRAVITY]))
    link_inertias: np.ndarray | None = None

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.link_lengths, dtype=float))
        masses = np.atleast_1d(np.asarray(self.link_masses, dtype=float))
        n = lengths.size
        if n < 1:
            raise ValueError("a chain needs at least one link")
        offsets = lengths.copy() if self.com_offsets is None else np.atleast_1d(
            np.asarray(self.com_offsets, dtype=float))
        inertias = np.zeros(n) if self.link_inertias is None else np.atleast_1d(
            np.asarray(self.link_inertias, dtype=float))
        gravity = np.asarray(self.gravity, dtype=float).reshape(-1)
        for name, arr in (("link_masses", masses), ("com_offsets", offsets),
                          ("link_inertias", inertias)):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}, got {arr.shape}")
        if gravity.shape != (2,):
            raise ValueError("gravity must be a 2-vector (g_x, g_z)")
        if np.any(lengths <= 0) or np.any(masses <= 0):
            raise ValueError("link lengths and masses must be strictly positive")
        if np.any(offsets < 0) or np.any(offsets > lengths):
            raise ValueError("com_offsets must lie in [0, length]")
        if np.any(inertias < 0):
            raise ValueError("link_inertias must be non-negative")
        for arr in (lengths, masses, offsets, inertias, gravity):
            if not np.all(np.isfinite(arr)):
                raise ValueError("chain parameters must be finite")
            arr.flags.writeable = False
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_masses", masses)
        object.__setattr__(self, "com_offsets", offsets)
        object.__setattr__(self, "link_inertias", inertias)
        object.__setattr__(self, "gravity", gravity)
        # state-independent pieces of the dynamics, reused every call
        W = np.tril(np.broadcast_to(lengths, (n, n)), -1).copy()
        W[np.diag_indices(n)] = offsets
        E = np.tril(np.ones((n, n)))
        object.__setattr__(self, "_levers", W)
        object.__setattr__(self, "_rotor", E.T @ (inertias[:, None] * E))

    @property
    def n(self) -> int:
        return self.link_lengths.size

    @classmethod
    def uniform(cls, n, length=1.0, mass=1.0, **kwargs) -> "PlanarChain":
        return cls(np.full(n, float(length)), np.full(n, float(mass)), **kwargs)


@dataclass(frozen=True)
class KinematicState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = _check_vector(self.q, None, "q")
        qdot = _check_vector(self.qdot, q.size, "qdot")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)


def _check_vector(v, n, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1 or (n is not None and v.size != n):
        raise ValueError(f"{name} must be a vector of length {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


# link direction and its first two derivatives with respect to the angle
def _u(phi):
    return np.stack([-np.sin(phi), np.cos(phi)])


def _du(phi):
    return np.stack([-np.cos(phi), -np.sin(phi)])


def _angles(chain, q):
    return np.cumsum(_check_vector(q, chain.n, "q"))


def _lever(chain, link, s):
    """Lever length of every link for a point at distance ``s`` along ``link``."""
    w = np.where(np.arange(chain.n) < link, chain.link_lengths, 0.0)
    w[link] = s
    return w


def _revcumsum(a):
    return np.cumsum(a[..., ::-1], axis=-1)[..., ::-1]


def _point(chain, q, link, s):
    return _u(_angles(chain, q)) @ _lever(chain, link, s)


def _point_jacobian(chain, q, link, s):
    return _revcumsum(_du(_angles(chain, q)) * _lever(chain, link, s))


def _point_jacobian_dot(chain, q, qdot, link, s):
    phi = _angles(chain, q)
    phidot = np.cumsum(_check_vector(qdot, chain.n, "qdot"))
    # u'' = -u
    return _revcumsum(-_u(phi) * (_lever(chain, link, s) * phidot))


def _point_hessian(chain, q, link, s):
    tail = _revcumsum(-_u(_angles(chain, q)) * _lever(chain, link, s))  # 2 x n
    idx = np.maximum.outer(np.arange(chain.n), np.arange(chain.n))
    return tail[:, idx]


def link_points(chain: PlanarChain, q) -> np.ndarray:
    """Base, every joint and the tip as an ``(n + 1) x 2`` array."""
    steps = (_u(_angles(chain, q)) * chain.link_lengths).T
    return np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def forward_kinematics(chain: PlanarChain, q) -> np.ndarray:
    """Tip position in the world (x, z) frame."""
    return _point(chain, q, chain.n - 1, chain.link_lengths[-1])


def task_jacobian(chain: PlanarChain, q) -> np.ndarray:
    """2 x n Jacobian of the tip position."""
    return _point_jacobian(chain, q, chain.n - 1, chain.link_lengths[-1])


def jacobian_time_derivative(chain: PlanarChain, q, qdot) -> np.ndarray:
    return _point_jacobian_dot(chain, q, qdot, chain.n - 1, chain.link_lengths[-1])


def task_hessian(chain: PlanarChain, q) -> np.ndarray:
    """``H[d, i, j] = d^2 tip_d / dq_i dq_j``, shape 2 x n x n."""
    return _point_hessian(chain, q, chain.n - 1, chain.link_lengths[-1])


def _mass_weights(chain):
    return chain.link_masses / chain.link_masses.sum()


def com_position(chain: PlanarChain, q) -> np.ndarray:
    w = _mass_weights(chain)
    return sum(w[i] * _point(chain, q, i, chain.com_offsets[i]) for i in range(chain.n))


def com_jacobian(chain: PlanarChain, q) -> np.ndarray:
    w = _mass_weights(chain)
    return sum(w[i] * _point_jacobian(chain, q, i, chain.com_offsets[i])
               for i in range(chain.n))


def com_hessian(chain: PlanarChain, q) -> np.ndarray:
    w = _mass_weights(chain)
    return sum(w[i] * _point_hessian(chain, q, i, chain.com_offsets[i])
               for i in range(chain.n))


def _com_levers(chain):
    """Row ``i`` holds the lever of every link for the mass point of link ``i``."""
    return chain._levers


def _com_jacobians(chain, q):
    """Jacobians of all mass points stacked as ``n x 2 x n``."""
    du = _du(_angles(chain, q))
    return _revcumsum(du[None, :, :] * _com_levers(chain)[:, None, :])


def mass_matrix(chain: PlanarChain, q) -> np.ndarray:
    phi = _angles(chain, q)
    return _mass_and_bias(chain, _u(phi), _du(phi), None)[0]


def bias_forces(chain: PlanarChain, q, qdot) -> np.ndarray:
    """Coriolis, centrifugal and gravity terms N with ``M qddot + N = tau``.

    Joints are frictionless. Link inertias add no velocity terms in the plane
    since their contribution to M is constant.
    """
    qdot = _check_vector(qdot, chain.n, "qdot")
    phi = _angles(chain, q)
    return _mass_and_bias(chain, _u(phi), _du(phi), qdot)[1]


def _mass_and_bias(chain, u, du, qdot):
    """``(M, N)`` from the link directions; N is skipped when ``qdot`` is None."""
    W = _com_levers(chain)
    Js = _revcumsum(du[None, :, :] * W[:, None, :])  # n x 2 x n
    M = np.einsum("i,idk,idm->km", chain.link_masses, Js, Js) + chain._rotor
    M = 0.5 * (M + M.T)
    if qdot is None:
        return M, None
    # u'' = -u
    Jds = _revcumsum(-u[None, :, :] * (W * np.cumsum(qdot))[:, None, :])
    acc = Jds @ qdot - chain.gravity  # n x 2
    return M, np.einsum("i,idk,id->k", chain.link_masses, Js, acc)


def potential_energy(chain: PlanarChain, q) -> float:
    """Zero when every mass sits at the height of the base."""
    return float(-sum(chain.link_masses[i] * chain.gravity
                      @ _point(chain, q, i, chain.com_offsets[i]) for i in range(chain.n)))


def kinetic_energy(chain: PlanarChain, q, qdot) -> float:
    qdot = _check_vector(qdot, chain.n, "qdot")
    return float(0.5 * qdot @ mass_matrix(chain, q) @ qdot)


def total_energy(chain: PlanarChain, q, qdot) -> float:
    return kinetic_energy(chain, q, qdot) + potential_energy(chain, q)


def forward_dynamics(chain: PlanarChain, q, qdot, tau=None) -> np.ndarray:
    tau = np.zeros(chain.n) if tau is None else _check_vector(tau, chain.n, "tau")
    return np.linalg.solve(mass_matrix(chain, q), tau - bias_forces(chain, q, qdot))
