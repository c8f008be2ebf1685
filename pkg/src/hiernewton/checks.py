"""Validation suites: finite-difference, enumeration and equivalence oracles.

Each suite returns a list of :class:`CheckResult`; the command line and the
test-suite share them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import robot_model as rm
from . import sim
from .control import Controller, Formulation, TaskKind, TaskSpec
from .hlsp import brute_force_oracle, check_kkt, random_hierarchy, solve

__all__ = [
    "CheckResult",
    "fd_jacobian",
    "fd_jacobian_dot",
    "fd_hessian",
    "fd_lagrangian_hessian",
    "random_chain",
    "derivative_suite",
    "hlsp_oracle_suite",
    "kkt_suite",
    "equivalence_suite",
    "SUITES",
]

# tolerances of the derivative oracles
TOL_J = 1e-6
TOL_JDOT = 1e-5
TOL_H = 1e-5
TOL_HHAT = 1e-4
FD_STEP = 1e-6


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3e} (tol {self.tol:.0e})"


def fd_jacobian(fun, q, h=FD_STEP):
    """Central differences of a vector function; returns ``m x n``."""
    q = np.asarray(q, dtype=float)
    cols = []
    for i in range(q.size):
        dq = np.zeros_like(q)
        dq[i] = h
        cols.append((np.asarray(fun(q + dq)) - np.asarray(fun(q - dq))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_jacobian_dot(chain, q, qdot, h=FD_STEP):
    """Directional difference of J along ``qdot``."""
    q, qdot = np.asarray(q, float), np.asarray(qdot, float)
    return (rm.task_jacobian(chain, q + h * qdot) - rm.task_jacobian(chain, q - h * qdot)) / (2 * h)


def fd_hessian(chain, q, h=FD_STEP):
    """``H[d, i, j]`` from central differences of the Jacobian."""
    return fd_jacobian(lambda x: rm.task_jacobian(chain, x), q, h)


def fd_lagrangian_hessian(gradient, q, h=FD_STEP):
    """Hessian of a scalar Lagrangian from differences of its gradient, symmetrised."""
    H = fd_jacobian(gradient, q, h)
    return 0.5 * (H + H.T)


def random_chain(rng, n):
    lengths = rng.uniform(0.5, 1.5, n)
    return rm.PlanarChain(lengths, rng.uniform(0.5, 2.0, n),
                          com_offsets=lengths * rng.uniform(0.2, 1.0, n))


def _hessian_case(rng, chain, dt=1.0):
    """Controller with a COM box above an end-effector task and random multipliers.

    Returns ``(q, H_hat, H_fd)`` for the end-effector level. A unit step keeps
    the optimisation-scale multipliers of order one so that the absolute
    tolerance is meaningful.
    """
    n = chain.n
    target = rng.uniform(-1, 1, 2)
    tasks = [
        TaskSpec(TaskKind.EOM, 0),
        TaskSpec(TaskKind.COM_BOX, 1, kp=1.0, bounds=(-0.1, 0.1), augmentable=True),
        TaskSpec(TaskKind.TIP_POSITION, 2, target=target, augmentable=True),
        TaskSpec(TaskKind.TORQUE_REG, 3),
    ]
    ctl = Controller(chain, tasks, dt)
    q = rng.uniform(-np.pi, np.pi, n)
    ctl.build(q, rng.uniform(-1, 1, n))
    lam = {li: [rng.standard_normal(lay.n_task_rows if i == li else ctl._layout[i].n_task_rows)
                for i in range(li + 1)]
           for li, lay in enumerate(ctl._layout)}
    ctl.state.multipliers = lam
    H_hat = ctl.level_hessian(2)
    # Lagrangian of the level in optimisation scale: sum of lam_optim * f over curved rows
    l_com = -dt * lam[2][1]
    l_tip = -dt * lam[2][2]

    def grad(x):
        Jc = rm.com_jacobian(chain, x)[0]
        return l_com[0] * Jc + l_com[1] * Jc + rm.task_jacobian(chain, x).T @ l_tip

    return q, H_hat, fd_lagrangian_hessian(grad, q)


def derivative_suite(seed=0, count=100):
    """J, Jdot, H and the hierarchical Hessian against finite differences."""
    rng = np.random.default_rng(seed)
    worst = {"J": 0.0, "Jdot": 0.0, "H": 0.0, "H_hat": 0.0, "H symmetry": 0.0}
    for k in range(count):
        chain = random_chain(rng, 2 + k % 2)
        q = rng.uniform(-np.pi, np.pi, chain.n)
        qdot = rng.uniform(-2, 2, chain.n)
        J = rm.task_jacobian(chain, q)
        worst["J"] = max(worst["J"], np.abs(J - fd_jacobian(
            lambda x: rm.forward_kinematics(chain, x), q)).max())
        worst["Jdot"] = max(worst["Jdot"], np.abs(rm.jacobian_time_derivative(chain, q, qdot)
                                                  - fd_jacobian_dot(chain, q, qdot)).max())
        H = rm.task_hessian(chain, q)
        worst["H"] = max(worst["H"], np.abs(H - fd_hessian(chain, q)).max())
        worst["H symmetry"] = max(worst["H symmetry"],
                                  np.abs(H - H.transpose(0, 2, 1)).max())
        _, H_hat, H_fd = _hessian_case(rng, chain)
        worst["H_hat"] = max(worst["H_hat"], np.abs(H_hat - H_fd).max())
    tols = {"J": TOL_J, "Jdot": TOL_JDOT, "H": TOL_H, "H_hat": TOL_HHAT, "H symmetry": 1e-12}
    return [CheckResult(f"{name} vs finite differences ({count} configurations)"
                        if name != "H symmetry" else f"task Hessian symmetry ({count} configurations)",
                        float(v), tols[name]) for name, v in worst.items()]


def hlsp_oracle_suite(seed=0, count=50):
    """Per-level slack norms of the active-set solver against enumeration."""
    worst, unconverged = 0.0, 0
    for s in range(seed, seed + count):
        h = random_hierarchy(np.random.default_rng(s))
        sol = solve(h)
        unconverged += not sol.converged
        ref = brute_force_oracle(h)
        worst = max(worst, float(np.abs(sol.slack_norms - ref.slack_norms).max()))
    return [CheckResult(f"slack norms vs enumeration ({count} hierarchies)", worst, 1e-6),
            CheckResult("unconverged solves", float(unconverged), 0.5)]


def kkt_suite(seed=0, count=50):
    worst = 0.0
    for s in range(seed, seed + count):
        h = random_hierarchy(np.random.default_rng(s))
        worst = max(worst, check_kkt(h, solve(h)).worst())
    return [CheckResult(f"KKT residuals ({count} hierarchies)", worst, 1e-9)]


def equivalence_suite(seed=0, count=None):
    """ACC and VEL runs of the two fully actuated examples superpose."""
    out = []
    for name, make in (("example1", sim.example1), ("example2", sim.example2)):
        q = [sim.run_scenario(make(formulation=f)).array("q") for f in Formulation]
        out.append(CheckResult(f"{name} ACC vs VEL joint positions", float(np.abs(q[0] - q[1]).max()),
                               1e-6))
    return out


SUITES = {
    "derivatives": derivative_suite,
    "hlsp-oracle": hlsp_oracle_suite,
    "kkt": kkt_suite,
    "equivalence": equivalence_suite,
}
