"""Compile control tasks into hierarchy levels, one control cycle at a time.

Two formulations share the same task list:

* VEL: decision vector ``x = (qdot_{k+1}, dt * tau)``; the equation of motion is
  written with a forward difference of the joint velocities.
* ACC: decision vector ``x = (qddot_k, tau)``.

Every ACC row is the matching VEL row after substituting
``qdot_{k+1} = qdot_k + dt * qddot_k`` and dividing by ``dt``. Each level is
scaled uniformly, so both formulations share the same lexicographic optimum.

Task rows read ``A x + b = w`` (or ``<=``/``>=``), e.g. ``J qdot_{k+1} + edot_ctrl``
for an end-effector task, where ``e = f_d - f(q)`` and ``edot = -J qdot``.

Second-order augmentation: a task level in NEWTON mode gets ``n`` extra rows
``[R, 0]`` with ``R'R`` a positive definite clamp of the hierarchical Hessian
``sum lam_optim * H`` built from the multipliers of the previous cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import robot_model as rm
from .hlsp import DimensionMismatch, Hierarchy, HlspSolution, PriorityLevel, Relation

__all__ = [
    "TaskKind",
    "Formulation",
    "Method",
    "Mode",
    "TaskSpec",
    "ControlState",
    "MissingHessian",
    "pd_acc_reference",
    "p_vel_reference",
    "pd_vel_reference",
    "critical_damping",
    "hierarchical_hessian",
    "psd_factor",
    "newton_switch",
    "rescale_to_optim",
    "assemble_task_level",
    "assemble_eom_level",
    "damped_acc_assemble",
    "task_hessians",
    "CycleModel",
    "Controller",
]

EIGEN_FLOOR = 1e-8
SWITCH_FACTOR = 1e-12


class TaskKind(str, Enum):
    TIP_POSITION = "TIP_POSITION"
    JOINT_TARGET = "JOINT_TARGET"
    VELOCITY_REG = "VELOCITY_REG"
    TORQUE_REG = "TORQUE_REG"
    TRUST_REGION = "TRUST_REGION"
    EOM = "EOM"
    TORQUE_LIMIT = "TORQUE_LIMIT"
    COM_BOX = "COM_BOX"


class Formulation(str, Enum):
    ACC = "ACC"
    VEL = "VEL"


class Method(str, Enum):
    GN = "GN"
    NEWTON_AH = "NEWTON_AH"
    LM = "LM"


class Mode(IntEnum):
    GN = 0
    NEWTON = 1


class MissingHessian(ValueError):
    pass


@dataclass
class TaskSpec:
    """Declarative task.

    ``controller`` selects the task-space law of position tasks: ``"pd"``
    (acceleration-like PD, emulated in the velocity domain under VEL) or
    ``"p"`` (velocity P control, VEL only). ``joints`` restricts TORQUE_REG and
    TORQUE_LIMIT to a subset; ``rho`` is the trust-region radius, ``limit``
    the torque bound, ``bounds`` the (low, high) box of COM_BOX.
    """

    kind: TaskKind
    level: int
    relation: Relation = Relation.EQUAL
    kp: float = 1.0
    kv: float | None = None
    target: np.ndarray | None = None
    augmentable: bool = False
    controller: str = "pd"
    joints: tuple | None = None
    rho: float = 0.1
    limit: float | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        self.kind = TaskKind(self.kind)
        self.relation = Relation(self.relation)
        if self.level < 0:
            raise ValueError("task level must be non-negative")
        if self.kv is None:
            self.kv = 2.0 * np.sqrt(max(self.kp, 0.0))
        if self.kind in (TaskKind.TIP_POSITION, TaskKind.JOINT_TARGET, TaskKind.COM_BOX):
            if self.kp <= 0 or (self.controller == "pd" and self.kv <= 0):
                raise ValueError(f"{self.kind.value}: gains must be positive")
            if self.controller not in ("pd", "p"):
                raise ValueError(f"unknown controller {self.controller!r}")
        if self.kind in (TaskKind.TIP_POSITION, TaskKind.JOINT_TARGET):
            if self.target is None:
                raise ValueError(f"{self.kind.value} needs a target")
            self.target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if self.kind == TaskKind.TRUST_REGION and self.rho <= 0:
            raise ValueError("trust region radius must be positive")
        if self.kind == TaskKind.TORQUE_LIMIT and (self.limit is None or self.limit <= 0):
            raise ValueError("TORQUE_LIMIT needs a positive limit")
        if self.kind == TaskKind.COM_BOX:
            if self.bounds is None or len(self.bounds) != 2 or self.bounds[0] > self.bounds[1]:
                raise ValueError("COM_BOX needs bounds (low, high)")
        if self.joints is not None:
            self.joints = tuple(int(j) for j in self.joints)

    @property
    def has_curvature(self) -> bool:
        return self.kind in (TaskKind.TIP_POSITION, TaskKind.COM_BOX)


@dataclass
class ControlState:
    """Per-level memory carried from one cycle to the next."""

    t: float = 0.0
    dt: float = 0.005
    cycle: int = 0
    residuals: dict = field(default_factory=dict)    # level -> 1/2 |w_task|^2 of last cycle
    multipliers: dict = field(default_factory=dict)  # level -> list of per-level solver multipliers
    modes: dict = field(default_factory=dict)        # level -> Mode
    nu: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.nu is None:
            self.nu = SWITCH_FACTOR * self.dt ** 2
        if self.nu <= 0:
            raise ValueError("nu must be positive")


# -- controllers ------------------------------------------------------------------

def pd_acc_reference(e, edot, kp, kv):
    return -kp * np.asarray(e, dtype=float) - kv * np.asarray(edot, dtype=float)


def p_vel_reference(e, kp):
    return -kp * np.asarray(e, dtype=float)


def pd_vel_reference(e, edot, Jdot, qdot, dt, kp, kv):
    """Velocity-domain reference whose closed loop matches acceleration PD control.

    With rows ``J qdot_{k+1} + ref`` this reproduces ``-J qddot - Jdot qdot =
    eddot_ctrl`` after one explicit Euler step of the velocities.
    """
    edot = np.asarray(edot, dtype=float)
    eddot = pd_acc_reference(e, edot, kp, kv)
    return edot + dt * (eddot + np.asarray(Jdot) @ np.asarray(qdot, dtype=float))


def critical_damping(kp, m=1.0, mu=0.0):
    """Derivative gain of a critically damped 1-D mass under damping ``mu``."""
    return 2.0 * np.sqrt(m * (1.0 + mu ** 2) * kp)


def rescale_to_optim(w_ctrl, lam_ctrl, dt):
    return dt * np.asarray(w_ctrl, dtype=float), dt * np.asarray(lam_ctrl, dtype=float)


def newton_switch(residual, nu) -> Mode:
    return Mode.NEWTON if residual >= nu else Mode.GN


# -- curvature ----------------------------------------------------------------------

def hierarchical_hessian(multipliers, hessians, n=None):
    """``sum_i sum_d lam_{i,d} H_{i,d}`` over the rows of levels ``i <= l``.

    ``multipliers`` is a sequence of per-level multiplier vectors (already in
    optimisation scale) and ``hessians`` the matching sequence of ``m_i x n x n``
    tensors; ``None`` marks rows without curvature (bounds, linear rows).
    """
    out = None
    for lam, H in zip(multipliers, hessians):
        lam = np.asarray(lam, dtype=float)
        if H is None:
            continue
        H = np.asarray(H, dtype=float)
        if H.ndim != 3 or H.shape[0] != lam.size:
            raise MissingHessian(f"{lam.size} multipliers but Hessian of shape {H.shape}")
        term = np.tensordot(lam, H, axes=1)
        out = term if out is None else out + term
    if out is None:
        if n is None:
            raise MissingHessian("no Hessian available to size the result")
        return np.zeros((n, n))
    return 0.5 * (out + out.T)


def psd_factor(H, eps=EIGEN_FLOOR):
    """``R`` with ``R'R = Q max(U, eps) Q'`` from the symmetric eigendecomposition."""
    H = np.asarray(H, dtype=float)
    U, Q = np.linalg.eigh(0.5 * (H + H.T))
    return np.sqrt(np.maximum(U, eps))[:, None] * Q.T


# -- per-cycle model ------------------------------------------------------------------

class CycleModel:
    """Kinematic and dynamic quantities of the chain at one state, computed lazily.

    The link angles and their sines and cosines are shared by every quantity.
    """

    def __init__(self, chain, q, qdot):
        self.chain = chain
        self.q = np.asarray(q, dtype=float)
        self.qdot = np.asarray(qdot, dtype=float)
        self.n = chain.n
        phi = np.cumsum(self.q)
        s, c = np.sin(phi), np.cos(phi)
        self._u = np.stack([-s, c])
        self._du = np.stack([-c, -s])
        self._phidot = np.cumsum(self.qdot)
        self._tip = chain.link_lengths
        self._cache = {}

    def _get(self, key, fn):
        val = self._cache.get(key)
        if val is None:
            val = self._cache[key] = fn()
        return val

    @property
    def f(self):
        return self._get("f", lambda: self._u @ self._tip)

    @property
    def J(self):
        return self._get("J", lambda: rm._revcumsum(self._du * self._tip))

    @property
    def Jdot(self):
        return self._get("Jdot", lambda: rm._revcumsum(-self._u * (self._tip * self._phidot)))

    @property
    def H(self):
        return self._get("H", lambda: rm.task_hessian(self.chain, self.q))

    def _dynamics(self):
        if "M" not in self._cache:
            self._cache["M"], self._cache["N"] = rm._mass_and_bias(
                self.chain, self._u, self._du, self.qdot)

    @property
    def M(self):
        self._dynamics()
        return self._cache["M"]

    @property
    def N(self):
        self._dynamics()
        return self._cache["N"]

    @property
    def com(self):
        return self._get("com", lambda: rm.com_position(self.chain, self.q))

    @property
    def Jcom(self):
        return self._get("Jcom", lambda: rm.com_jacobian(self.chain, self.q))

    @property
    def Hcom(self):
        return self._get("Hcom", lambda: rm.com_hessian(self.chain, self.q))


_STATE_FREE = frozenset({TaskKind.VELOCITY_REG, TaskKind.TORQUE_REG, TaskKind.TRUST_REGION,
                         TaskKind.TORQUE_LIMIT})


def _joint_selector(n, joints):
    idx = list(range(n)) if joints is None else list(joints)
    if any(j < 0 or j >= n for j in idx):
        raise DimensionMismatch(f"joint index out of range for n={n}: {idx}")
    return np.eye(n)[idx]


def _vel_to_acc(A, b, qdot, dt, n):
    """Rewrite rows in (qdot_{k+1}, dt tau) as rows in (qddot, tau), divided by dt."""
    A = np.asarray(A, dtype=float)
    Aq, At = A[:, :n], A[:, n:]
    return np.hstack([Aq, At / dt]), (np.asarray(b, dtype=float) + Aq @ qdot) / dt


def _position_rows(task, model, dt):
    """Task-space Jacobian and reference for position-like tasks."""
    if task.kind == TaskKind.TIP_POSITION:
        J, f, Jdot = model.J, model.f, model.Jdot
    elif task.kind == TaskKind.JOINT_TARGET:
        J, f, Jdot = np.eye(model.n), model.q, np.zeros((model.n, model.n))
    else:
        raise ValueError(task.kind)
    if task.target.size != f.size:
        raise DimensionMismatch(f"{task.kind.value}: target has {task.target.size} entries, task has {f.size}")
    e = task.target - f
    edot = -J @ model.qdot
    if task.controller == "p":
        ref = p_vel_reference(e, task.kp)
    else:
        ref = pd_vel_reference(e, edot, Jdot, model.qdot, dt, task.kp, task.kv)
    return J, ref


def assemble_task_level(task: TaskSpec, model: CycleModel, dt: float,
                        formulation=Formulation.VEL, mode=Mode.GN, R=None, level_name=""):
    """Rows of one task. In NEWTON mode the ``n`` rows ``[R, 0]`` are appended."""
    A, b, rel = _task_rows(task, model, dt, formulation, mode, R)
    return PriorityLevel(A, b, rel, name=level_name or task.kind.value)


def _task_rows(task, model, dt, formulation=Formulation.VEL, mode=Mode.GN, R=None):
    n = model.n
    formulation = Formulation(formulation)
    Z = np.zeros
    rel = None
    kind = task.kind
    if kind in (TaskKind.TIP_POSITION, TaskKind.JOINT_TARGET):
        J, ref = _position_rows(task, model, dt)
        if task.controller == "p" and formulation == Formulation.ACC:
            raise ValueError("velocity P control needs the VEL formulation")
        A, b = np.hstack([J, Z((J.shape[0], n))]), ref
        rel = np.full(J.shape[0], task.relation)
    elif kind == TaskKind.VELOCITY_REG:
        A, b = np.hstack([np.eye(n), Z((n, n))]), Z(n)
    elif kind == TaskKind.TORQUE_REG:
        S = _joint_selector(n, task.joints)
        A, b = np.hstack([Z((S.shape[0], n)), S]), Z(S.shape[0])
    elif kind == TaskKind.TRUST_REGION:
        I = np.eye(n)
        A = np.vstack([np.hstack([I, Z((n, n))])] * 2)
        b = np.concatenate([np.full(n, -task.rho), np.full(n, task.rho)])
        rel = np.concatenate([np.full(n, Relation.UPPER), np.full(n, Relation.LOWER)])
    elif kind == TaskKind.TORQUE_LIMIT:
        S = _joint_selector(n, task.joints)
        m = S.shape[0]
        A = np.vstack([np.hstack([Z((m, n)), S])] * 2)
        b = np.concatenate([np.full(m, -dt * task.limit), np.full(m, dt * task.limit)])
        rel = np.concatenate([np.full(m, Relation.UPPER), np.full(m, Relation.LOWER)])
    elif kind == TaskKind.COM_BOX:
        jx = model.Jcom[:1]
        lo, hi = task.bounds
        # velocity P law towards each face: jx qdot <= kp (hi - c) and >= kp (lo - c)
        A = np.vstack([np.hstack([jx, Z((1, n))])] * 2)
        b = np.array([-task.kp * (hi - model.com[0]), -task.kp * (lo - model.com[0])])
        rel = np.array([Relation.UPPER, Relation.LOWER])
    elif kind == TaskKind.EOM:
        A, b = _eom_rows(model, dt, formulation)
        return A, b, np.zeros(n, dtype=int)
    else:  # pragma: no cover - exhaustive over TaskKind
        raise ValueError(kind)
    if rel is None:
        rel = np.full(A.shape[0], task.relation)
    if Mode(mode) == Mode.NEWTON:
        if R is None:
            raise ValueError("NEWTON mode needs R")
        R = np.asarray(R, dtype=float)
        if R.shape != (n, n):
            raise DimensionMismatch(f"R must be {n}x{n}")
        A = np.vstack([A, np.hstack([R, Z((n, n))])])
        b = np.concatenate([b, Z(n)])
        rel = np.concatenate([rel, np.full(n, Relation.EQUAL)])
    if formulation == Formulation.ACC:
        A, b = _vel_to_acc(A, b, model.qdot, dt, n)
    return A, b, np.asarray(rel, dtype=int)


def assemble_eom_level(model: CycleModel, dt: float, formulation=Formulation.VEL, name="EOM"):
    """``[M, -I] (qdot_{k+1}, dt tau) = M qdot_k - dt N`` (VEL) or ``M qddot + N = tau`` (ACC).

    Fixed base without contacts: every joint is actuated and the contact-force
    block is empty.
    """
    A, b = _eom_rows(model, dt, Formulation(formulation))
    return PriorityLevel(A, b, np.zeros(model.n, dtype=int), name=name)


def _eom_rows(model, dt, formulation):
    n = model.n
    M = model.M
    A = np.empty((n, 2 * n))
    A[:, :n] = M
    A[:, n:] = -np.eye(n)
    if formulation == Formulation.VEL:
        return A, dt * model.N - M @ model.qdot
    return A, model.N.copy()


def damped_acc_assemble(task: TaskSpec, model: CycleModel, mu: float, level_name=""):
    """Acceleration rows ``[J; mu I] qddot + [Jdot qdot + eddot_ctrl; 0]``."""
    n = model.n
    if task.kind == TaskKind.TIP_POSITION:
        J, f, Jdot = model.J, model.f, model.Jdot
    elif task.kind == TaskKind.JOINT_TARGET:
        J, f, Jdot = np.eye(n), model.q, np.zeros((n, n))
    else:
        raise ValueError("damped acceleration control needs a position task")
    e = task.target - f
    eddot = pd_acc_reference(e, -J @ model.qdot, task.kp, task.kv)
    A = np.vstack([np.hstack([J, np.zeros((J.shape[0], n))]),
                   np.hstack([mu * np.eye(n), np.zeros((n, n))])])
    b = np.concatenate([Jdot @ model.qdot + eddot, np.zeros(n)])
    return PriorityLevel(A, b, np.zeros(A.shape[0], dtype=int), name=level_name or task.kind.value)


def task_hessians(task: TaskSpec, model: CycleModel, m_rows: int):
    """Curvature of each row of a task with respect to q (None when linear)."""
    if task.kind == TaskKind.TIP_POSITION:
        return model.H
    if task.kind == TaskKind.COM_BOX:
        Hx = model.Hcom[0]
        return np.stack([Hx, Hx])
    return None


# -- controller -----------------------------------------------------------------------

@dataclass
class _LevelRows:
    level: int
    tasks: list
    task_rows: list  # slices of each task's own rows inside the level
    n_task_rows: int
    augmentable: bool


class Controller:
    """Builds the hierarchy of each cycle and digests the solver output.

    ``method`` is GN (no curvature), NEWTON_AH (hierarchical Hessian with the
    residual switch, VEL only) or LM (constant damping ``mu`` on augmentable
    levels).
    """

    def __init__(self, chain, tasks, dt=0.005, formulation=Formulation.VEL,
                 method=Method.GN, mu=0.0, eps=EIGEN_FLOOR, nu_factor=SWITCH_FACTOR,
                 gn_warmup=2):
        self.chain = chain
        self.tasks = list(tasks)
        if not self.tasks:
            raise ValueError("no tasks")
        self.formulation = Formulation(formulation)
        self.method = Method(method)
        if self.method == Method.NEWTON_AH and self.formulation != Formulation.VEL:
            raise ValueError("the hierarchical Newton method is formulated in velocities (VEL)")
        if mu < 0:
            raise ValueError("mu must be non-negative")
        self.mu = float(mu)
        self.eps = float(eps)
        self.gn_warmup = int(gn_warmup)
        self.state = ControlState(dt=dt, nu=nu_factor * dt ** 2)
        self.levels = sorted({t.level for t in self.tasks})
        self._by_level = [[t for t in self.tasks if t.level == lev] for lev in self.levels]
        self._constant = {}

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def n_vars(self):
        return 2 * self.chain.n

    def build(self, q, qdot):
        """Hierarchy of the current cycle and its row bookkeeping."""
        st = self.state
        model = CycleModel(self.chain, q, qdot)
        n, dt = self.chain.n, st.dt
        levels, layout, modes = [], [], []
        for li, tasks in enumerate(self._by_level):
            augmentable = any(t.augmentable for t in tasks)
            mode = self._mode(li, augmentable)
            blocks, slices, start = [], [], 0
            for t in tasks:
                blk = self._rows(t, model)
                blocks.append(blk)
                m = blk[0].shape[0]
                slices.append(slice(start, start + m))
                start += m
            A = np.vstack([blk[0] for blk in blocks])
            b = np.concatenate([blk[1] for blk in blocks])
            rel = np.concatenate([blk[2] for blk in blocks])
            extra = self._augmentation(li, mode, augmentable, model)
            if extra is not None:
                A = np.vstack([A, extra[0]])
                b = np.concatenate([b, extra[1]])
                rel = np.concatenate([rel, np.zeros(n, dtype=int)])
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise FloatingPointError(f"non-finite rows on level L{li + 1}")
            levels.append(PriorityLevel.trusted(A, b, rel, name=f"L{li + 1}"))
            layout.append(_LevelRows(li, tasks, slices, start, augmentable))
            modes.append(mode)
        self._layout = layout
        self._model = model
        return Hierarchy(levels, 2 * n), modes

    def _rows(self, task, model):
        if task.kind not in _STATE_FREE:
            return _task_rows(task, model, self.state.dt, self.formulation)
        # state-free rows are built once in VEL form
        key = id(task)
        blk = self._constant.get(key)
        if blk is None:
            blk = self._constant[key] = _task_rows(task, model, self.state.dt, Formulation.VEL)
        if self.formulation == Formulation.ACC:
            A, b = _vel_to_acc(blk[0], blk[1], model.qdot, self.state.dt, model.n)
            return A, b, blk[2]
        return blk

    def _mode(self, li, augmentable):
        st = self.state
        if not augmentable or self.method != Method.NEWTON_AH or st.cycle < self.gn_warmup:
            return Mode.GN
        return newton_switch(st.residuals.get(li, 0.0), st.nu)

    def _augmentation(self, li, mode, augmentable, model):
        n, dt = self.chain.n, self.state.dt
        if self.method == Method.LM and augmentable and self.mu > 0:
            R = self.mu * np.eye(n)
            # the damping acts on the native decision variable of each formulation
            return np.hstack([R, np.zeros((n, n))]), np.zeros(n)
        if mode != Mode.NEWTON:
            return None
        H = self.level_hessian(li, model)
        R = psd_factor(H, self.eps)
        A, b = np.hstack([R, np.zeros((n, n))]), np.zeros(n)
        return A, b

    def level_hessian(self, li, model=None):
        """Hierarchical Hessian of level ``li`` from the previous cycle's multipliers."""
        model = model or self._model
        lam_solver = self.state.multipliers.get(li)
        n = self.chain.n
        if lam_solver is None:
            return np.zeros((n, n))
        lams, hs = [], []
        for i in range(li + 1):
            lay = self._layout[i]
            for t, sl in zip(lay.tasks, lay.task_rows):
                if not t.has_curvature:
                    continue
                lam = np.asarray(lam_solver[i])[sl]
                # solver multipliers carry the opposite sign to the Lagrangian used for
                # the Hessian; the dt factor moves them to the optimisation scale
                _, lam_optim = rescale_to_optim(0.0, -lam, self.state.dt)
                lams.append(lam_optim)
                hs.append(task_hessians(t, model, sl.stop - sl.start))
        return hierarchical_hessian(lams, hs, n)

    def update(self, sol: HlspSolution, modes):
        """Store task residuals and multipliers for the next cycle."""
        st = self.state
        for li, lay in enumerate(self._layout):
            w = np.asarray(sol.slacks[li])[:lay.n_task_rows]
            st.residuals[li] = 0.5 * float(w @ w)
            st.multipliers[li] = [np.asarray(m) for m in sol.multipliers[li]]
            st.modes[li] = modes[li]
        st.cycle += 1
        st.t += st.dt

    def task_slack_norms(self, sol):
        return np.array([np.linalg.norm(np.asarray(sol.slacks[li])[:lay.n_task_rows])
                         for li, lay in enumerate(self._layout)])
