"""Closed-loop simulation: assemble, solve, integrate, log.

The plant is the controlled chain itself: the solver's accelerations (or next
velocities) are applied exactly and the positions integrate the velocity of the
previous step, ``q_{k+1} = q_k + dt qdot_k``.

Also here: the three chain scenarios, and the 1-D point-mass studies with their
closed-form reference solution.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import robot_model as rm
from .control import (EIGEN_FLOOR, SWITCH_FACTOR, Controller, Formulation, Method, TaskKind,
                      TaskSpec, critical_damping)
from .hlsp import HlspSolver, Relation, SolverOptions, dump_hierarchy

__all__ = [
    "Scenario",
    "SimState",
    "TrajectoryLog",
    "SolverFailure",
    "Simulator",
    "step",
    "run_scenario",
    "example1",
    "example2",
    "example3",
    "chatter_count",
    "tip_error",
    "closed_form_point_mass",
    "simulate_point_mass",
    "point_mass_study",
    "settle_time",
    "fine_step_point_mass",
]


@dataclass
class Scenario:
    chain: rm.PlanarChain
    tasks: list
    q0: np.ndarray
    qd0: np.ndarray | None = None
    dt: float = 0.005
    duration: float = 10.0
    formulation: Formulation = Formulation.VEL
    method: Method = Method.GN
    mu: float = 0.0
    name: str = ""
    eps: float = EIGEN_FLOOR
    nu_factor: float = SWITCH_FACTOR

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float).reshape(-1)
        self.qd0 = np.zeros_like(self.q0) if self.qd0 is None else np.asarray(self.qd0, dtype=float).reshape(-1)
        self.formulation = Formulation(self.formulation)
        self.method = Method(self.method)
        if self.q0.size != self.chain.n or self.qd0.size != self.chain.n:
            raise ValueError(f"initial state must have {self.chain.n} entries")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 < self.dt < self.duration:
            raise ValueError("dt must lie in (0, duration)")

    @property
    def steps(self) -> int:
        # guard against 10 / 0.005 = 2000.0000000000002
        return int(math.ceil(self.duration / self.dt - 1e-9))

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class SimState:
    t: float
    q: np.ndarray
    qd: np.ndarray
    k: int = 0


class SolverFailure(RuntimeError):
    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


@dataclass
class TrajectoryLog:
    """One row per control step, stored column-wise."""

    n: int
    n_levels: int
    t: list = field(default_factory=list)
    q: list = field(default_factory=list)
    qd: list = field(default_factory=list)
    qdd: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    wnorm: list = field(default_factory=list)
    mode: list = field(default_factory=list)
    asiter: list = field(default_factory=list)
    solve_us: list = field(default_factory=list)

    def append(self, t, q, qd, qdd, tau, wnorm, mode, asiter, solve_us):
        self.t.append(float(t))
        self.q.append(np.array(q, dtype=float))
        self.qd.append(np.array(qd, dtype=float))
        self.qdd.append(np.array(qdd, dtype=float))
        self.tau.append(np.array(tau, dtype=float))
        self.wnorm.append(np.array(wnorm, dtype=float))
        self.mode.append(np.array(mode, dtype=int))
        self.asiter.append(int(asiter))
        self.solve_us.append(float(solve_us))

    def __len__(self):
        return len(self.t)

    def array(self, name) -> np.ndarray:
        data = getattr(self, name)
        if name in ("t", "asiter", "solve_us"):
            return np.asarray(data)
        width = {"wnorm": self.n_levels, "mode": self.n_levels}.get(name, self.n)
        return np.asarray(data).reshape(len(data), width)

    def header(self):
        cols = ["t"]
        for name in ("q", "qd", "qdd", "tau"):
            cols += [f"{name}_{i}" for i in range(self.n)]
        cols += [f"wnorm_L{l + 1}" for l in range(self.n_levels)]
        cols += [f"mode_L{l + 1}" for l in range(self.n_levels)]
        return cols + ["asiter", "solve_us"]

    def to_csv(self, path_or_buf=None, include_timing=True) -> str:
        """CSV text with 12 significant digits; ``include_timing=False`` zeroes the
        wall-clock column so that repeated runs are byte-identical."""
        buf = io.StringIO()
        buf.write(",".join(self.header()) + "\n")
        for k in range(len(self)):
            vals = [self.t[k], *self.q[k], *self.qd[k], *self.qdd[k], *self.tau[k], *self.wnorm[k]]
            parts = [_fmt(v) for v in vals]
            parts += [str(int(m)) for m in self.mode[k]]
            parts.append(str(self.asiter[k]))
            parts.append(_fmt(self.solve_us[k] if include_timing else 0.0))
            buf.write(",".join(parts) + "\n")
        text = buf.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w", newline="\n") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "TrajectoryLog":
        if isinstance(path_or_text, str) and "\n" in path_or_text:
            text = path_or_text
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        lines = text.strip("\n").split("\n")
        header = lines[0].split(",")
        n = sum(1 for c in header if c.startswith("q_"))
        p = sum(1 for c in header if c.startswith("wnorm_L"))
        log = cls(n, p)
        for line in lines[1:]:
            v = line.split(",")
            f = [float(x) for x in v]
            o = 1
            q, qd, qdd, tau = (f[o + i * n:o + (i + 1) * n] for i in range(4))
            o += 4 * n
            log.append(f[0], q, qd, qdd, tau, f[o:o + p], [int(x) for x in v[o + p:o + 2 * p]],
                       int(v[o + 2 * p]), f[o + 2 * p + 1])
        return log


def _fmt(v):
    return f"{v:.12g}"


# -- simulation loop ----------------------------------------------------------------

class Simulator:
    """Owns a controller, a solver instance and the plant state of one run."""

    def __init__(self, scenario: Scenario, solver_options: SolverOptions | None = None,
                 dump_dir=None):
        self.scenario = scenario
        self.controller = Controller(scenario.chain, scenario.tasks, scenario.dt,
                                     scenario.formulation, scenario.method, scenario.mu,
                                     eps=scenario.eps, nu_factor=scenario.nu_factor)
        self.solver = HlspSolver(solver_options)
        self.state = SimState(0.0, scenario.q0.copy(), scenario.qd0.copy(), 0)
        self.dump_dir = dump_dir

    def step(self):
        """Advance one control cycle; returns the log row as a tuple."""
        sc, st, ctl = self.scenario, self.state, self.controller
        n, dt = sc.chain.n, sc.dt
        h, modes = ctl.build(st.q, st.qd)
        if self.dump_dir is not None:
            dump_hierarchy(h, f"{self.dump_dir}/step{st.k:06d}.mtx")
        t0 = time.perf_counter()
        sol = self.solver.solve(h)
        elapsed = (time.perf_counter() - t0) * 1e6
        x = sol.x
        if sc.formulation == Formulation.VEL:
            qd_next = x[:n].copy()
            tau = x[n:] / dt
            qdd = (qd_next - st.qd) / dt
            wnorm = ctl.task_slack_norms(sol)
        else:
            qdd = x[:n].copy()
            tau = x[n:].copy()
            qd_next = st.qd + dt * qdd
            # report slacks in the velocity scale of the VEL formulation
            wnorm = dt * ctl.task_slack_norms(sol)
        row = (st.t, st.q.copy(), st.qd.copy(), qdd, tau, wnorm, [int(m) for m in modes],
               sol.iterations, elapsed)
        ctl.update(sol, modes)
        ok = sol.converged and np.all(np.isfinite(x))
        st.q = st.q + dt * st.qd
        st.qd = qd_next
        st.k += 1
        st.t = st.k * dt
        return row, ok

    def run(self) -> TrajectoryLog:
        log = TrajectoryLog(self.scenario.chain.n, self.controller.n_levels)
        for _ in range(self.scenario.steps):
            try:
                row, ok = self.step()
            except FloatingPointError as exc:
                raise SolverFailure(f"diverged at t={self.state.t:.4f}: {exc}", log) from None
            log.append(*row)
            if not ok:
                raise SolverFailure(f"solver failed at t={row[0]:.4f}", log)
        return log


def step(scenario: Scenario, simulator: Simulator | None = None):
    """One cycle of ``scenario``; pass the returned simulator back in to continue."""
    sim = simulator or Simulator(scenario)
    row, ok = sim.step()
    if not ok:
        raise SolverFailure("solver failed", None)
    return sim, row


def run_scenario(scenario: Scenario, solver_options=None, dump_dir=None) -> TrajectoryLog:
    return Simulator(scenario, solver_options, dump_dir).run()


# -- chain scenarios ------------------------------------------------------------------

def example1(formulation=Formulation.VEL, dt=0.005, duration=10.0) -> Scenario:
    """Unactuated double pendulum released from a horizontal stretch."""
    tasks = [
        TaskSpec(TaskKind.EOM, 0),
        TaskSpec(TaskKind.TORQUE_REG, 0),
        TaskSpec(TaskKind.VELOCITY_REG, 1),
    ]
    return Scenario(rm.PlanarChain.uniform(2), tasks, q0=[-np.pi / 2, 0.0], dt=dt,
                    duration=duration, formulation=formulation, name="example1")


def _reach_tasks(n, target, kp, kv, rho, torque_free=None):
    l1 = [TaskSpec(TaskKind.EOM, 0)]
    if torque_free is not None:
        l1.append(TaskSpec(TaskKind.TORQUE_REG, 0, joints=torque_free))
    return l1 + [
        TaskSpec(TaskKind.TRUST_REGION, 1, rho=rho),
        TaskSpec(TaskKind.TIP_POSITION, 2, kp=kp, kv=kv, target=target, augmentable=True),
        TaskSpec(TaskKind.VELOCITY_REG, 3),
        TaskSpec(TaskKind.TORQUE_REG, 4),
    ]


def example2(formulation=Formulation.VEL, method=Method.GN, dt=0.005, duration=10.0,
             kp=1.0, kv=2.0, rho=0.1) -> Scenario:
    """Two-link arm reaching a Cartesian point under a joint-velocity trust region."""
    return Scenario(rm.PlanarChain.uniform(2), _reach_tasks(2, [1.0, 1.0], kp, kv, rho),
                    q0=[-np.pi, 1.0], dt=dt, duration=duration, formulation=formulation,
                    method=method, name="example2")


def example3(method=Method.GN, mu=0.1, dt=0.005, duration=10.0, kp=1.0, kv=2.0,
             rho=0.1) -> Scenario:
    """Three-link arm with an unactuated first joint, driven into a singular reach.

    ``method`` GN and NEWTON_AH run the velocity formulation; LM runs the
    damped acceleration formulation with damping ``mu``.
    """
    formulation = Formulation.ACC if Method(method) == Method.LM else Formulation.VEL
    return Scenario(rm.PlanarChain.uniform(3),
                    _reach_tasks(3, [1.0, 1.0], kp, kv, rho, torque_free=(0,)),
                    q0=[-np.pi, 1.0, 0.0], dt=dt, duration=duration, formulation=formulation,
                    method=method, mu=mu if Method(method) == Method.LM else 0.0,
                    name="example3")


def tip_error(scenario: Scenario, log: TrajectoryLog) -> np.ndarray:
    """Distance of the tip to the end-effector target at every logged step."""
    task = next(t for t in scenario.tasks if t.kind == TaskKind.TIP_POSITION)
    q = log.array("q")
    return np.array([np.linalg.norm(task.target - rm.forward_kinematics(scenario.chain, qk))
                     for qk in q])


def chatter_count(qd, joints=(1, 2), threshold=0.05) -> int:
    """Consecutive samples where a joint velocity flips sign while both exceed ``threshold``."""
    qd = np.asarray(qd)
    count = 0
    for j in joints:
        if j >= qd.shape[1]:
            continue
        v = qd[:, j]
        flip = (v[1:] * v[:-1] < 0) & (np.abs(v[1:]) > threshold) & (np.abs(v[:-1]) > threshold)
        count += int(flip.sum())
    return count


# -- 1-D point mass --------------------------------------------------------------------

def closed_form_point_mass(m, kp, kv, q0, qd0, t):
    """Solution of ``m qddot + kv qdot + kp q = 0``.

    Handles the under-, critically- and over-damped cases; the critical case
    is used when the discriminant is within a relative 1e-12 of zero.
    """
    t = np.asarray(t, dtype=float)
    delta = kv / (2.0 * m)
    disc = delta ** 2 - kp / m
    if abs(disc) <= 1e-12 * max(delta ** 2, kp / m):
        return np.exp(-delta * t) * (q0 + (qd0 + delta * q0) * t)
    if disc < 0:
        wd = np.sqrt(-disc)
        C, D = q0, (qd0 + delta * q0) / wd
        return np.exp(-delta * t) * (C * np.cos(wd * t) + D * np.sin(wd * t))
    s = np.sqrt(disc)
    r1, r2 = -delta + s, -delta - s
    c1 = (qd0 - r2 * q0) / (r1 - r2)
    return c1 * np.exp(r1 * t) + (q0 - c1) * np.exp(r2 * t)


def fine_step_point_mass(m, kp, kv, q0, qd0, t):
    """High-accuracy numerical reference for :func:`closed_form_point_mass`."""
    t = np.asarray(t, dtype=float)
    sol = solve_ivp(lambda _, y: [y[1], -(kv * y[1] + kp * y[0]) / m], (0.0, float(t[-1])),
                    [q0, qd0], t_eval=t, rtol=1e-11, atol=1e-13, method="DOP853")
    return sol.y[0]


def simulate_point_mass(controller, mu, kp=1.0, kv=2.0, m=1.0, q0=1.0, qd0=0.0,
                        dt=0.005, duration=10.0, until=None, max_duration=1e4):
    """Discrete closed loop of a 1-D mass driven to zero.

    ``ACC_DAMPED`` solves ``min |qddot + eddot_ctrl|^2 + mu^2 |qddot|^2``;
    ``VEL_PD`` solves ``min |qdot_{k+1} + edot_ctrl|^2 + mu^2 |qdot_{k+1}|^2``
    with the velocity-domain PD reference. Both use the scalar pseudo-inverse
    of the one-row task. With ``until`` set, the run continues past
    ``duration`` until ``|q| < until`` (capped by ``max_duration``).
    Returns ``(t, q, qdot)``.
    """
    if controller not in ("ACC_DAMPED", "VEL_PD"):
        raise ValueError(f"unknown controller {controller!r}")
    scale = 1.0 / (1.0 + mu * mu)
    kp_m, kv_m = kp / m, kv / m
    q, qd = float(q0), float(qd0)
    steps = int(math.ceil(duration / dt - 1e-9))
    cap = int(math.ceil(max_duration / dt))
    qs, qds = [q], [qd]
    k = 0
    # e = -q so eddot_ctrl = kp q + kv qdot (per unit mass)
    while k < steps or (until is not None and abs(q) >= until and k < cap):
        ref = kp_m * q + kv_m * qd
        if controller == "ACC_DAMPED":
            qd_next = qd + dt * (-ref * scale)
        else:
            qd_next = -(-qd + dt * ref) * scale
        q, qd = q + dt * qd, qd_next
        qs.append(q)
        qds.append(qd)
        k += 1
    t = dt * np.arange(len(qs))
    return t, np.array(qs), np.array(qds)


def settle_time(t, q, threshold=0.01) -> float:
    idx = np.flatnonzero(np.abs(q) < threshold)
    return float(t[idx[0]]) if idx.size else math.inf


def point_mass_study(mus, gain_rule="kv(kp)", controller="ACC_DAMPED", kp=1.0, m=1.0,
                     dt=0.005, duration=10.0, until=None):
    """Family of 1-D runs, one per damping value.

    ``gain_rule`` ``"kv(kp)"`` uses ``2 sqrt(m kp)``; ``"kv(kp,mu)"`` uses
    ``2 sqrt(m (1 + mu^2) kp)``. Returns ``{mu: (t, q, qdot)}``.
    """
    if gain_rule not in ("kv(kp)", "kv(kp,mu)"):
        raise ValueError(f"unknown gain rule {gain_rule!r}")
    out = {}
    for mu in mus:
        kv = critical_damping(kp, m, mu if gain_rule == "kv(kp,mu)" else 0.0)
        out[mu] = simulate_point_mass(controller, mu, kp, kv, m, 1.0, 0.0, dt, duration, until)
    return out
