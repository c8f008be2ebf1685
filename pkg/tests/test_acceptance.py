"""Acceptance criteria 1-7, each reported as one PASS/FAIL line.

Every criterion bundles several sub-checks and a wall-clock budget; the line
lists the measured value of each sub-check so that a failure is diagnosable
from the report alone.
"""

import time

import numpy as np

from hiernewton import robot_model as rm
from hiernewton import sim
from hiernewton.checks import derivative_suite, hlsp_oracle_suite, kkt_suite
from hiernewton.control import Formulation, Method, critical_damping


class Criterion:
    def __init__(self, number, title, budget, report):
        self.number, self.title, self.budget, self.report = number, title, budget, report
        self.checks = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def check(self, label, value, ok):
        self.checks.append((label, value, bool(ok)))

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            self.check("runtime s", elapsed, elapsed < self.budget)
        ok = exc[0] is None and all(c[2] for c in self.checks)
        parts = "; ".join(f"{label} {value:.4g}{'' if good else ' (X)'}"
                          for label, value, good in self.checks)
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'}  {self.title}: {parts}"
        print(line)
        self.report.append(line)
        return False

    def assert_all(self):
        failed = [label for label, _, good in self.checks if not good]
        assert not failed, f"criterion {self.number} failed: {', '.join(failed)}"


def first_time_below(t, values, threshold):
    idx = np.flatnonzero(values < threshold)
    return float(t[idx[0]]) if idx.size else np.inf


def largest_rebound(err):
    """Largest rise of the error above its running minimum."""
    return float(np.max(err - np.minimum.accumulate(err)))


def test_criterion_1_point_mass_acceleration_damping(acceptance_report):
    with Criterion(1, "1-D mass, damped acceleration control", 1.0, acceptance_report) as c:
        t, q, _ = sim.simulate_point_mass("ACC_DAMPED", 0.0, kp=1.0, kv=2.0)
        err = np.abs(q - (1 + t) * np.exp(-t)).max()
        c.check("(a) max|q - (1+t)exp(-t)|", err, err < 5e-3)
        _, q, _ = sim.simulate_point_mass("ACC_DAMPED", 1.0, kp=1.0, kv=critical_damping(1.0))
        c.check("(b) min q, kv(kp)", q.min(), q.min() < -0.01)
        _, q, _ = sim.simulate_point_mass("ACC_DAMPED", 1.0, kp=1.0,
                                          kv=critical_damping(1.0, 1.0, 1.0))
        c.check("(c) min q, kv(kp,mu)", q.min(), q.min() > -1e-3)
    c.assert_all()


def test_criterion_2_point_mass_velocity_control(acceptance_report):
    with Criterion(2, "1-D mass, velocity PD control", 1.0, acceptance_report) as c:
        runs = sim.point_mass_study([0.0, 0.5, 1.0], "kv(kp)", "VEL_PD", until=0.01)
        times = []
        for mu, (t, q, _) in runs.items():
            c.check(f"min q mu={mu}", q.min(), q.min() > -1e-3)
            times.append(first_time_below(t, np.abs(q), 0.01))
            c.check(f"t_0.01 mu={mu}", times[-1], np.isfinite(times[-1]))
        c.check("ordered settle times", float(times[0] < times[1] < times[2]),
                times[0] < times[1] < times[2])
    c.assert_all()


def run_example1(formulation=Formulation.VEL, dt=0.005):
    """Logged positions and the energy gained between t = 0 and the end of the run."""
    sc = sim.example1(formulation, dt=dt)
    s = sim.Simulator(sc)
    log = s.run()
    gain = rm.total_energy(sc.chain, s.state.q, s.state.qd) - rm.total_energy(sc.chain, sc.q0, sc.qd0)
    return log.array("q"), abs(gain)


def test_criterion_3_example1(acceptance_report):
    with Criterion(3, "Example 1, ACC vs VEL and energy drift", 5.0, acceptance_report) as c:
        q_vel, drift = run_example1(Formulation.VEL)
        q_acc, _ = run_example1(Formulation.ACC)
        diff = np.abs(q_acc - q_vel).max()
        c.check("max|q_ACC - q_VEL|", diff, diff < 1e-6)
        _, drift_half = run_example1(Formulation.VEL, dt=0.0025)
        ratio = drift / drift_half
        c.check("drift(dt)/drift(dt/2)", ratio, abs(ratio - 2.0) <= 0.4)
    c.assert_all()


def test_criterion_4_example2(acceptance_report):
    with Criterion(4, "Example 2, reaching under a trust region", 5.0, acceptance_report) as c:
        logs = {f: sim.run_scenario(sim.example2(f)) for f in Formulation}
        sc = sim.example2()
        err = sim.tip_error(sc, logs[Formulation.VEL])
        c.check("min tip error m", err.min(), err.min() < 1e-3)
        diff = np.abs(logs[Formulation.ACC].array("q") - logs[Formulation.VEL].array("q")).max()
        c.check("max|q_ACC - q_VEL|", diff, diff < 1e-6)
        excess = max(np.abs(log.array("qd")).max() for log in logs.values()) - 0.1
        c.check("max|qd| - rho", excess, excess <= 1e-9)
    c.assert_all()


def test_criterion_5_example3(acceptance_report):
    with Criterion(5, "Example 3, GN vs hierarchical Newton vs LM", 10.0, acceptance_report) as c:
        runs = {m: (sim.example3(m), None) for m in Method}
        runs = {m: (sc, sim.run_scenario(sc)) for m, (sc, _) in runs.items()}
        chatter = {m: sim.chatter_count(log.array("qd"), joints=(1, 2), threshold=0.05)
                   for m, (_, log) in runs.items()}
        final = {m: sim.tip_error(sc, log)[-1] for m, (sc, log) in runs.items()}
        c.check("(a) GN chatter", chatter[Method.GN], chatter[Method.GN] > 50)
        c.check("(b) Newton chatter", chatter[Method.NEWTON_AH], chatter[Method.NEWTON_AH] < 5)
        c.check("(b) Newton final error - GN final error", final[Method.NEWTON_AH] - final[Method.GN],
                final[Method.NEWTON_AH] <= final[Method.GN] + 0.05)
        sc, log = runs[Method.LM]
        rebound = largest_rebound(sim.tip_error(sc, log))
        c.check("(c) LM rebound m", rebound, rebound > 0.02)
        tau0 = max(np.abs(log.array("tau")[:, 0]).max() for _, log in runs.values())
        c.check("(d) max|tau_1|", tau0, tau0 < 1e-9)
    c.assert_all()


def test_criterion_6_solver_against_enumeration(acceptance_report):
    with Criterion(6, "active-set solver vs enumeration and KKT", 10.0, acceptance_report) as c:
        for res in hlsp_oracle_suite(seed=0, count=50) + kkt_suite(seed=0, count=50):
            c.check(res.name, res.value, res.passed)
    c.assert_all()


def test_criterion_7_derivatives(acceptance_report):
    with Criterion(7, "derivative stack vs finite differences", 5.0, acceptance_report) as c:
        for res in derivative_suite(seed=0, count=100):
            c.check(res.name, res.value, res.passed)
    c.assert_all()
