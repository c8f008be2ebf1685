"""A two-link arm reaches for (1, 1) m while a trust region caps every joint speed.

The trust region sits above the reaching task, so it always wins: the arm
never moves faster than rho = 0.1 rad/s. The closest joint configuration
that reaches the target is pi/2 rad away in the max-norm, so no controller
can get there in less than about 15.7 s. Even with the cap lifted the
critically damped task law with kp = 1 needs 2.545 (1 + t) exp(-t) < 1e-3,
about 10.2 s, to close the initial 2.545 m gap to within a millimetre.
"""

import numpy as np

from _plot import figure
from hiernewton import robot_model as rm
from hiernewton import sim
from hiernewton.control import Formulation


def main():
    sc = sim.example2()
    logs = {f: sim.run_scenario(sim.example2(f, duration=20.0)) for f in Formulation}
    err = sim.tip_error(sc, logs[Formulation.VEL])
    t = logs[Formulation.VEL].array("t")
    print(f"max |qd| = {np.abs(logs[Formulation.VEL].array('qd')).max():.12f} rad/s (rho = 0.1)")
    print(f"ACC vs VEL joint positions differ by "
          f"{np.abs(logs[Formulation.ACC].array('q') - logs[Formulation.VEL].array('q')).max():.1e}")
    for when in (5.0, 10.0, 15.0, 19.995):
        print(f"  tip error at t = {when:6.3f} s: {err[int(round(when / sc.dt))]:.4f} m")
    below = np.flatnonzero(err < 1e-3)
    print(f"first time below 1 mm: {t[below[0]]:.2f} s" if below.size else "never below 1 mm")

    q2 = np.pi / 2
    q1 = -np.pi / 2
    print(f"an exact solution is q = ({q1:.4f}, {q2:.4f}), tip at "
          f"{np.round(rm.forward_kinematics(sc.chain, [q1, q2]), 12)}; "
          f"max-norm distance from q0 = {np.abs(np.array([q1, q2]) - sc.q0).max():.4f} rad")

    free = sim.run_scenario(sim.example2(rho=100.0, duration=14.0))
    err_free = sim.tip_error(sc, free)
    hit = np.flatnonzero(err_free < 1e-3)
    print(f"without the cap (rho = 100): below 1 mm at t = {free.array('t')[hit[0]]:.2f} s"
          if hit.size else "without the cap: not below 1 mm in 14 s")
    bound = sim.closed_form_point_mass(1.0, 1.0, 2.0, err[0], 0.0, free.array("t"))
    print(f"ideal critically damped error from {err[0]:.3f} m reaches 1 mm at "
          f"{free.array('t')[np.flatnonzero(bound < 1e-3)[0]]:.2f} s")

    def draw(plt):
        plt.figure(figsize=(6, 4))
        plt.semilogy(t, err, label="rho = 0.1")
        plt.semilogy(free.array("t"), err_free, label="rho = 100")
        plt.xlabel("t [s]")
        plt.ylabel("tip error [m]")
        plt.legend()

    figure("03_reaching_under_a_speed_limit", draw)


if __name__ == "__main__":
    main()
