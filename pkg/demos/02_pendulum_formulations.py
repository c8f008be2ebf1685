"""The acceleration and velocity formulations are the same controller.

An unactuated double pendulum is released from a horizontal stretch. The
hierarchy only holds the equations of motion and zero torque, so the solver
acts as a forward-dynamics integrator. Solving for accelerations or for the
next velocities gives the same trajectory up to rounding, and the energy
gained by explicit Euler shrinks with the step.
"""

import numpy as np

from _plot import figure
from hiernewton import robot_model as rm
from hiernewton import sim
from hiernewton.control import Formulation


def run(formulation, dt=0.005):
    sc = sim.example1(formulation, dt=dt)
    s = sim.Simulator(sc)
    log = s.run()
    energy = [rm.total_energy(sc.chain, q, qd) for q, qd in zip(log.array("q"), log.array("qd"))]
    gain = rm.total_energy(sc.chain, s.state.q, s.state.qd) - energy[0]
    return log, np.array(energy), gain


def main():
    vel, energy, gain = run(Formulation.VEL)
    acc, _, _ = run(Formulation.ACC)
    print(f"max |q_ACC - q_VEL| over 10 s: {np.abs(acc.array('q') - vel.array('q')).max():.2e} rad")
    print(f"max |tau| (unactuated): {np.abs(vel.array('tau')).max():.1e} Nm")
    gains = {0.005: gain}
    for dt in (0.0025, 0.00125):
        gains[dt] = run(Formulation.VEL, dt)[2]
    for dt, g in gains.items():
        print(f"energy gained by explicit Euler, dt={dt * 1e3:.3g} ms: {g:.3f} J")
    print(f"ratios: {gains[0.005] / gains[0.0025]:.2f}, {gains[0.0025] / gains[0.00125]:.2f} "
          "(first order tends to 2 as dt shrinks)")

    def draw(plt):
        fig, ax = plt.subplots(1, 2, figsize=(10, 4))
        t = vel.array("t")
        for j in range(2):
            ax[0].plot(t, vel.array("q")[:, j], label=f"q{j + 1} VEL")
            ax[0].plot(t, acc.array("q")[:, j], "--", label=f"q{j + 1} ACC")
        ax[0].set_xlabel("t [s]")
        ax[0].set_ylabel("rad")
        ax[0].legend()
        ax[1].plot(t, energy - energy[0])
        ax[1].set_xlabel("t [s]")
        ax[1].set_ylabel("energy gain [J]")

    figure("02_pendulum_formulations", draw)


if __name__ == "__main__":
    main()
