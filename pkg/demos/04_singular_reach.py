"""Gauss-Newton chatter at a singular reach, and what the hierarchical Hessian does about it.

Part one stretches a kinematic two-link arm towards a point it cannot reach.
Near full stretch the tip Jacobian loses rank: Gauss-Newton treats the
infeasible task as if it were linear and slams the joint velocities between
the faces of the trust region every cycle. The hierarchical Newton method
notices the non-zero task residual, switches on the curvature of the
Lagrangian and settles at the same closest point without oscillating.

Part two runs the three-link scenario with an unactuated first joint.
Under gravity the free joint swings faster than the trust region allows, so
the trust-region level absorbs every remaining degree of freedom and the
three methods follow the same trajectory.
"""

import numpy as np

from _plot import figure
from hiernewton import robot_model as rm
from hiernewton import sim
from hiernewton.control import Method, TaskKind, TaskSpec


def stretched_arm(method):
    tasks = [TaskSpec(TaskKind.TRUST_REGION, 0, rho=0.5),
             TaskSpec(TaskKind.TIP_POSITION, 1, kp=10.0, target=[2.5, 0.3], augmentable=True,
                      controller="p"),
             TaskSpec(TaskKind.VELOCITY_REG, 2),
             TaskSpec(TaskKind.TORQUE_REG, 3)]
    return sim.Scenario(rm.PlanarChain.uniform(2), tasks, q0=[0.3, 0.8], duration=8.0,
                        method=method)


def main():
    print("part one: kinematic arm, unreachable target (2.5, 0.3) m")
    kin = {}
    for method in (Method.GN, Method.NEWTON_AH):
        sc = stretched_arm(method)
        log = sim.run_scenario(sc)
        kin[method] = log
        err = sim.tip_error(sc, log)
        print(f"  {method.value:<9} velocity sign flips {sim.chatter_count(log.array('qd'), (0, 1), 0.25):4d}, "
              f"final error {err[-1]:.6f} m, Newton cycles {int(log.array('mode')[:, 1].sum())}")

    print("part two: three-link arm, first joint unactuated")
    runs = {}
    for method in Method:
        sc = sim.example3(method)
        log = sim.run_scenario(sc)
        runs[method] = (sc, log)
        err = sim.tip_error(sc, log)
        print(f"  {method.value:<9} flips {sim.chatter_count(log.array('qd')):3d}, "
              f"final error {err[-1]:.4f} m, max |qd| {np.abs(log.array('qd')).max():.3f} rad/s, "
              f"max |tau_1| {np.abs(log.array('tau')[:, 0]).max():.1e}")

    def draw(plt):
        fig, ax = plt.subplots(1, 2, figsize=(10, 4))
        for method, log in kin.items():
            ax[0].plot(log.array("t"), log.array("qd")[:, 1], label=method.value, lw=0.8)
        ax[0].set_title("stretched arm, joint 2 velocity")
        ax[0].set_xlabel("t [s]")
        ax[0].legend()
        for method, (sc, log) in runs.items():
            ax[1].plot(log.array("t"), sim.tip_error(sc, log), label=method.value)
        ax[1].set_title("three-link arm, tip error [m]")
        ax[1].set_xlabel("t [s]")
        ax[1].legend()

    figure("04_singular_reach", draw)


if __name__ == "__main__":
    main()
