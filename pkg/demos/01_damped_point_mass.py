"""Why damping spoils a tuned acceleration controller, and what the velocity domain does.

A unit mass is driven from q = 1 to 0 by PD control with kp = 1 and the
critically damped gain kv = 2. Damping the least-squares step by mu scales
both gains by 1/(1 + mu^2): the loop becomes underdamped and overshoots unless
kv is re-tuned. The same damping applied in the velocity domain only slows the
robot down.
"""

import numpy as np

from _plot import figure
from hiernewton import sim
from hiernewton.control import critical_damping

MUS = [0.0, 0.1, 0.5, 1.0]


def main():
    print("acceleration-domain damping, kv tuned for mu = 0")
    plain = sim.point_mass_study(MUS, "kv(kp)", "ACC_DAMPED")
    for mu, (t, q, _) in plain.items():
        print(f"  mu={mu:<4} min q = {q.min():+.4f}")
    t, q, _ = plain[0.0]
    exact = sim.closed_form_point_mass(1.0, 1.0, critical_damping(1.0), 1.0, 0.0, t)
    print(f"  mu=0 tracks (1+t)exp(-t) to {np.abs(q - exact).max():.1e} (explicit Euler, dt = 5 ms)")

    print("acceleration-domain damping, kv re-tuned as 2 sqrt(m (1+mu^2) kp)")
    tuned = sim.point_mass_study(MUS, "kv(kp,mu)", "ACC_DAMPED")
    for mu, (t, q, _) in tuned.items():
        print(f"  mu={mu:<4} min q = {q.min():+.4f}")

    print("velocity-domain damping: first time |q| < 0.01")
    vel = sim.point_mass_study([0.0, 0.5, 1.0], "kv(kp)", "VEL_PD", until=0.01)
    for mu, (t, q, _) in vel.items():
        print(f"  mu={mu:<4} t = {sim.settle_time(t, q):8.2f} s, min q = {q.min():+.4f}")

    def draw(plt):
        fig, ax = plt.subplots(1, 2, figsize=(10, 4))
        for mu, (t, q, _) in plain.items():
            ax[0].plot(t, q, label=f"mu={mu}")
        ax[0].set_title("damped acceleration control, kv(kp)")
        for mu, (t, q, _) in vel.items():
            keep = t <= 10.0
            ax[1].plot(t[keep], q[keep], label=f"mu={mu}")
        ax[1].set_title("damped velocity control")
        for a in ax:
            a.axhline(0.0, color="k", lw=0.5)
            a.set_xlabel("t [s]")
            a.legend()
        ax[0].set_ylabel("q")

    figure("01_damped_point_mass", draw)


if __name__ == "__main__":
    main()
