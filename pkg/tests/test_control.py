import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiernewton import robot_model as rm
from hiernewton import sim
from hiernewton.checks import fd_lagrangian_hessian
from hiernewton.control import (
    EIGEN_FLOOR,
    Controller,
    ControlState,
    CycleModel,
    Formulation,
    Method,
    MissingHessian,
    Mode,
    TaskKind,
    TaskSpec,
    assemble_eom_level,
    assemble_task_level,
    critical_damping,
    damped_acc_assemble,
    hierarchical_hessian,
    newton_switch,
    p_vel_reference,
    pd_acc_reference,
    pd_vel_reference,
    psd_factor,
    rescale_to_optim,
)
from hiernewton.hlsp import Hierarchy, HlspSolver, Relation, solve

DT = 0.005


def free_link(mass=1.0):
    """One unit link without gravity: a 1-D rotational mass with M = m."""
    return rm.PlanarChain([1.0], [mass], gravity=[0.0, 0.0])


def joint_tasks(kp=1.0, kv=2.0, target=0.0, controller="pd"):
    return [TaskSpec(TaskKind.EOM, 0),
            TaskSpec(TaskKind.JOINT_TARGET, 1, kp=kp, kv=kv, target=[target],
                     controller=controller, augmentable=True),
            TaskSpec(TaskKind.TORQUE_REG, 2)]


def run_controller(ctl, q, qd, steps):
    solver = HlspSolver()
    n = ctl.chain.n
    qs, qds = [np.array(q, float)], [np.array(qd, float)]
    for _ in range(steps):
        h, modes = ctl.build(qs[-1], qds[-1])
        sol = solver.solve(h)
        ctl.update(sol, modes)
        x = sol.x
        qd_next = x[:n] if ctl.formulation == Formulation.VEL else qds[-1] + DT * x[:n]
        qs.append(qs[-1] + DT * qds[-1])
        qds.append(qd_next.copy())
    return np.array(qs), np.array(qds)


# -- task specification ---------------------------------------------------------------

def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.TIP_POSITION, 1)
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.TIP_POSITION, 1, kp=-1.0, target=[0, 0])
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.TRUST_REGION, 1, rho=0.0)
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.TORQUE_LIMIT, 1)
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.COM_BOX, 1, bounds=(1.0, -1.0))
    with pytest.raises(ValueError):
        TaskSpec("NOT_A_TASK", 1)
    assert TaskSpec(TaskKind.TIP_POSITION, 1, kp=4.0, target=[0, 0]).kv == pytest.approx(4.0)


def test_control_state_defaults():
    st_ = ControlState()
    assert st_.dt == DT
    assert st_.nu == pytest.approx(1e-12 * DT ** 2)
    with pytest.raises(ValueError):
        ControlState(dt=0.0)


# -- references -----------------------------------------------------------------------

def test_pd_acc_reference():
    assert pd_acc_reference(0.0, 0.0, 1.0, 2.0) == 0.0
    assert pd_acc_reference(1.0, 0.0, 1.0, 2.0) == -1.0


def test_p_vel_reference():
    assert p_vel_reference(0.0, 3.0) == 0.0
    np.testing.assert_allclose(p_vel_reference([1.0, -2.0], 0.5), [-0.5, 1.0])


def test_pd_vel_reference_zero():
    np.testing.assert_array_equal(pd_vel_reference([0, 0], [0, 0], np.zeros((2, 2)), [0, 0], DT, 1, 2),
                                  [0, 0])


def test_critical_damping():
    assert critical_damping(1.0) == pytest.approx(2.0)
    assert critical_damping(1.0, 1.0, 1.0) == pytest.approx(2.0 * np.sqrt(2.0))


def test_rescale_to_optim():
    w, lam = rescale_to_optim([3.0], [2.0], 1.0)
    np.testing.assert_array_equal(w, [3.0])
    w, lam = rescale_to_optim([3.0], [2.0], 0.005)
    assert lam[0] == pytest.approx(0.01)


# -- curvature ------------------------------------------------------------------------

def test_hierarchical_hessian_zero_and_single_term():
    H = np.random.default_rng(0).standard_normal((2, 3, 3))
    H = H + H.transpose(0, 2, 1)
    np.testing.assert_array_equal(hierarchical_hessian([np.zeros(2)], [H]), np.zeros((3, 3)))
    np.testing.assert_allclose(hierarchical_hessian([np.array([0.0, 2.5])], [H]), 2.5 * H[1])
    np.testing.assert_array_equal(hierarchical_hessian([np.ones(4)], [None], n=3), np.zeros((3, 3)))
    with pytest.raises(MissingHessian):
        hierarchical_hessian([np.ones(3)], [H])


def test_hierarchical_hessian_is_linear_in_the_scale():
    H = np.random.default_rng(1).standard_normal((2, 2, 2))
    lam = np.array([0.3, -1.2])
    _, lam_optim = rescale_to_optim(0.0, lam, DT)
    np.testing.assert_allclose(hierarchical_hessian([lam_optim], [H]),
                               DT * hierarchical_hessian([lam], [H]))


def test_psd_factor_examples():
    R = psd_factor(np.eye(3))
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-15)
    R = psd_factor(np.diag([4.0, -1.0]), 1e-8)
    np.testing.assert_allclose(R.T @ R, np.diag([4.0, 1e-8]), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_psd_factor_clamps_eigenvalues(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    H = A + A.T
    R = psd_factor(H)
    assert R.shape == (n, n)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(R.T @ R)),
                               np.sort(np.maximum(np.linalg.eigvalsh(H), EIGEN_FLOOR)), atol=1e-10)
    # already positive semidefinite input comes back unchanged
    P = A @ A.T + EIGEN_FLOOR * np.eye(n)
    Rp = psd_factor(P)
    np.testing.assert_allclose(Rp.T @ Rp, P, atol=1e-10)
    assert np.abs(Rp.T @ Rp - P).max() <= EIGEN_FLOOR * n


def test_newton_switch():
    nu = 1e-12 * DT ** 2
    assert newton_switch(0.0, nu) == Mode.GN
    assert newton_switch(10 * nu, nu) == Mode.NEWTON
    assert all(newton_switch(nu, nu) == Mode.NEWTON for _ in range(3))


def test_example3_level_hessian_matches_lagrangian():
    """Multipliers from a live run; the Lagrangian gradient sums lam_optim' J over curved rows."""
    sc = sim.example3(Method.NEWTON_AH)
    s = sim.Simulator(sc)
    for _ in range(300):
        s.step()
    ctl = s.controller
    tip_level = next(i for i, lay in enumerate(ctl._layout)
                     if any(t.kind == TaskKind.TIP_POSITION for t in lay.tasks))
    lam_solver = ctl.state.multipliers[tip_level]
    terms = []
    for i in range(tip_level + 1):
        lay = ctl._layout[i]
        for t, sl in zip(lay.tasks, lay.task_rows):
            if t.kind == TaskKind.TIP_POSITION:
                terms.append(-DT * np.asarray(lam_solver[i])[sl])
    assert terms and np.abs(terms[0]).max() > 0

    def gradient(x):
        return sum(rm.task_jacobian(sc.chain, x).T @ lam for lam in terms)

    q = s.state.q
    H_hat = ctl.level_hessian(tip_level, CycleModel(sc.chain, q, s.state.qd))
    H_fd = fd_lagrangian_hessian(gradient, q)
    assert np.abs(H_hat - H_fd).max() < 1e-4
    assert np.abs(H_hat).max() > 1e-6


# -- level assembly ----------------------------------------------------------------------

def model2(q=(0.3, -0.4), qd=(0.2, 0.1)):
    return CycleModel(rm.PlanarChain.uniform(2), np.array(q), np.array(qd))


def test_gn_and_newton_level_shapes():
    task = TaskSpec(TaskKind.TIP_POSITION, 1, target=[1.0, 1.0])
    m = model2()
    assert assemble_task_level(task, m, DT).m == 2
    R = np.array([[2.0, 0.5], [0.0, 1.0]])
    lvl = assemble_task_level(task, m, DT, mode=Mode.NEWTON, R=R)
    assert lvl.m == 4
    np.testing.assert_array_equal(lvl.A[2:, :2], R)
    np.testing.assert_array_equal(lvl.A[2:, 2:], 0.0)
    np.testing.assert_array_equal(lvl.b[2:], 0.0)
    with pytest.raises(ValueError):
        assemble_task_level(task, m, DT, mode=Mode.NEWTON)


def test_task_rows_reference_sign():
    """Rows read J qdot_next + edot_ctrl, with edot_ctrl from the velocity PD law."""
    task = TaskSpec(TaskKind.TIP_POSITION, 1, target=[1.0, 1.0], kp=2.0, kv=3.0)
    m = model2()
    lvl = assemble_task_level(task, m, DT)
    e = task.target - m.f
    ref = pd_vel_reference(e, -m.J @ m.qdot, m.Jdot, m.qdot, DT, 2.0, 3.0)
    np.testing.assert_allclose(lvl.A[:, :2], m.J)
    np.testing.assert_allclose(lvl.b, ref)


def test_trust_region_rows():
    lvl = assemble_task_level(TaskSpec(TaskKind.TRUST_REGION, 1, rho=0.1), model2(), DT)
    assert lvl.m == 4
    np.testing.assert_array_equal(lvl.relations, [Relation.UPPER] * 2 + [Relation.LOWER] * 2)
    # x = (0.1, -0.1) sits on the box
    r = lvl.residual(np.array([0.1, -0.1, 0.0, 0.0]))
    assert r[0] == pytest.approx(0.0) and r[3] == pytest.approx(0.0)


def test_torque_limit_and_com_box_rows():
    m = model2()
    lvl = assemble_task_level(TaskSpec(TaskKind.TORQUE_LIMIT, 1, limit=5.0, joints=(1,)), m, DT)
    assert lvl.m == 2 and lvl.A[0, 3] == 1.0 and lvl.b[0] == pytest.approx(-DT * 5.0)
    box = assemble_task_level(TaskSpec(TaskKind.COM_BOX, 1, bounds=(-0.1, 0.2)), m, DT)
    np.testing.assert_array_equal(box.relations, [Relation.UPPER, Relation.LOWER])
    np.testing.assert_allclose(box.A[0, :2], m.Jcom[0])


def test_eom_rows_at_rest_without_forces():
    chain = rm.PlanarChain.uniform(2, gravity=[0.0, 0.0])
    m = CycleModel(chain, np.array([0.3, 0.2]), np.zeros(2))
    lvl = assemble_eom_level(m, DT)
    np.testing.assert_allclose(lvl.A, np.hstack([m.M, -np.eye(2)]))
    np.testing.assert_allclose(lvl.b, 0.0, atol=1e-15)
    assert (lvl.relations == Relation.EQUAL).all()


def test_eom_rows_give_inverse_dynamics():
    m = model2()
    lvl = assemble_eom_level(m, DT)
    qd_next = np.array([0.5, -0.3])
    # with qdot_next fixed the rows determine dt * tau
    dt_tau = m.M @ (qd_next - m.qdot) + DT * m.N
    np.testing.assert_allclose(lvl.residual(np.concatenate([qd_next, dt_tau])), 0.0, atol=1e-14)


def test_example1_one_step_matches_forward_dynamics():
    for f in Formulation:
        sc = sim.example1(f)
        _, row = sim.step(sc)
        qdd = rm.forward_dynamics(sc.chain, sc.q0, sc.qd0)
        np.testing.assert_allclose(row[3], qdd, atol=1e-9)


def test_damped_acc_rows():
    task = TaskSpec(TaskKind.TIP_POSITION, 1, target=[1.0, 1.0])
    m = model2()
    lvl0 = damped_acc_assemble(task, m, 0.0)
    e = task.target - m.f
    np.testing.assert_allclose(lvl0.A[:2, :2], m.J)
    np.testing.assert_allclose(lvl0.b[:2], m.Jdot @ m.qdot + pd_acc_reference(e, -m.J @ m.qdot, 1, 2))
    np.testing.assert_array_equal(lvl0.A[2:], 0.0)
    lvl = damped_acc_assemble(task, m, 0.1)
    np.testing.assert_allclose(lvl.A[2:, :2], 0.1 * np.eye(2))


def damped_loop(mu, kv, steps):
    """Closed loop of the damped acceleration level on a 1-D rotational mass."""
    chain = free_link()
    task = TaskSpec(TaskKind.JOINT_TARGET, 1, kp=1.0, kv=kv, target=[0.0])
    q, qd, qs = np.array([1.0]), np.array([0.0]), [1.0]
    for _ in range(steps):
        lvl = damped_acc_assemble(task, CycleModel(chain, q, qd), mu)
        qdd = solve(Hierarchy([lvl], 2)).x[:1]
        q, qd = q + DT * qd, qd + DT * qdd
        qs.append(q[0])
    return np.array(qs)


def test_damped_acc_loop_matches_scalar_recurrence():
    for mu, kv in ((0.0, 2.0), (1.0, 2.0), (1.0, critical_damping(1.0, 1.0, 1.0))):
        _, q_ref, _ = sim.simulate_point_mass("ACC_DAMPED", mu, 1.0, kv, duration=5.0)
        np.testing.assert_allclose(damped_loop(mu, kv, 1000), q_ref, atol=1e-12)


def test_damping_spoils_critical_damping():
    # underdamped by the factor 1/(1+mu^2) in the stiffness and damping alike
    q = damped_loop(0.1, 2.0, 12000)
    assert q.min() < 0.0
    q_crit = damped_loop(0.1, critical_damping(1.0, 1.0, 0.1), 12000)
    assert q_crit.min() > -1e-12


# -- closed loops through the controller --------------------------------------------------

def test_velocity_pd_emulates_acceleration_pd():
    """Same gains: the VEL closed loop equals the explicit Euler step of the ACC one."""
    chain = free_link()
    vel = run_controller(Controller(chain, joint_tasks(), DT, Formulation.VEL), [1.0], [0.0], 400)
    acc = run_controller(Controller(chain, joint_tasks(), DT, Formulation.ACC), [1.0], [0.0], 400)
    np.testing.assert_allclose(vel[0], acc[0], atol=1e-12)
    _, q_ref, qd_ref = sim.simulate_point_mass("ACC_DAMPED", 0.0, duration=2.0)
    np.testing.assert_allclose(vel[0][:, 0], q_ref, atol=1e-12)
    np.testing.assert_allclose(vel[1][:, 0], qd_ref, atol=1e-12)


@pytest.mark.parametrize("mu", [0.5, 1.0])
def test_augmentation_scales_next_velocity(mu):
    chain = free_link()
    q, qd = [0.7], [-0.2]
    plain = run_controller(Controller(chain, joint_tasks(), DT), q, qd, 1)[1][1]
    damped = run_controller(Controller(chain, joint_tasks(), DT, method=Method.LM, mu=mu),
                            q, qd, 1)[1][1]
    np.testing.assert_allclose(damped, plain / (1 + mu ** 2), atol=1e-14)
    _, q_ref, qd_ref = sim.simulate_point_mass("VEL_PD", mu, q0=0.7, qd0=-0.2, duration=DT)
    np.testing.assert_allclose(damped, qd_ref[1:], atol=1e-14)


def test_vel_and_acc_cycles_agree_on_a_full_rank_task():
    rng = np.random.default_rng(5)
    chain = rm.PlanarChain.uniform(2)
    tasks = [TaskSpec(TaskKind.EOM, 0),
             TaskSpec(TaskKind.TIP_POSITION, 1, target=[0.5, 1.2], kp=3.0, kv=2.0),
             TaskSpec(TaskKind.TORQUE_REG, 2)]
    for _ in range(20):
        q, qd = rng.uniform(-2, 2, 2), rng.uniform(-1, 1, 2)
        if abs(np.linalg.det(rm.task_jacobian(chain, q))) < 0.1:
            continue
        v = solve(Controller(chain, tasks, DT, Formulation.VEL).build(q, qd)[0]).x
        a = solve(Controller(chain, tasks, DT, Formulation.ACC).build(q, qd)[0]).x
        np.testing.assert_allclose(v[:2], qd + DT * a[:2], atol=1e-10)
        np.testing.assert_allclose(v[2:] / DT, a[2:], atol=1e-8)


def test_p_control_converges_exponentially():
    chain = rm.PlanarChain([1.0], [1.0], gravity=[0.0, 0.0])
    q0, kp = 0.0, 1.0
    # target a little further along the circle, so the error is nearly tangential
    target = rm.forward_kinematics(chain, [0.05])
    tasks = [TaskSpec(TaskKind.EOM, 0),
             TaskSpec(TaskKind.TIP_POSITION, 1, kp=kp, target=target, controller="p"),
             TaskSpec(TaskKind.TORQUE_REG, 2)]
    qs, _ = run_controller(Controller(chain, tasks, DT), [q0], [0.0], 600)
    err = np.array([np.linalg.norm(target - rm.forward_kinematics(chain, q)) for q in qs])
    t = DT * np.arange(len(err))
    ratio = err[1:] / (err[0] * np.exp(-kp * t[1:]))
    assert np.abs(ratio - 1).max() < 0.05


def test_p_control_needs_velocity_formulation():
    tasks = [TaskSpec(TaskKind.EOM, 0),
             TaskSpec(TaskKind.TIP_POSITION, 1, target=[1, 1], controller="p")]
    ctl = Controller(rm.PlanarChain.uniform(2), tasks, DT, Formulation.ACC)
    with pytest.raises(ValueError):
        ctl.build(np.zeros(2), np.zeros(2))


def test_newton_with_zero_multipliers_is_gauss_newton():
    """Zero curvature: the augmentation is sqrt(eps) I and barely moves the solution."""
    chain = rm.PlanarChain.uniform(2)
    tasks = [TaskSpec(TaskKind.EOM, 0),
             TaskSpec(TaskKind.TIP_POSITION, 1, target=[3.0, 0.5], augmentable=True),
             TaskSpec(TaskKind.TORQUE_REG, 2)]
    q, qd = np.array([0.4, 0.9]), np.array([0.1, -0.2])
    gn = Controller(chain, tasks, DT)
    x_gn = solve(gn.build(q, qd)[0]).x
    nt = Controller(chain, tasks, DT, method=Method.NEWTON_AH, gn_warmup=0)
    nt.state.residuals[1] = 1.0  # force the switch
    h, modes = nt.build(q, qd)
    assert modes[1] == Mode.NEWTON
    assert h.levels[1].m == 4
    np.testing.assert_allclose(h.levels[1].A[2:, :2].T @ h.levels[1].A[2:, :2],
                               EIGEN_FLOOR * np.eye(2), atol=1e-15)
    assert np.abs(solve(h).x - x_gn).max() < 1e-6


def test_controller_rejects_newton_in_acceleration_form():
    with pytest.raises(ValueError):
        Controller(rm.PlanarChain.uniform(2), joint_tasks(), DT, Formulation.ACC, Method.NEWTON_AH)
    with pytest.raises(ValueError):
        Controller(rm.PlanarChain.uniform(2), [], DT)


def test_first_cycles_are_gauss_newton():
    sc = sim.example3(Method.NEWTON_AH)
    s = sim.Simulator(sc)
    modes = [s.step()[0][6] for _ in range(3)]
    assert modes[0] == [0] * 5 and modes[1] == [0] * 5


def test_example3_switches_to_newton_example2_gauss_newton_stays_gn():
    s3 = sim.Simulator(sim.example3(Method.NEWTON_AH).with_(duration=3.0))
    modes3 = np.array(s3.run().mode)
    assert modes3[:, 2].max() == 1
    modes2 = np.array(sim.run_scenario(sim.example2().with_(duration=1.0)).mode)
    assert modes2.max() == 0


def test_newton_removes_chatter_at_an_out_of_reach_target():
    """Kinematic 2-link arm stretched towards an unreachable point.

    Near full stretch the tip Jacobian loses rank; Gauss-Newton then bangs the
    joint velocities between the trust-region faces while the hierarchical
    Hessian keeps the step bounded and smooth. Both reach the same error.
    """
    results = {}
    for method in (Method.GN, Method.NEWTON_AH):
        tasks = [TaskSpec(TaskKind.TRUST_REGION, 0, rho=0.5),
                 TaskSpec(TaskKind.TIP_POSITION, 1, kp=10.0, target=[2.5, 0.3],
                          augmentable=True, controller="p"),
                 TaskSpec(TaskKind.VELOCITY_REG, 2),
                 TaskSpec(TaskKind.TORQUE_REG, 3)]
        sc = sim.Scenario(rm.PlanarChain.uniform(2), tasks, q0=[0.3, 0.8], duration=8.0,
                          method=method)
        log = sim.run_scenario(sc)
        results[method] = (sim.chatter_count(log.array("qd"), joints=(0, 1), threshold=0.25),
                           sim.tip_error(sc, log)[-1], log.array("mode")[:, 1])
    gn, newton = results[Method.GN], results[Method.NEWTON_AH]
    assert gn[0] > 50
    assert newton[0] < 5
    assert newton[2].sum() > 0 and gn[2].sum() == 0
    assert newton[1] <= gn[1] + 1e-4
