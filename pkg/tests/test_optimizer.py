import math

import numpy as np
import pytest

from conftest import rel_err
from flatplan import VehicleGeometry
from flatplan.penalties import ConstraintConfig
from flatplan.optimizer import (
    DecisionLayout,
    PlanContext,
    SolverConfig,
    build_trajectory,
    inverse_time_map,
    objective_and_gradient,
    shift_velocity,
    solve,
    time_map,
)


def geom():
    return VehicleGeometry(
        wheelbase=2.0, body_vertices=[[2.45, 0.85], [2.45, -0.85], [-0.45, -0.85], [-0.45, 0.85]]
    )


def wide_corridor(n_points, half=60.0):
    a = np.tile(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), (n_points, 1, 1))
    b = np.tile(np.full(4, half), (n_points, 1))
    return a, b


class TestTimeMap:
    def test_branch_point(self):
        t, dt = time_map(0.0)
        assert t == pytest.approx(1.0)
        assert dt == pytest.approx(1.0)

    def test_spec_values(self):
        assert time_map(1.0)[0] == pytest.approx(2.5)
        assert time_map(-2.0)[0] == pytest.approx(0.2)

    def test_positive_and_c1_everywhere(self):
        taus = np.linspace(-1e6, 1e6, 100001)
        t, dt = time_map(taus)
        assert np.all(t > 0)
        assert np.all(np.isfinite(dt))
        # both branch formulas agree at the joint to machine precision
        up = (0.5 * 0.0**2 + 0.0 + 1.0, 0.0 + 1.0)
        dn = (2.0 / 2.0, 4.0 * 1.0 / 4.0)
        assert abs(up[0] - dn[0]) < 1e-12
        assert abs(up[1] - dn[1]) < 1e-12

    def test_round_trip(self, rng):
        taus = np.concatenate([rng.normal(size=200) * 5, [-1e3, 1e3, 0.0]])
        t, _ = time_map(taus)
        back = inverse_time_map(t)
        assert np.abs(back - taus).max() < 1e-9

    def test_derivative_fd(self, rng):
        for tau in rng.normal(size=30) * 3:
            _, dt = time_map(float(tau))
            h = 1e-7
            fd = (time_map(tau + h)[0] - time_map(tau - h)[0]) / (2 * h)
            assert rel_err(dt, fd) < 1e-6


class TestShiftVelocity:
    def test_values(self):
        v, _ = shift_velocity(0.0, 0.05)
        assert np.allclose(v, [0.05, 0.0])
        v, _ = shift_velocity(math.pi / 2, 0.05)
        assert np.allclose(v, [0.0, 0.05], atol=1e-12)

    def test_magnitude_and_derivative(self, rng):
        for theta in rng.uniform(-np.pi, np.pi, size=50):
            v, dv = shift_velocity(float(theta), 0.05)
            assert np.linalg.norm(v) == pytest.approx(0.05)
            h = 1e-7
            fd = (shift_velocity(theta + h, 0.05)[0] - shift_velocity(theta - h, 0.05)[0]) / (2 * h)
            assert np.abs(dv - fd).max() < 1e-6


def single_segment_ctx(pieces=3, obstacles=(), corridor_half=60.0, cfg=None):
    layout = DecisionLayout(pieces=[pieces], etas=[1])
    cfg = cfg or ConstraintConfig(v_m=5.0, a_tm=3.0, a_nm=3.0, kappa_m=0.5, d_m=0.3, n_lambda=8)
    n_pts = pieces * (cfg.n_lambda + 1)
    start = np.vstack([[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]])
    goal = np.vstack([[8.0, 1.0], [0.5, 0.0], [0.0, 0.0]])
    return PlanContext(
        layout=layout,
        start_state=start,
        goal_state=goal,
        corridor=wide_corridor(n_pts, corridor_half),
        obstacles=list(obstacles),
        constraints=cfg,
        geom=geom(),
        solver=SolverConfig(),
    )


def two_segment_ctx(cfg=None, obstacles=()):
    layout = DecisionLayout(pieces=[3, 2], etas=[1, -1])
    cfg = cfg or ConstraintConfig(v_m=5.0, a_tm=3.0, a_nm=3.0, kappa_m=0.5, d_m=0.3, n_lambda=8)
    n_pts = (3 + 2) * (cfg.n_lambda + 1)
    start = np.vstack([[0.0, 0.0], [0.05, 0.0], [0.0, 0.0]])
    goal = np.vstack([[4.0, -2.0], [-0.05, 0.0], [0.0, 0.0]])
    return PlanContext(
        layout=layout,
        start_state=start,
        goal_state=goal,
        corridor=wide_corridor(n_pts),
        obstacles=list(obstacles),
        constraints=cfg,
        geom=geom(),
        solver=SolverConfig(),
    )


def warm_start_single(ctx, rng=None):
    pieces = ctx.layout.pieces[0]
    q = np.linspace(ctx.start_state[0], ctx.goal_state[0], pieces + 1)[1:-1]
    if rng is not None:
        q = q + rng.normal(size=q.shape) * 0.3
    tau = inverse_time_map(np.array([6.0]))
    return ctx.layout.pack([q], tau, np.empty((0, 2)), np.empty(0))


def warm_start_two(ctx, rng):
    q1 = np.linspace([0, 0], [6.0, 1.0], 4)[1:-1] + rng.normal(size=(2, 2)) * 0.2
    q2 = np.linspace([6.0, 1.0], [4.0, -2.0], 3)[1:-1] + rng.normal(size=(1, 2)) * 0.2
    taus = inverse_time_map(np.array([5.0, 4.0]))
    pg = np.array([[6.0, 1.0]]) + rng.normal(size=(1, 2)) * 0.1
    th = np.array([0.2 + rng.normal() * 0.1])
    return ctx.layout.pack([q1, q2], taus, pg, th)


class TestObjective:
    def test_layout_dimension(self):
        layout = DecisionLayout(pieces=[3, 2], etas=[1, -1])
        # 2*(2+1) waypoints + 2 taus + 2 shift position + 1 shift angle
        assert layout.dim == 2 * 3 + 2 + 2 + 1

    def test_zero_penalty_additivity(self):
        from flatplan.poly_traj import control_effort

        ctx = single_segment_ctx()
        x0 = warm_start_single(ctx)
        value, _, traj, report = objective_and_gradient(x0, ctx, want_report=True)
        assert report.total == 0.0
        effort = sum(control_effort(s, np.ones(2))[0] for s in traj.segments)
        assert value == pytest.approx(effort + ctx.constraints.w_t * traj.total_duration, rel=1e-12)

    def test_boundary_exact(self, rng):
        ctx = two_segment_ctx()
        x = warm_start_two(ctx, rng)
        traj = build_trajectory(x, ctx)
        assert np.allclose(traj.eval(0.0), ctx.start_state[0], atol=1e-9)
        assert np.allclose(traj.eval(traj.total_duration), ctx.goal_state[0], atol=1e-8)
        assert np.allclose(traj.eval(0.0, 1), ctx.start_state[1], atol=1e-9)
        # gear shift: reversed velocity of magnitude shift_speed, zero accel
        t_shift = traj.segments[0].duration
        v_end = traj.segments[0].eval_local(t_shift, 1)
        v_next = traj.segments[1].eval_local(0.0, 1)
        assert np.linalg.norm(v_end) == pytest.approx(0.05, abs=1e-9)
        assert np.allclose(v_end, -v_next, atol=1e-9)
        a_end = traj.segments[0].eval_local(t_shift, 2)
        assert np.abs(a_end).max() < 1e-8

    def test_gradient_fd_single_segment(self, rng):
        from flatplan.penalties import RELAX_MARGIN

        ctx = single_segment_ctx(cfg=ConstraintConfig(v_m=1.2, a_tm=1.0, a_nm=0.8, kappa_m=0.4, n_lambda=8))
        checked = 0
        for _ in range(20):
            x0 = warm_start_single(ctx, rng)
            value, grad = objective_and_gradient(x0, ctx)
            h = 1e-6
            fd = np.zeros_like(x0)
            for k in range(x0.size):
                xp = x0.copy()
                xp[k] += h
                xm = x0.copy()
                xm[k] -= h
                fd[k] = (objective_and_gradient(xp, ctx)[0] - objective_and_gradient(xm, ctx)[0]) / (2 * h)
            if rel_err(grad, fd) < 1e-5:
                checked += 1
            if checked >= 3:
                break
        assert checked >= 3

    def test_gradient_fd_two_segments_with_obstacle(self, rng):
        from flatplan.penalties import DynamicObstacle, PoseTrajectory

        obs = DynamicObstacle(
            body_vertices=np.array([[-0.7, -0.7], [-0.7, 0.7], [0.7, 0.7], [0.7, -0.7]]),
            pose_traj=PoseTrajectory(
                durations=[60.0], coeffs=[np.array([[5.0, 2.0, 0.2], [-0.3, -0.15, 0.05]])]
            ),
        )
        ctx = two_segment_ctx(
            cfg=ConstraintConfig(v_m=1.5, a_tm=1.2, a_nm=1.0, kappa_m=0.6, d_m=0.4, n_lambda=6),
            obstacles=[obs],
        )
        checked = 0
        for _ in range(30):
            x0 = warm_start_two(ctx, rng)
            value, grad = objective_and_gradient(x0, ctx)
            h = 1e-6
            fd = np.zeros_like(x0)
            for k in range(x0.size):
                xp = x0.copy()
                xp[k] += h
                xm = x0.copy()
                xm[k] -= h
                fd[k] = (objective_and_gradient(xp, ctx)[0] - objective_and_gradient(xm, ctx)[0]) / (2 * h)
            if rel_err(grad, fd) < 1e-5:
                checked += 1
            if checked >= 3:
                break
        assert checked >= 3


class TestSolve:
    def test_convex_toy_converges(self):
        ctx = single_segment_ctx()
        x0 = warm_start_single(ctx)
        result = solve(x0, ctx)
        assert result.grad_norm <= 1e-4
        assert result.iterations <= 200
        assert result.status == "gradient"

    def test_already_optimal_short_circuit(self):
        from flatplan import lbfgs

        ctx = single_segment_ctx()
        x0 = warm_start_single(ctx)
        converged = lbfgs.minimize(lambda x: objective_and_gradient(x, ctx), x0, tolerance=1e-4)
        again = solve(converged.x, ctx)
        assert again.iterations <= 1
        assert again.objective == pytest.approx(converged.fun, abs=1e-9)

    def test_monotone_descent(self, rng):
        ctx = single_segment_ctx(
            cfg=ConstraintConfig(v_m=1.4, a_tm=1.2, a_nm=1.0, kappa_m=0.5, n_lambda=8)
        )
        x0 = warm_start_single(ctx, rng)
        result = solve(x0, ctx)
        objectives = [t[0] for t in result.trace]
        assert all(b <= a + 1e-12 for a, b in zip(objectives, objectives[1:]))


