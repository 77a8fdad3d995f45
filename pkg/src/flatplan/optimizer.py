"""Decision-variable packing, objective assembly and the planning pipeline.

The optimizer eliminates every equality constraint structurally: each
segment's coefficients come from the banded solve, gear shifts are
parameterized by position and velocity angle (speed pinned to a small
constant with reversed sign across the shift), and durations live behind
a smooth bijection from unconstrained virtual times. What remains is an
unconstrained problem solved by limited-memory quasi-Newton descent.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lbfgs
from .corridor import Corridor, OccupancyGrid, build_corridor
from .errors import LineSearchFailure, NoPathFound, SeedInCollision
from .flat_model import VehicleGeometry
from .frontend import FrontendConfig, InitialPlan, constraint_seed_poses, hybrid_astar, segment_plan
from .penalties import ConstraintConfig, PenaltyReport, penalty_sum, stack_corridor
from .poly_traj import BoundaryState, FlatTrajectory, Segment, control_effort, minco_backprop, minco_solve

log = logging.getLogger("flatplan")


@dataclass
class SolverConfig:
    tolerance: float = 1e-4  # on the gradient max-norm
    memory: int = 8
    max_iterations: int = 3000
    c1: float = 1e-4
    c2: float = 0.9
    shift_speed: float = 0.05  # velocity magnitude pinned at gear shifts
    # relative objective-decrease floor; near double-precision resolution so
    # slow tail convergence toward the gradient test is not cut short
    stagnation_tol: float = 2e-14

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.shift_speed <= 0:
            raise ValueError("shift_speed must be positive")


def time_map(tau):
    """Positive duration from an unconstrained virtual time, with slope."""
    tau = np.asarray(tau, dtype=float)
    pos = tau > 0
    q = tau**2 - 2.0 * tau + 2.0
    t = np.where(pos, 0.5 * tau**2 + tau + 1.0, 2.0 / q)
    dt = np.where(pos, tau + 1.0, 4.0 * (1.0 - tau) / q**2)
    if tau.ndim == 0:
        return float(t), float(dt)
    return t, dt


def inverse_time_map(duration):
    """Virtual time whose mapped duration equals the argument."""
    d = np.asarray(duration, dtype=float)
    if np.any(d <= 0):
        raise ValueError("durations must be positive")
    big = d > 1.0
    tau = np.where(big, np.sqrt(np.maximum(2.0 * d - 1.0, 0.0)) - 1.0, 1.0 - np.sqrt(np.maximum(2.0 / np.maximum(d, 1e-300) - 1.0, 0.0)))
    if d.ndim == 0:
        return float(tau)
    return tau


def shift_velocity(theta: float, v_bar: float):
    """Shift velocity vector in polar form and its angle derivative."""
    v = np.array([v_bar * math.cos(theta), v_bar * math.sin(theta)])
    dv = np.array([-v_bar * math.sin(theta), v_bar * math.cos(theta)])
    return v, dv


@dataclass
class DecisionLayout:
    """Index bookkeeping for the packed decision vector."""

    pieces: list  # M_i per segment
    etas: list

    def __post_init__(self):
        self.n_segments = len(self.pieces)
        self.q_slices = []
        offset = 0
        for m in self.pieces:
            size = 2 * (m - 1)
            self.q_slices.append(slice(offset, offset + size))
            offset += size
        self.tau_slice = slice(offset, offset + self.n_segments)
        offset += self.n_segments
        n_shift = self.n_segments - 1
        self.pg_slice = slice(offset, offset + 2 * n_shift)
        offset += 2 * n_shift
        self.theta_slice = slice(offset, offset + n_shift)
        offset += n_shift
        self.dim = offset

    def pack(self, waypoints, taus, shift_positions, shift_angles) -> np.ndarray:
        x = np.empty(self.dim)
        for sl, q in zip(self.q_slices, waypoints):
            x[sl] = np.asarray(q, float).reshape(-1)
        x[self.tau_slice] = taus
        x[self.pg_slice] = np.asarray(shift_positions, float).reshape(-1)
        x[self.theta_slice] = shift_angles
        return x

    def unpack(self, x: np.ndarray):
        waypoints = [x[sl].reshape(-1, 2) for sl in self.q_slices]
        taus = x[self.tau_slice]
        shift_positions = x[self.pg_slice].reshape(-1, 2)
        shift_angles = x[self.theta_slice]
        return waypoints, taus, shift_positions, shift_angles


@dataclass
class PlanContext:
    """Everything the objective needs besides the decision vector."""

    layout: DecisionLayout
    start_state: np.ndarray  # (3, 2) position/velocity/acceleration rows
    goal_state: np.ndarray
    corridor: object  # pre-stacked (normals, offsets) or None
    obstacles: list
    constraints: ConstraintConfig
    geom: VehicleGeometry
    solver: SolverConfig
    effort_weight: np.ndarray = field(default_factory=lambda: np.ones(2))


@dataclass
class PlanResult:
    trajectory: FlatTrajectory
    objective: float
    iterations: int
    wall_time: float
    grad_norm: float
    report: PenaltyReport
    status: str
    trace: list
    frontend_poses: np.ndarray | None = None
    frontend_dirs: np.ndarray | None = None
    corridor: Corridor | None = None
    initial_plan: InitialPlan | None = None
    timings: dict = field(default_factory=dict)


def build_trajectory(x: np.ndarray, ctx: PlanContext) -> FlatTrajectory:
    """Solve all segment coefficient systems for a decision vector."""
    waypoints, taus, pgs, thetas = ctx.layout.unpack(x)
    durations, _ = time_map(taus)
    v_bar = ctx.solver.shift_speed
    segments = []
    n = ctx.layout.n_segments
    for i in range(n):
        if i == 0:
            head = BoundaryState(ctx.start_state[0], ctx.start_state[1], ctx.start_state[2])
        else:
            v, _ = shift_velocity(float(thetas[i - 1]), v_bar)
            head = BoundaryState(pgs[i - 1], -v, np.zeros(2))
        if i == n - 1:
            tail = BoundaryState(ctx.goal_state[0], ctx.goal_state[1], ctx.goal_state[2])
        else:
            v, _ = shift_velocity(float(thetas[i]), v_bar)
            tail = BoundaryState(pgs[i], v, np.zeros(2))
        segments.append(minco_solve(head, tail, waypoints[i], float(durations[i]), eta=ctx.layout.etas[i]))
    return FlatTrajectory(segments)


def objective_and_gradient(x: np.ndarray, ctx: PlanContext, want_report: bool = False):
    """Total objective (control effort + time + penalties) and its gradient."""
    waypoints, taus, pgs, thetas = ctx.layout.unpack(x)
    durations, d_durations = time_map(taus)
    traj = build_trajectory(x, ctx)
    n = ctx.layout.n_segments
    w_t = ctx.constraints.w_t

    value = 0.0
    grad_c = []
    grad_t_direct = np.zeros(n)
    for i, seg in enumerate(traj.segments):
        cost, gc, gt = control_effort(seg, ctx.effort_weight)
        value += cost
        grad_c.append(gc)
        grad_t_direct[i] = gt + w_t
    value += w_t * float(np.sum(durations))

    pen, pen_gc, pen_gt, report = penalty_sum(traj, ctx.corridor, ctx.obstacles, ctx.constraints, ctx.geom)
    value += pen
    grad_t_direct += pen_gt
    for i in range(n):
        grad_c[i] = grad_c[i] + pen_gc[i]

    grad = np.zeros(ctx.layout.dim)
    grad_pg = np.zeros((max(n - 1, 0), 2))
    grad_vg = np.zeros((max(n - 1, 0), 2))
    taus_grad = np.zeros(n)
    for i, seg in enumerate(traj.segments):
        gq, gt, ghead, gtail = minco_backprop(seg, grad_c[i], float(grad_t_direct[i]))
        grad[ctx.layout.q_slices[i]] = gq.reshape(-1)
        taus_grad[i] = gt * d_durations[i]
        if i > 0:
            grad_pg[i - 1] += ghead[0]
            grad_vg[i - 1] -= ghead[1]  # head velocity is -v_g
        if i < n - 1:
            grad_pg[i] += gtail[0]
            grad_vg[i] += gtail[1]
    grad[ctx.layout.tau_slice] = taus_grad
    if n > 1:
        grad[ctx.layout.pg_slice] = grad_pg.reshape(-1)
        v_bar = ctx.solver.shift_speed
        theta_grad = np.empty(n - 1)
        for i in range(n - 1):
            _, dv = shift_velocity(float(thetas[i]), v_bar)
            theta_grad[i] = float(dv @ grad_vg[i])
        grad[ctx.layout.theta_slice] = theta_grad

    if want_report:
        return value, grad, traj, report
    return value, grad


def solve(x0: np.ndarray, ctx: PlanContext) -> PlanResult:
    """Run the quasi-Newton descent from a packed warm start."""
    scfg = ctx.solver
    t0 = time.perf_counter()
    result = lbfgs.minimize(
        lambda x: objective_and_gradient(x, ctx),
        x0,
        tolerance=scfg.tolerance,
        memory=scfg.memory,
        max_iterations=scfg.max_iterations,
        c1=scfg.c1,
        c2=scfg.c2,
        stagnation_tol=scfg.stagnation_tol,
    )
    wall = time.perf_counter() - t0
    value, _, traj, report = objective_and_gradient(result.x, ctx, want_report=True)
    log.info(
        "solve finished: status=%s iterations=%d objective=%.6g grad=%.3g wall=%.3fs",
        result.status,
        result.iterations,
        value,
        float(np.abs(result.grad).max()),
        wall,
    )
    return PlanResult(
        trajectory=traj,
        objective=value,
        iterations=result.iterations,
        wall_time=wall,
        grad_norm=float(np.abs(result.grad).max()),
        report=report,
        status=result.status,
        trace=result.trace,
    )


def _boundary_rows(pose, speed, accel, eta, v_bar):
    x, y, theta = pose
    direction = np.array([math.cos(theta), math.sin(theta)])
    v_eff = speed if abs(speed) >= v_bar else eta * v_bar
    return np.vstack([[x, y], v_eff * direction, accel * direction])


def _attach_stage(exc, stage):
    exc.stage = stage
    return exc


def plan(scenario) -> PlanResult:
    """Full pipeline: search, corridor, warm start, optimize."""
    geom = scenario.geom
    grid = scenario.grid
    cfg_front = scenario.frontend
    cfg_con = scenario.constraints
    cfg_solver = scenario.solver
    timings = {}

    t0 = time.perf_counter()
    try:
        poses, dirs = hybrid_astar(
            grid, scenario.start_pose, scenario.goal_pose, geom, cfg_con.kappa_m, cfg_front
        )
    except NoPathFound as exc:
        raise _attach_stage(exc, "frontend")
    initial = segment_plan(poses, dirs, cfg_front)
    timings["frontend"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seeds_nested = constraint_seed_poses(initial, cfg_con.n_lambda + 1)
    seeds = [p for seg in seeds_nested for p in seg]
    try:
        corridor = build_corridor(
            grid,
            seeds,
            geom,
            max_extent=cfg_front.corridor_extent,
            long_extent=cfg_front.corridor_long_extent,
        )
    except SeedInCollision as exc:
        raise _attach_stage(exc, "corridor")
    timings["corridor"] = time.perf_counter() - t0

    layout = DecisionLayout(
        pieces=[seg.n_pieces for seg in initial.segments], etas=[seg.eta for seg in initial.segments]
    )
    v_bar = cfg_solver.shift_speed
    start_state = _boundary_rows(
        scenario.start_pose, scenario.start_speed, scenario.start_accel, initial.segments[0].eta, v_bar
    )
    goal_state = _boundary_rows(
        scenario.goal_pose, scenario.goal_speed, scenario.goal_accel, initial.segments[-1].eta, v_bar
    )
    ctx = PlanContext(
        layout=layout,
        start_state=start_state,
        goal_state=goal_state,
        corridor=stack_corridor(corridor),
        obstacles=scenario.dynamic_obstacles,
        constraints=cfg_con,
        geom=geom,
        solver=cfg_solver,
    )
    x0 = layout.pack(
        [seg.waypoints for seg in initial.segments],
        inverse_time_map(np.array([seg.duration for seg in initial.segments])),
        initial.shift_positions,
        initial.shift_angles,
    )

    t0 = time.perf_counter()
    try:
        result = solve(x0, ctx)
    except LineSearchFailure as exc:
        raise _attach_stage(exc, "solve")
    timings["solve"] = time.perf_counter() - t0

    result.frontend_poses = poses
    result.frontend_dirs = dirs
    result.corridor = corridor
    result.initial_plan = initial
    result.timings = timings
    return result
