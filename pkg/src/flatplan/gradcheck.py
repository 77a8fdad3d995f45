"""Randomized finite-difference audits of every analytic gradient.

Instances are drawn per constraint class (dynamic feasibility, corridor
containment, moving obstacles, the full objective, and multi-segment
objectives with a gear shift) and compared against central differences.
Objective-class instances whose hinge inputs fall inside the quartic
blend band are redrawn: the blend's third derivative is discontinuous
there and central differences lose their quadratic accuracy, so a check
inside the band would measure the probe, not the gradient.
"""

from __future__ import annotations

import numpy as np

from .flat_model import VehicleGeometry
from .optimizer import DecisionLayout, PlanContext, SolverConfig, build_trajectory, inverse_time_map, objective_and_gradient
from .penalties import (
    RELAX_MARGIN,
    ConstraintConfig,
    DynamicObstacle,
    PoseTrajectory,
    g_accel,
    g_corridor,
    g_curvature,
    g_dynamic,
    g_velocity,
)

FD_STEP = 1e-6
BAND = 20.0 * RELAX_MARGIN  # keep hinge inputs clear of the quartic blend

CLASS_NAMES = ("feasibility", "corridor", "dynamic", "objective", "gear_shift")


def _rel(a, f):
    a = np.asarray(a, float)
    f = np.asarray(f, float)
    return float(np.max(np.abs(a - f) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))))


def _central(fun, x, h=FD_STEP):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xp.flat[k] += h
        xm = x.copy()
        xm.flat[k] -= h
        g.flat[k] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _geom():
    return VehicleGeometry(
        wheelbase=2.0, body_vertices=[[2.45, 0.85], [2.45, -0.85], [-0.45, -0.85], [-0.45, 0.85]]
    )


def _wide_corridor(n_points, half):
    a = np.tile(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), (n_points, 1, 1))
    b = np.tile(np.full(4, half), (n_points, 1))
    return a, b


def _random_obstacle(rng, center, vel_scale=1.0):
    half = float(rng.uniform(0.5, 1.0))
    body = np.array([[-half, -half], [-half, half], [half, half], [half, -half]])
    vel = rng.normal(size=2) * vel_scale
    coeffs = np.array(
        [
            [center[0], center[1], float(rng.uniform(-np.pi, np.pi))],
            [vel[0], vel[1], float(rng.normal() * 0.2)],
        ]
    )
    return DynamicObstacle(body_vertices=body, pose_traj=PoseTrajectory([100.0], [coeffs]))


def check_feasibility(rng) -> float:
    s1 = rng.normal(size=2)
    s1 += np.sign(s1) * 0.4  # keep speed clear of the singular clamp
    s2 = rng.normal(size=2) * 2
    worst = 0.0

    _, grad = g_velocity(s1, 2.0)
    worst = max(worst, _rel(grad, _central(lambda v: g_velocity(v, 2.0)[0], s1)))

    _, _, dat1, dat2, dan1, dan2 = g_accel(s1, s2, 1.5, 1.0)
    worst = max(worst, _rel(dat1, _central(lambda v: g_accel(v, s2, 1.5, 1.0)[0], s1)))
    worst = max(worst, _rel(dat2, _central(lambda v: g_accel(s1, v, 1.5, 1.0)[0], s2)))
    worst = max(worst, _rel(dan1, _central(lambda v: g_accel(v, s2, 1.5, 1.0)[1], s1)))
    worst = max(worst, _rel(dan2, _central(lambda v: g_accel(s1, v, 1.5, 1.0)[1], s2)))

    _, dk1, dk2 = g_curvature(s1, s2, 0.5)
    worst = max(worst, _rel(dk1, _central(lambda v: g_curvature(v, s2, 0.5)[0], s1)))
    worst = max(worst, _rel(dk2, _central(lambda v: g_curvature(s1, v, 0.5)[0], s2)))
    return worst


def check_corridor(rng) -> float:
    geom = _geom()
    sigma = rng.normal(size=2) * 3
    s1 = rng.normal(size=2)
    s1 += np.sign(s1) * 0.4
    eta = int(rng.choice([-1, 1]))
    a = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    b = rng.uniform(2.0, 6.0, size=4)
    vals, gs, gd = g_corridor(sigma, s1, eta, a, b, geom)
    z = int(rng.integers(0, 4))
    e = int(rng.integers(0, geom.n_vertices))
    worst = _rel(gs[z, e], _central(lambda v: g_corridor(v, s1, eta, a, b, geom)[0][z, e], sigma))
    worst = max(worst, _rel(gd[z, e], _central(lambda v: g_corridor(sigma, v, eta, a, b, geom)[0][z, e], s1)))
    return worst


def check_dynamic(rng) -> float:
    geom = _geom()
    cfg = ConstraintConfig(d_m=0.5)
    sigma = rng.normal(size=2)
    s1 = rng.normal(size=2)
    s1 += np.sign(s1) * 0.5
    eta = int(rng.choice([-1, 1]))
    t0 = float(rng.uniform(0.5, 5.0))
    obs = _random_obstacle(rng, center=rng.normal(size=2) * 2 + np.array([5.0, 0.0]))
    val, gs, gd, gt = g_dynamic(sigma, s1, eta, t0, [obs], cfg, geom)[0]

    def value(sig, vel, t):
        return g_dynamic(sig, vel, eta, t, [obs], cfg, geom)[0][0]

    worst = _rel(gs, _central(lambda v: value(v, s1, t0), sigma))
    worst = max(worst, _rel(gd, _central(lambda v: value(sigma, v, t0), s1)))
    fd_t = (value(sigma, s1, t0 + FD_STEP) - value(sigma, s1, t0 - FD_STEP)) / (2 * FD_STEP)
    worst = max(worst, _rel(gt, fd_t))
    return worst


def _hinge_inputs_clear(traj, ctx) -> bool:
    """True when no raw constraint value sits inside the blend band."""
    from .penalties import penalty_sum

    cfg = ctx.constraints
    lam = cfg.n_lambda
    geom = ctx.geom
    offset = 0
    a_all, b_all = ctx.corridor
    for seg in traj.segments:
        p_count = seg.n_pieces * (lam + 1)
        tl = np.arange(lam + 1) * (seg.delta_t / lam)
        from .poly_traj import basis_stack

        states = [
            np.einsum("kc,mcd->mkd", basis_stack(tl, d), seg.coeffs).reshape(p_count, 2)
            for d in range(3)
        ]
        s0, s1, s2 = states
        n2 = np.einsum("pi,pi->p", s1, s1)
        if np.any(np.sqrt(n2) < 0.05):
            return False
        vals = [n2 - cfg.v_m**2]
        dot = np.einsum("pi,pi->p", s1, s2)
        cross = s1[:, 0] * s2[:, 1] - s1[:, 1] * s2[:, 0]
        vals.append(dot**2 / n2 - cfg.a_tm**2)
        vals.append(cross**2 / n2 - cfg.a_nm**2)
        vals.append((cross / n2**1.5) ** 2 - cfg.kappa_m**2)
        rot = np.empty((p_count, 2, 2))
        rot[:, 0, 0] = s1[:, 0]
        rot[:, 1, 0] = s1[:, 1]
        rot[:, 0, 1] = -s1[:, 1]
        rot[:, 1, 1] = s1[:, 0]
        rot = seg.eta * rot / np.sqrt(n2)[:, None, None]
        verts = s0[:, None, :] + np.einsum("pij,ej->pei", rot, geom.body_vertices)
        a_cells = a_all[offset : offset + p_count]
        b_cells = b_all[offset : offset + p_count]
        vals.append((np.einsum("pzi,pei->pze", a_cells, verts) - b_cells[:, :, None]).ravel())
        if ctx.obstacles:
            from .geometry import smooth_distance_batch

            t_hat = 0.0  # stamps enter only through obstacle poses below
            t_abs = (
                np.repeat(np.arange(seg.n_pieces), lam + 1) * seg.delta_t
                + np.tile(tl, seg.n_pieces)
            )
            for obs in ctx.obstacles:
                pos, psi, dpos, dpsi, _ = obs.pose_traj.sample(t_abs, clamp=True)
                c, s = np.cos(psi), np.sin(psi)
                rot_u = np.empty((p_count, 2, 2))
                rot_u[:, 0, 0] = c
                rot_u[:, 0, 1] = -s
                rot_u[:, 1, 0] = s
                rot_u[:, 1, 1] = c
                from .flat_model import B

                drot_u = dpsi[:, None, None] * np.einsum("ij,pjk->pik", B, rot_u)
                u, *_ = smooth_distance_batch(
                    s0, s1, seg.eta, geom, obs.body_vertices, pos, rot_u, dpos, drot_u,
                    cfg.smooth_cfg(), clamp_speed=True,
                )
                vals.append(cfg.d_m - u)
        for arr in vals:
            arr = np.asarray(arr).ravel()
            if np.any((arr > -BAND) & (arr < RELAX_MARGIN + BAND)):
                return False
        offset += p_count
    return True


def _objective_instance(rng, n_segments):
    cfg = ConstraintConfig(
        v_m=float(rng.uniform(1.0, 2.0)),
        a_tm=float(rng.uniform(0.8, 1.5)),
        a_nm=float(rng.uniform(0.6, 1.2)),
        kappa_m=float(rng.uniform(0.3, 0.6)),
        d_m=0.5,
        n_lambda=6,
    )
    pieces = [int(rng.integers(2, 4)) for _ in range(n_segments)]
    etas = [1 if i % 2 == 0 else -1 for i in range(n_segments)]
    layout = DecisionLayout(pieces=pieces, etas=etas)
    n_pts = sum(m * (cfg.n_lambda + 1) for m in pieces)
    start = np.vstack([rng.normal(size=2) * 0.5, [0.8, 0.1], [0.0, 0.0]])
    goal_pos = start[0] + np.array([6.0, 0.0]) + rng.normal(size=2)
    goal = np.vstack([goal_pos, [0.8 if n_segments == 1 else -0.05, 0.0], [0.0, 0.0]])
    obstacles = [_random_obstacle(rng, center=start[0] + np.array([4.0, 3.0]), vel_scale=0.5)]
    ctx = PlanContext(
        layout=layout,
        start_state=start,
        goal_state=goal,
        corridor=_wide_corridor(n_pts, half=40.0),
        obstacles=obstacles,
        constraints=cfg,
        geom=_geom(),
        solver=SolverConfig(),
    )
    waypoints = []
    anchor = start[0]
    for i, m in enumerate(pieces):
        end = anchor + np.array([4.0, 0.0]) + rng.normal(size=2) * 1.0
        q = np.linspace(anchor, end, m + 1)[1:-1] + rng.normal(size=(m - 1, 2)) * 0.5
        waypoints.append(q)
        anchor = end
    taus = inverse_time_map(rng.uniform(2.0, 4.0, size=n_segments))
    shift_pos = np.array([waypoints[i][-1] if len(waypoints[i]) else anchor for i in range(n_segments - 1)]).reshape(
        -1, 2
    ) + rng.normal(size=(n_segments - 1, 2)) * 0.3
    shift_ang = rng.uniform(-np.pi, np.pi, size=n_segments - 1)
    x0 = layout.pack(waypoints, taus, shift_pos, shift_ang)
    return ctx, x0


def check_objective(rng, n_segments=1, max_draws=60) -> float:
    for _ in range(max_draws):
        ctx, x0 = _objective_instance(rng, n_segments)
        if np.any(np.abs(x0[ctx.layout.tau_slice]) < 1e-3):
            continue
        traj = build_trajectory(x0, ctx)
        if not _hinge_inputs_clear(traj, ctx):
            continue
        value, grad = objective_and_gradient(x0, ctx)
        fd = _central(lambda x: objective_and_gradient(x, ctx)[0], x0)
        return _rel(grad, fd)
    raise RuntimeError("could not draw a band-safe objective instance")


CHECKS = {
    "feasibility": check_feasibility,
    "corridor": check_corridor,
    "dynamic": check_dynamic,
    "objective": lambda rng: check_objective(rng, n_segments=1),
    "gear_shift": lambda rng: check_objective(rng, n_segments=2),
}


def run_all(instances: int = 50, seed: int = 0) -> dict:
    """Max relative FD error per class over the requested instance count."""
    results = {}
    for name, check in CHECKS.items():
        rng = np.random.default_rng(seed + hash(name) % 10000)
        worst = 0.0
        for _ in range(instances):
            worst = max(worst, check(rng))
        results[name] = worst
    return results
