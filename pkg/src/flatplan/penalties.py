"""Constraint functions, penalty quadrature and the gradient chain.

Inequality constraints (speed, accelerations, curvature, corridor
containment, moving-obstacle clearance) are evaluated at uniform
constraint points on every polynomial piece, passed through a C^1 hinge,
and summed with trapezoid weights. Gradients flow to the piece
coefficients through the evaluation basis and to the segment durations
through the sample times, the absolute stamps, and the quadrature scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corridor import Corridor
from .errors import SpeedSingularity, StampOutOfHorizon
from .flat_model import B, EPS_SPEED, VehicleGeometry
from .geometry import ObstaclePose, SmoothDistanceConfig, smooth_distance_batch
from .poly_traj import FlatTrajectory, basis_stack

RELAX_MARGIN = 1e-4  # demarcation point of the C^1 hinge

CLASSES = ("velocity", "accel_t", "accel_n", "curvature", "corridor", "dynamic")


@dataclass
class ConstraintConfig:
    """Limits, discretization and weights of the penalty terms."""

    v_m: float = 5.0
    a_tm: float = 3.0
    a_nm: float = 3.0
    kappa_m: float = 0.5
    d_m: float = 0.3
    n_lambda: int = 16
    alpha: float = 100.0
    w_t: float = 50.0
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        base = {c: 1e4 for c in CLASSES}
        base.update(self.weights)
        self.weights = base
        for name in ("v_m", "a_tm", "a_nm", "kappa_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")

    def smooth_cfg(self) -> SmoothDistanceConfig:
        return SmoothDistanceConfig(alpha_max=self.alpha, alpha_min=-self.alpha)


@dataclass
class PoseTrajectory:
    """Piecewise-polynomial pose (x, y, heading) of a moving obstacle."""

    durations: np.ndarray
    coeffs: list  # one (degree+1, 3) array per piece, piece-local monomials

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float).reshape(-1)
        self.coeffs = [np.asarray(c, dtype=float) for c in self.coeffs]
        if len(self.coeffs) != self.durations.shape[0]:
            raise ValueError("one coefficient block per piece required")
        if np.any(self.durations <= 0):
            raise ValueError("piece durations must be positive")
        self._starts = np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def horizon(self) -> float:
        return float(self._starts[-1])

    def sample(self, stamps: np.ndarray, clamp: bool = False):
        """Pose and derivatives at the given stamps.

        Returns (pos, heading, d_pos, d_heading, clamped). Out-of-horizon
        stamps either raise StampOutOfHorizon or freeze at the nearest
        endpoint pose with zero derivatives when clamp is set.
        """
        t = np.atleast_1d(np.asarray(stamps, dtype=float))
        below = t < 0.0
        above = t > self.horizon
        clamped = bool(below.any() or above.any())
        if clamped and not clamp:
            raise StampOutOfHorizon(
                f"stamp outside [0, {self.horizon:.6g}] in obstacle trajectory"
            )
        tc = np.clip(t, 0.0, self.horizon)
        idx = np.clip(np.searchsorted(self._starts, tc, side="right") - 1, 0, len(self.coeffs) - 1)
        pos = np.zeros((t.shape[0], 2))
        psi = np.zeros(t.shape[0])
        dpos = np.zeros((t.shape[0], 2))
        dpsi = np.zeros(t.shape[0])
        for j, c in enumerate(self.coeffs):
            mask = idx == j
            if not mask.any():
                continue
            tl = tc[mask] - self._starts[j]
            deg = c.shape[0] - 1
            powers = tl[:, None] ** np.arange(deg + 1)[None, :]
            vals = powers @ c
            dcoef = c[1:] * np.arange(1, deg + 1)[:, None] if deg > 0 else np.zeros((1, 3))
            dpow = tl[:, None] ** np.arange(max(deg, 1))[None, :]
            dvals = dpow[:, : max(deg, 1)] @ dcoef
            pos[mask] = vals[:, :2]
            psi[mask] = vals[:, 2]
            dpos[mask] = dvals[:, :2]
            dpsi[mask] = dvals[:, 2]
        frozen = below | above
        dpos[frozen] = 0.0
        dpsi[frozen] = 0.0
        return pos, psi, dpos, dpsi, clamped


@dataclass
class DynamicObstacle:
    """Convex rigid body following a piecewise-polynomial pose trajectory."""

    body_vertices: np.ndarray
    pose_traj: PoseTrajectory

    def __post_init__(self):
        self.body_vertices = np.asarray(self.body_vertices, dtype=float)

    def pose_at(self, stamp: float, clamp: bool = False) -> ObstaclePose:
        pos, psi, dpos, dpsi, _ = self.pose_traj.sample(np.array([stamp]), clamp=clamp)
        c, s = np.cos(psi[0]), np.sin(psi[0])
        rot = np.array([[c, -s], [s, c]])
        return ObstaclePose(
            body_vertices=self.body_vertices,
            position=pos[0],
            rotation=rot,
            d_position=dpos[0],
            d_rotation=dpsi[0] * (B @ rot),
        )

    def world_polygon(self, stamp: float, clamp: bool = False) -> np.ndarray:
        return self.pose_at(stamp, clamp=clamp).world_vertices()


@dataclass
class PenaltyReport:
    """Weighted totals and worst raw violations per constraint class."""

    total: float
    class_totals: dict
    max_violation: dict
    stamps_clamped: bool = False


def relax_l1(x):
    """C^1 hinge: zero, quartic blend on (0, margin], then linear."""
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    a0 = RELAX_MARGIN
    val = np.zeros_like(arr)
    dval = np.zeros_like(arr)
    hi = arr > a0
    np.subtract(arr, 0.5 * a0, out=val, where=hi)
    dval[hi] = 1.0
    mid = (arr > 0.0) & ~hi
    if mid.any():
        xm = arr[mid]
        val[mid] = -(xm**4) / (2.0 * a0**3) + xm**3 / a0**2
        dval[mid] = -2.0 * xm**3 / a0**3 + 3.0 * xm**2 / a0**2
    if scalar:
        return float(val[0]), float(dval[0])
    return val, dval


# -- per-point constraint functions (reference implementations) ------------------


def _check_speed(d_sigma):
    if np.linalg.norm(d_sigma) < EPS_SPEED:
        raise SpeedSingularity("flat velocity below EPS_SPEED at a constraint point")


def g_velocity(d_sigma: np.ndarray, v_m: float):
    d_sigma = np.asarray(d_sigma, float)
    return float(d_sigma @ d_sigma - v_m**2), 2.0 * d_sigma


def g_accel(d_sigma: np.ndarray, dd_sigma: np.ndarray, a_tm: float, a_nm: float):
    _check_speed(d_sigma)
    s1 = np.asarray(d_sigma, float)
    s2 = np.asarray(dd_sigma, float)
    n2 = s1 @ s1
    dot = s1 @ s2
    cross = s2 @ B @ s1
    g_at = dot**2 / n2 - a_tm**2
    g_an = cross**2 / n2 - a_nm**2
    dat_ds1 = 2.0 * (dot / n2) * s2 - 2.0 * (dot / n2) ** 2 * s1
    dat_ds2 = 2.0 * (dot / n2) * s1
    dan_ds1 = 2.0 * (cross / n2) * (B.T @ s2) - 2.0 * (cross / n2) ** 2 * s1
    dan_ds2 = 2.0 * (cross / n2) * (B @ s1)
    return g_at, g_an, dat_ds1, dat_ds2, dan_ds1, dan_ds2


def g_curvature(d_sigma: np.ndarray, dd_sigma: np.ndarray, kappa_m: float):
    _check_speed(d_sigma)
    s1 = np.asarray(d_sigma, float)
    s2 = np.asarray(dd_sigma, float)
    n2 = s1 @ s1
    cross = s2 @ B @ s1
    kappa = cross / n2**1.5
    val = kappa**2 - kappa_m**2
    d_ds1 = 2.0 * kappa * ((B.T @ s2) / n2**1.5 - 3.0 * cross * s1 / n2**2.5)
    d_ds2 = 2.0 * cross * (B @ s1) / n2**3
    return val, d_ds1, d_ds2


def g_corridor(
    sigma: np.ndarray,
    d_sigma: np.ndarray,
    eta: int,
    normals: np.ndarray,
    offsets: np.ndarray,
    geom: VehicleGeometry,
):
    """Containment values and gradients for every (vertex, face) pair.

    Returns (values, grad_sigma, grad_d_sigma) with leading shape
    (n_faces, n_vertices).
    """
    _check_speed(d_sigma)
    from .flat_model import rotation_from_flat

    s1 = np.asarray(d_sigma, float)
    rot = rotation_from_flat(s1, eta)
    l_e = geom.body_vertices
    verts = np.asarray(sigma, float) + l_e @ rot.T
    a = np.asarray(normals, float)
    b = np.asarray(offsets, float)
    vals = verts @ a.T - b[None, :]  # (n_e, n_z)
    n = np.linalg.norm(s1)
    rl = l_e @ rot.T
    lmat = np.empty((l_e.shape[0], 2, 2))
    lmat[:, 0, 0] = l_e[:, 0]
    lmat[:, 0, 1] = l_e[:, 1]
    lmat[:, 1, 0] = -l_e[:, 1]
    lmat[:, 1, 1] = l_e[:, 0]
    f = eta * lmat / n - np.einsum("k,em->ekm", s1 / n**2, rl)
    grad_sigma = np.broadcast_to(a[:, None, :], (a.shape[0], l_e.shape[0], 2))
    grad_ds = np.einsum("ekm,zm->zek", f, a)
    return vals.T, grad_sigma, grad_ds


def g_dynamic(
    sigma: np.ndarray,
    d_sigma: np.ndarray,
    eta: int,
    t_hat: float,
    obstacles: list,
    cfg: ConstraintConfig,
    geom: VehicleGeometry,
    strict: bool = True,
):
    """Clearance constraint d_m - U per obstacle with all gradients."""
    _check_speed(d_sigma)
    out = []
    scfg = cfg.smooth_cfg()
    for obs in obstacles:
        pose = obs.pose_at(t_hat, clamp=not strict)
        u, ds, dds, dt = smooth_distance_batch(
            sigma,
            d_sigma,
            eta,
            geom,
            pose.body_vertices,
            pose.position,
            pose.rotation,
            pose.d_position,
            pose.d_rotation,
            scfg,
        )
        out.append((cfg.d_m - float(u[0]), -ds[0], -dds[0], -float(dt[0])))
    return out


# -- assembled penalty ------------------------------------------------------------


def stack_corridor(corridor: Corridor):
    """Per-point face arrays (normals, offsets) from a Corridor."""
    return np.array(corridor.normals), np.array(corridor.offsets)


def penalty_sum(
    traj: FlatTrajectory,
    corridor,
    obstacles: list,
    cfg: ConstraintConfig,
    geom: VehicleGeometry,
):
    """Total penalty with gradients to coefficients and durations.

    corridor may be a Corridor or a pre-stacked (normals, offsets) pair
    whose leading dimension matches the total constraint-point count
    (sum of n_pieces * (n_lambda + 1) over segments); pass None to skip
    the containment class. Returns (total, grad_coeffs per segment,
    grad_durations, PenaltyReport).
    """
    if isinstance(corridor, Corridor):
        corridor = stack_corridor(corridor)
    lam = cfg.n_lambda
    n_seg = len(traj.segments)
    kk = np.arange(lam + 1)
    wbar = np.ones(lam + 1)
    wbar[0] = wbar[-1] = 0.5

    n_per_seg = [seg.n_pieces * (lam + 1) for seg in traj.segments]
    if corridor is not None and corridor[0].shape[0] != sum(n_per_seg):
        raise ValueError(
            f"corridor has {corridor[0].shape[0]} cells, expected {sum(n_per_seg)} constraint points"
        )

    total = 0.0
    class_totals = {c: 0.0 for c in CLASSES}
    max_violation = {c: -np.inf for c in CLASSES}
    grad_c = []
    grad_t = np.zeros(n_seg)
    clamped_any = False
    offset = 0
    w = cfg.weights

    for i, seg in enumerate(traj.segments):
        m = seg.n_pieces
        dt = seg.delta_t
        p_count = m * (lam + 1)
        tl = kk * (dt / lam)
        bmats = [basis_stack(tl, d) for d in range(4)]
        # states at all constraint points, flattened (piece-major)
        states = [
            np.einsum("kc,mcd->mkd", bmats[d], seg.coeffs).reshape(p_count, 2) for d in range(4)
        ]
        s0, s1, s2, s3 = states
        norms2 = np.einsum("pi,pi->p", s1, s1)
        n2 = np.maximum(norms2, EPS_SPEED**2)

        coef0 = np.tile((dt / lam) * wbar, m)  # quadrature scale per point
        gsig = np.zeros((p_count, 2))
        gds = np.zeros((p_count, 2))
        gdds = np.zeros((p_count, 2))
        gthat = np.zeros(p_count)
        pen_point = np.zeros(p_count)

        def accumulate(cls, raw, d_pos=None, d_vel=None, d_acc=None, d_stamp=None):
            lv, ld = relax_l1(raw)
            coef = w[cls] * coef0 * ld
            pen = w[cls] * coef0 * lv
            pen_point[:] += pen
            class_totals[cls] += float(pen.sum())
            max_violation[cls] = max(max_violation[cls], float(raw.max()))
            if d_pos is not None:
                gsig[:] += coef[:, None] * d_pos
            if d_vel is not None:
                gds[:] += coef[:, None] * d_vel
            if d_acc is not None:
                gdds[:] += coef[:, None] * d_acc
            if d_stamp is not None:
                gthat[:] += coef * d_stamp

        # velocity
        accumulate("velocity", norms2 - cfg.v_m**2, d_vel=2.0 * s1)

        # accelerations
        dot = np.einsum("pi,pi->p", s1, s2)
        cross = s1[:, 0] * s2[:, 1] - s1[:, 1] * s2[:, 0]
        bt_s2 = np.stack([s2[:, 1], -s2[:, 0]], axis=1)  # B^T s2
        b_s1 = np.stack([-s1[:, 1], s1[:, 0]], axis=1)  # B s1
        r_t = dot / n2
        r_n = cross / n2
        accumulate(
            "accel_t",
            dot**2 / n2 - cfg.a_tm**2,
            d_vel=2.0 * r_t[:, None] * s2 - 2.0 * (r_t**2)[:, None] * s1,
            d_acc=2.0 * r_t[:, None] * s1,
        )
        accumulate(
            "accel_n",
            cross**2 / n2 - cfg.a_nm**2,
            d_vel=2.0 * r_n[:, None] * bt_s2 - 2.0 * (r_n**2)[:, None] * s1,
            d_acc=2.0 * r_n[:, None] * b_s1,
        )

        # curvature
        kap = cross / n2**1.5
        accumulate(
            "curvature",
            kap**2 - cfg.kappa_m**2,
            d_vel=2.0 * kap[:, None] * (bt_s2 / n2[:, None] ** 1.5 - 3.0 * (cross / n2**2.5)[:, None] * s1),
            d_acc=2.0 * (cross / n2**3)[:, None] * b_s1,
        )

        # corridor containment
        if corridor is not None:
            a_cells = corridor[0][offset : offset + p_count]
            b_cells = corridor[1][offset : offset + p_count]
            norms_c = np.sqrt(n2)
            rot = np.empty((p_count, 2, 2))
            rot[:, 0, 0] = s1[:, 0]
            rot[:, 1, 0] = s1[:, 1]
            rot[:, 0, 1] = -s1[:, 1]
            rot[:, 1, 1] = s1[:, 0]
            rot = seg.eta * rot / norms_c[:, None, None]
            l_e = geom.body_vertices
            rl = np.einsum("pij,ej->pei", rot, l_e)
            verts = s0[:, None, :] + rl
            vals = np.einsum("pzi,pei->pze", a_cells, verts) - b_cells[:, :, None]
            lv, ld = relax_l1(vals)
            coefc = w["corridor"] * coef0[:, None, None] * ld
            pen = w["corridor"] * coef0 * lv.sum(axis=(1, 2))
            pen_point[:] += pen
            class_totals["corridor"] += float(pen.sum())
            max_violation["corridor"] = max(max_violation["corridor"], float(vals.max()))
            gsig[:] += np.einsum("pze,pzi->pi", coefc, a_cells)
            lmat = np.empty((l_e.shape[0], 2, 2))
            lmat[:, 0, 0] = l_e[:, 0]
            lmat[:, 0, 1] = l_e[:, 1]
            lmat[:, 1, 0] = -l_e[:, 1]
            lmat[:, 1, 1] = l_e[:, 0]
            f = seg.eta * lmat[None] / norms_c[:, None, None, None] - np.einsum(
                "pk,pem->pekm", s1 / n2[:, None], rl
            )
            gds[:] += np.einsum("pze,pekm,pzm->pk", coefc, f, a_cells)

        # dynamic obstacles
        if obstacles:
            t_hat = traj.start_stamps[i] + (
                np.repeat(np.arange(m), lam + 1) * dt + np.tile(tl, m)
            )
            scfg = cfg.smooth_cfg()
            for obs in obstacles:
                pos, psi, dpos, dpsi, clamped = obs.pose_traj.sample(t_hat, clamp=True)
                clamped_any = clamped_any or clamped
                cps, sps = np.cos(psi), np.sin(psi)
                rot_u = np.empty((p_count, 2, 2))
                rot_u[:, 0, 0] = cps
                rot_u[:, 0, 1] = -sps
                rot_u[:, 1, 0] = sps
                rot_u[:, 1, 1] = cps
                drot_u = dpsi[:, None, None] * np.einsum("ij,pjk->pik", B, rot_u)
                u, dsig_u, dds_u, dth_u = smooth_distance_batch(
                    s0, s1, seg.eta, geom, obs.body_vertices, pos, rot_u, dpos, drot_u,
                    scfg, clamp_speed=True,
                )
                accumulate("dynamic", cfg.d_m - u, d_pos=-dsig_u, d_vel=-dds_u, d_stamp=-dth_u)

        # fold point gradients into coefficient and duration gradients
        gc = np.zeros_like(seg.coeffs)
        for d, garr in ((0, gsig), (1, gds), (2, gdds)):
            gc += np.einsum("kc,mkd->mcd", bmats[d], garr.reshape(m, lam + 1, 2))
        grad_c.append(gc)

        seg_total = float(pen_point.sum())
        total += seg_total
        duration = seg.duration
        grad_t[i] += seg_total / duration
        # sample-time sensitivity: states advance with their local time
        gbar = (
            np.einsum("pi,pi->p", gsig, s1)
            + np.einsum("pi,pi->p", gds, s2)
            + np.einsum("pi,pi->p", gdds, s3)
        )
        frac_local = np.tile(kk / (lam * m), m)
        grad_t[i] += float(gbar @ frac_local)
        # absolute-stamp sensitivity: dynamic terms couple to this and all
        # earlier segment durations
        if gthat.any():
            frac_abs = (np.repeat(np.arange(m), lam + 1) + np.tile(kk / lam, m)) / m
            grad_t[i] += float(gthat @ frac_abs)
            if i > 0:
                grad_t[:i] += float(gthat.sum())
        offset += p_count

    report = PenaltyReport(
        total=total,
        class_totals=class_totals,
        max_violation={c: (v if np.isfinite(v) else 0.0) for c, v in max_violation.items()},
        stamps_clamped=clamped_any,
    )
    return total, grad_c, grad_t, report
