"""Convex polygon algebra and differentiable signed-distance surrogates.

Polygons are (n, 2) vertex arrays in clockwise order. The exact signed
distance is an enumeration oracle (separating axes for penetration,
vertex-edge distances for separation) used to validate the analytic
lower bound and its log-sum-exp smoothing, which is what the optimizer
differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEdge, SpeedSingularity
from .flat_model import B, EPS_SPEED, VehicleGeometry

_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class HalfPlane:
    """Oriented line {p : normal . p <= offset} with a unit normal."""

    normal: np.ndarray
    offset: float


@dataclass(frozen=True)
class SmoothDistanceConfig:
    """Smoothing exponents for the outer max and inner min relaxations."""

    alpha_max: float = 100.0
    alpha_min: float = -100.0

    def __post_init__(self):
        if self.alpha_max <= 0 or self.alpha_min >= 0:
            raise ValueError("alpha_max must be positive and alpha_min negative")


@dataclass
class ObstaclePose:
    """World pose of a convex moving obstacle at one time stamp."""

    body_vertices: np.ndarray  # (n_u, 2), clockwise body frame
    position: np.ndarray  # w
    rotation: np.ndarray  # R, 2x2
    d_position: np.ndarray | None = None  # dw/dt
    d_rotation: np.ndarray | None = None  # dR/dt

    def __post_init__(self):
        self.body_vertices = np.asarray(self.body_vertices, float)
        self.position = np.asarray(self.position, float)
        self.rotation = np.asarray(self.rotation, float)
        if self.d_position is None:
            self.d_position = np.zeros(2)
        if self.d_rotation is None:
            self.d_rotation = np.zeros((2, 2))

    def world_vertices(self) -> np.ndarray:
        return self.position + self.body_vertices @ self.rotation.T


def polygon_is_clockwise(vertices: np.ndarray) -> bool:
    v = np.asarray(vertices, float)
    x, y = v[:, 0], v[:, 1]
    return float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) < 0.0


def validate_convex_clockwise(vertices: np.ndarray, name: str = "polygon") -> np.ndarray:
    """Check clockwise order, convexity and non-degenerate edges."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
        raise ValueError(f"{name} must be an (n>=3, 2) vertex array")
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths < _EDGE_EPS):
        raise DegenerateEdge(f"{name} has an edge shorter than {_EDGE_EPS}")
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if not np.all(cross < _EDGE_EPS):
        raise ValueError(f"{name} is not convex and clockwise (or has collinear vertices)")
    return v


def hrep_from_vertices(vertices: np.ndarray) -> list[HalfPlane]:
    """One outward half-plane per edge of a clockwise convex polygon."""
    v = np.asarray(vertices, dtype=float)
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths < _EDGE_EPS):
        raise DegenerateEdge("polygon has a degenerate edge")
    normals = edges @ B.T / lengths[:, None]
    offsets = np.sum(normals * v, axis=1)
    return [HalfPlane(normals[e].copy(), float(offsets[e])) for e in range(v.shape[0])]


def edge_normals(vertices: np.ndarray) -> np.ndarray:
    """Unit outward normals of a clockwise polygon, one per edge."""
    v = np.asarray(vertices, float)
    edges = np.roll(v, -1, axis=0) - v
    return edges @ B.T / np.linalg.norm(edges, axis=1)[:, None]


# -- exact oracle ---------------------------------------------------------------


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def sd_exact(p: np.ndarray, q: np.ndarray) -> float:
    """Exact signed distance between convex polygons.

    Positive separation distance when disjoint, minus the minimum
    separating translation when overlapping. Enumerates edge normals of
    both polygons (exact for convex polygons) and vertex-edge distances.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    axes = np.vstack([edge_normals(p), edge_normals(q)])
    pp = p @ axes.T  # (np, naxes)
    qq = q @ axes.T
    gaps = np.maximum(qq.min(axis=0) - pp.max(axis=0), pp.min(axis=0) - qq.max(axis=0))
    if np.any(gaps > 0.0):
        best = np.inf
        for i in range(q.shape[0]):
            a, b = q[i], q[(i + 1) % q.shape[0]]
            best = min(best, float(_point_segment_distance(p, a, b).min()))
        for i in range(p.shape[0]):
            a, b = p[i], p[(i + 1) % p.shape[0]]
            best = min(best, float(_point_segment_distance(q, a, b).min()))
        return best
    return float(gaps.max())


def minkowski_signed_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Signed distance of the origin to the vertex-wise difference {q - p}.

    Independent oracle for sd_exact: builds the Minkowski difference hull
    and measures the origin's distance to it (negative inside).
    """
    from scipy.spatial import ConvexHull

    p = np.asarray(p, float)
    q = np.asarray(q, float)
    diff = (q[None, :, :] - p[:, None, :]).reshape(-1, 2)
    hull = ConvexHull(diff)
    verts = diff[hull.vertices]  # counter-clockwise
    n = verts.shape[0]
    origin = np.zeros((1, 2))
    dmin = np.inf
    inside = True
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        dmin = min(dmin, float(_point_segment_distance(origin, a, b)[0]))
        e = b - a
        if e[0] * (-a[1]) - e[1] * (-a[0]) < 0.0:  # origin right of ccw edge
            inside = False
    return -dmin if inside else dmin


def lb_sd(ego: np.ndarray, obs: np.ndarray) -> float:
    """Analytic lower bound on the signed distance between convex polygons.

    Maximum over all face normals of both polygons of the minimum signed
    vertex-plane distance; never exceeds sd_exact.
    """
    ego = np.asarray(ego, float)
    obs = np.asarray(obs, float)
    h_e = edge_normals(ego)
    h_o = edge_normals(obs)
    # obstacle vertices against ego faces
    d1 = ((obs @ h_e.T) - np.sum(h_e * ego, axis=1)[None, :]).min(axis=0).max()
    d2 = ((ego @ h_o.T) - np.sum(h_o * obs, axis=1)[None, :]).min(axis=0).max()
    return float(max(d1, d2))


# -- log-sum-exp ----------------------------------------------------------------


def lse(values: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """Smooth max (alpha > 0) or min (alpha < 0) with softmax weights.

    Overflow-safe via max-shift; the weights are the exact partial
    derivatives of the returned value.
    """
    if alpha == 0.0:
        raise ValueError("alpha must be nonzero")
    v = np.asarray(values, dtype=float)
    # shift by the extreme element so the value sandwich holds exactly:
    # for alpha > 0 the result is max + log(sum)/alpha with sum >= 1
    shift = v.max() if alpha > 0 else v.min()
    e = np.exp(alpha * (v - shift))
    s = e.sum()
    return float(shift + np.log(s) / alpha), e / s


def _lse_last(values: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """lse along the last axis of a batch array."""
    shift = values.max(axis=-1, keepdims=True) if alpha > 0 else values.min(axis=-1, keepdims=True)
    e = np.exp(alpha * (values - shift))
    s = e.sum(axis=-1, keepdims=True)
    return shift[..., 0] + np.log(s[..., 0]) / alpha, e / s


# -- smoothed vehicle-obstacle distance -----------------------------------------


def _flat_rotation_batch(d_sigma: np.ndarray, eta: int, norms: np.ndarray) -> np.ndarray:
    r = np.empty(d_sigma.shape[:-1] + (2, 2))
    r[..., 0, 0] = d_sigma[..., 0]
    r[..., 1, 0] = d_sigma[..., 1]
    r[..., 0, 1] = -d_sigma[..., 1]
    r[..., 1, 1] = d_sigma[..., 0]
    return eta * r / norms[..., None, None]


def _f_jacobian(l_vecs: np.ndarray, d_sigma: np.ndarray, eta: int, norms: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """Batch Jacobian F with F[p,e,k,m] = d(R l_e)_m / d(d_sigma)_k."""
    p = d_sigma.shape[0]
    ne = l_vecs.shape[0]
    lmat = np.empty((ne, 2, 2))
    lmat[:, 0, 0] = l_vecs[:, 0]
    lmat[:, 0, 1] = l_vecs[:, 1]
    lmat[:, 1, 0] = -l_vecs[:, 1]
    lmat[:, 1, 1] = l_vecs[:, 0]
    rl = np.einsum("pij,ej->pei", rot, l_vecs)
    f = eta * lmat[None, :, :, :] / norms[:, None, None, None]
    f = f - np.einsum("pk,pem->pekm", d_sigma / norms[:, None] ** 2, rl)
    return f


def smooth_distance_batch(
    sigma: np.ndarray,
    d_sigma: np.ndarray,
    eta: int,
    geom: VehicleGeometry,
    obs_vertices: np.ndarray,
    w: np.ndarray,
    rot_u: np.ndarray,
    dw: np.ndarray,
    drot_u: np.ndarray,
    cfg: SmoothDistanceConfig,
    clamp_speed: bool = False,
):
    """Smoothed signed distance and gradients for a batch of poses.

    sigma, d_sigma: (P, 2) flat outputs; w, dw: (P, 2) obstacle origin and
    its time derivative; rot_u, drot_u: (P, 2, 2). Returns
    (U, dU/dsigma, dU/dd_sigma, dU/dstamp) with leading dimension P.
    With clamp_speed the velocity norm is floored instead of raising,
    keeping line-search probes finite.
    """
    sigma = np.atleast_2d(np.asarray(sigma, float))
    d_sigma = np.atleast_2d(np.asarray(d_sigma, float))
    w = np.atleast_2d(np.asarray(w, float))
    dw = np.atleast_2d(np.asarray(dw, float))
    rot_u = np.asarray(rot_u, float).reshape(-1, 2, 2)
    drot_u = np.asarray(drot_u, float).reshape(-1, 2, 2)

    norms = np.linalg.norm(d_sigma, axis=1)
    if np.any(norms < EPS_SPEED):
        if not clamp_speed:
            raise SpeedSingularity("flat velocity below EPS_SPEED in smooth_distance")
        norms = np.maximum(norms, EPS_SPEED)

    l_e = geom.inflated_vertices()
    n_e = l_e.shape[0]
    dl_e = np.roll(l_e, -1, axis=0) - l_e
    dln_e = np.linalg.norm(dl_e, axis=1)

    l_o = np.asarray(obs_vertices, float)
    n_u = l_o.shape[0]
    dl_o = np.roll(l_o, -1, axis=0) - l_o
    dln_o = np.linalg.norm(dl_o, axis=1)

    rot_e = _flat_rotation_batch(d_sigma, eta, norms)

    rl_e = np.einsum("pij,ej->pei", rot_e, l_e)  # R l_e
    v_e = sigma[:, None, :] + rl_e
    h_e = np.einsum("ij,pjk,ek->pei", B, rot_e, dl_e) / dln_e[None, :, None]

    ru_lo = np.einsum("pij,oj->poi", rot_u, l_o)  # R_u l_o
    v_o = w[:, None, :] + ru_lo
    h_o = np.einsum("ij,pjk,ok->poi", B, rot_u, dl_o) / dln_o[None, :, None]
    h_o_dot = np.einsum("ij,pjk,ok->poi", B, drot_u, dl_o) / dln_o[None, :, None]

    # inner distances (ego faces vs obstacle vertices and vice versa)
    d_uo = np.einsum("pei,poi->peo", h_e, ru_lo)
    dtil_u = np.einsum("pei,pi->pe", h_e, w) - np.einsum("pei,pei->pe", h_e, v_e)
    inner_u, w_in_u = _lse_last(d_uo, cfg.alpha_min)
    d_u = inner_u + dtil_u

    d_eo = np.einsum("poi,pei->poe", h_o, rl_e)
    dtil_e = np.einsum("poi,poi->po", h_o, sigma[:, None, :] - v_o)
    inner_e, w_in_e = _lse_last(d_eo, cfg.alpha_min)
    d_e = inner_e + dtil_e

    stacked = np.concatenate([d_u, d_e], axis=1)
    outer, w_out = _lse_last(stacked, cfg.alpha_max)
    u_val = outer - np.log(n_e + n_u) / cfg.alpha_max
    w_out_e, w_out_o = w_out[:, :n_e], w_out[:, n_e:]

    # gradient w.r.t. sigma
    du_dsigma = -np.einsum("pe,pei->pi", w_out_e, h_e) + np.einsum("po,poi->pi", w_out_o, h_o)

    # gradient w.r.t. the absolute stamp
    ddot_uo = np.einsum("pij,oj,pei->peo", drot_u, l_o, h_e)
    ddot_til_u = np.einsum("pi,pei->pe", dw, h_e)
    ddot_eo = np.einsum("pei,poi->poe", rl_e, h_o_dot)
    dv_o = dw[:, None, :] + np.einsum("pij,oj->poi", drot_u, l_o)
    ddot_til_e = np.einsum("poi,poi->po", h_o_dot, sigma[:, None, :] - v_o) - np.einsum(
        "poi,poi->po", h_o, dv_o
    )
    du_dt = np.einsum("pe,peo,peo->p", w_out_e, w_in_u, ddot_uo) + np.einsum("pe,pe->p", w_out_e, ddot_til_u)
    du_dt += np.einsum("po,poe,poe->p", w_out_o, w_in_e, ddot_eo) + np.einsum("po,po->p", w_out_o, ddot_til_e)

    # gradient w.r.t. d_sigma through the flat rotation
    f_dl = _f_jacobian(dl_e, d_sigma, eta, norms, rot_e)
    f_l = _f_jacobian(l_e, d_sigma, eta, norms, rot_e)
    bt_ru_lo = ru_lo @ B  # (B^T R_u l_o): row vectors times B == B^T applied
    vec_u = np.einsum("peo,poi->pei", w_in_u, bt_ru_lo) + ((w - sigma) @ B)[:, None, :]
    du_ddsigma = np.einsum("pe,peki,pei->pk", w_out_e / dln_e[None, :], f_dl, vec_u)
    vec_e = np.einsum("po,poe,poi->pei", w_out_o, w_in_e, h_o)
    du_ddsigma += np.einsum("peki,pei->pk", f_l, vec_e)

    return u_val, du_dsigma, du_ddsigma, du_dt


def smooth_distance(
    sigma: np.ndarray,
    d_sigma: np.ndarray,
    eta: int,
    geom: VehicleGeometry,
    obs: ObstaclePose,
    cfg: SmoothDistanceConfig = SmoothDistanceConfig(),
):
    """Smoothed signed distance between the vehicle and one obstacle pose.

    Returns (U, dU/dsigma, dU/dd_sigma, dU/dstamp). U never exceeds the
    exact signed distance between the two polygons.
    """
    u, ds, dds, dt = smooth_distance_batch(
        sigma,
        d_sigma,
        eta,
        geom,
        obs.body_vertices,
        obs.position,
        obs.rotation,
        obs.d_position,
        obs.d_rotation,
        cfg,
    )
    return float(u[0]), ds[0], dds[0], float(dt[0])
