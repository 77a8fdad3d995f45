"""Flat-output vehicle model.

Maps positions and derivatives of the rear-axle point to full kinematic
bicycle states. Heading, velocity, accelerations, curvature and steering
angle are all algebraic functions of the flat output and its first two
derivatives, with a direction flag selecting forward or reverse motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpeedSingularity

# Antisymmetric 90-degree rotation used throughout the gradient algebra.
B = np.array([[0.0, -1.0], [1.0, 0.0]])

FORWARD = 1
BACKWARD = -1

#: Speed below which flat-to-state recovery is treated as singular (m/s).
EPS_SPEED = 1e-6


@dataclass(frozen=True)
class FlatPoint:
    """Flat output and its derivatives at one instant."""

    sigma: np.ndarray
    d_sigma: np.ndarray
    dd_sigma: np.ndarray
    ddd_sigma: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class VehicleState:
    """Full kinematic bicycle state recovered from a flat point."""

    position: np.ndarray
    theta: float
    v: float
    a_t: float
    a_n: float
    phi: float
    kappa: float


@dataclass
class VehicleGeometry:
    """Vehicle wheelbase and body polygon.

    body_vertices are clockwise offsets from the rear-axle center, in the
    body frame (x forward, y left). The polygon must be convex with at
    least three vertices. The inflation margin grows the footprint used
    for collision tests.
    """

    wheelbase: float
    body_vertices: np.ndarray
    inflation: float = 0.0

    def __post_init__(self):
        self.body_vertices = np.asarray(self.body_vertices, dtype=float)
        if self.body_vertices.ndim != 2 or self.body_vertices.shape[0] < 3:
            raise ValueError("body_vertices must be an (n_e, 2) array with n_e >= 3")
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")

    @property
    def n_vertices(self) -> int:
        return self.body_vertices.shape[0]

    def edge_offsets(self) -> np.ndarray:
        """Body-frame edge vectors l_{e+1} - l_e, closing back to vertex 0."""
        return np.roll(self.body_vertices, -1, axis=0) - self.body_vertices

    def inflated_vertices(self) -> np.ndarray:
        """Body vertices pushed outward by the inflation margin."""
        if self.inflation == 0.0:
            return self.body_vertices
        v = self.body_vertices
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1, keepdims=True)
        normals = (edges @ B.T) / lengths  # outward for clockwise order
        # Shift each edge outward, then re-intersect adjacent edges.
        out = []
        n = v.shape[0]
        for e in range(n):
            prev = (e - 1) % n
            n1, n2 = normals[prev], normals[e]
            b1 = n1 @ v[prev] + self.inflation
            b2 = n2 @ v[e] + self.inflation
            A = np.array([n1, n2])
            out.append(np.linalg.solve(A, np.array([b1, b2])))
        return np.array(out)


def _speed(d_sigma: np.ndarray) -> float:
    n = float(np.hypot(d_sigma[0], d_sigma[1]))
    if n < EPS_SPEED:
        raise SpeedSingularity(f"flat velocity magnitude {n:.3e} below {EPS_SPEED:.0e}")
    return n


def recover_state(fp: FlatPoint, eta: int, geom: VehicleGeometry) -> VehicleState:
    """Recover the full vehicle state from a flat point.

    eta is +1 for forward motion, -1 for reverse. Raises SpeedSingularity
    when the flat velocity magnitude is below EPS_SPEED.
    """
    ds, dds = np.asarray(fp.d_sigma, float), np.asarray(fp.dd_sigma, float)
    n = _speed(ds)
    v = eta * n
    theta = float(np.arctan2(eta * ds[1], eta * ds[0]))
    cross = float(ds[0] * dds[1] - ds[1] * dds[0])
    dot = float(ds @ dds)
    a_t = eta * dot / n
    a_n = eta * cross / n
    kappa = eta * cross / n**3
    phi = float(np.arctan(eta * cross * geom.wheelbase / n**3))
    return VehicleState(
        position=np.asarray(fp.sigma, float),
        theta=theta,
        v=v,
        a_t=a_t,
        a_n=a_n,
        phi=phi,
        kappa=kappa,
    )


def rotation_from_flat(d_sigma: np.ndarray, eta: int) -> np.ndarray:
    """Body-to-world rotation matrix from the flat velocity.

    Columns are the unit velocity direction and its 90-degree rotation,
    both scaled by eta. Always a proper rotation (det = +1).
    """
    ds = np.asarray(d_sigma, float)
    n = _speed(ds)
    return eta * np.column_stack([ds, B @ ds]) / n
