"""Safe driving corridor built from an occupancy grid.

Each constraint point of the planned trajectory gets one free convex
cell: an oriented rectangle seeded at the front-end pose and grown
greedily front/back/left/right until occupied cells block it or the
extent cap is reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SeedInCollision, SpeedSingularity
from .flat_model import B, EPS_SPEED, VehicleGeometry, rotation_from_flat

Pose = tuple[float, float, float]


@dataclass
class OccupancyGrid:
    """Boolean occupancy raster with a world-frame origin.

    origin is the world position of the (0, 0) cell corner; cell (i, j)
    covers [origin + (i, j)*res, origin + (i+1, j+1)*res).
    """

    resolution: float
    origin: np.ndarray
    width: int
    height: int
    cells: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.cells is None:
            self.cells = np.zeros((self.width, self.height), dtype=bool)
        else:
            self.cells = np.asarray(self.cells, dtype=bool)
            if self.cells.shape != (self.width, self.height):
                raise ValueError("cells shape must be (width, height)")
        self._occupied_centers = None

    def occupy_cells(self, indices: np.ndarray):
        idx = np.asarray(indices, dtype=int).reshape(-1, 2)
        self.cells[idx[:, 0], idx[:, 1]] = True
        self._occupied_centers = None
        self._occupied_tree = None
        self._dilated = {}

    def occupy_polygon(self, vertices: np.ndarray):
        """Mark every cell whose center lies inside the convex polygon."""
        v = np.asarray(vertices, dtype=float)
        lo = np.floor((v.min(axis=0) - self.origin) / self.resolution).astype(int)
        hi = np.ceil((v.max(axis=0) - self.origin) / self.resolution).astype(int)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, [self.width, self.height])
        if np.any(lo >= hi):
            return
        ii, jj = np.meshgrid(np.arange(lo[0], hi[0]), np.arange(lo[1], hi[1]), indexing="ij")
        centers = self.origin + (np.stack([ii, jj], axis=-1) + 0.5) * self.resolution
        edges = np.roll(v, -1, axis=0) - v
        normals = edges @ B.T
        offsets = np.sum(normals * v, axis=1)
        inside = np.all(centers @ normals.T - offsets <= 0.0, axis=-1)
        self.cells[ii[inside], jj[inside]] = True
        self._occupied_centers = None
        self._occupied_tree = None
        self._dilated = {}

    def occupied_centers(self) -> np.ndarray:
        if self._occupied_centers is None:
            idx = np.argwhere(self.cells)
            self._occupied_centers = self.origin + (idx + 0.5) * self.resolution
            self._occupied_tree = None
        return self._occupied_centers

    def occupied_tree(self):
        """KD-tree over occupied cell centers (None when the grid is free)."""
        centers = self.occupied_centers()
        if centers.shape[0] == 0:
            return None
        if getattr(self, "_occupied_tree", None) is None:
            from scipy.spatial import cKDTree

            self._occupied_tree = cKDTree(centers)
        return self._occupied_tree

    def dilated_mask(self, radius: float) -> np.ndarray:
        """Occupancy dilated by a circle of the given radius (conservative).

        A False entry guarantees no occupied cell center lies within
        `radius` of any point in that cell.
        """
        key = int(np.ceil(radius / self.resolution)) + 1
        cache = getattr(self, "_dilated", None)
        if cache is None:
            cache = self._dilated = {}
        if key not in cache:
            from scipy.ndimage import binary_dilation

            r = key
            ii, jj = np.ogrid[-r : r + 1, -r : r + 1]
            selem = ii * ii + jj * jj <= r * r + r
            cache[key] = binary_dilation(self.cells, structure=selem)
        return cache[key]

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        return self.origin, self.origin + np.array([self.width, self.height]) * self.resolution


@dataclass
class Corridor:
    """One convex cell per constraint point, as half-plane arrays."""

    normals: list[np.ndarray]  # each (4, 2)
    offsets: list[np.ndarray]  # each (4,)
    seed_poses: list[Pose] = field(default_factory=list)

    def __len__(self):
        return len(self.normals)

    def cell_vertices(self, k: int) -> np.ndarray:
        """Corner points of cell k (clockwise), for plotting and audits."""
        a, b = self.normals[k], self.offsets[k]
        pts = []
        for i in range(4):
            j = (i + 1) % 4
            m = np.array([a[i], a[j]])
            pts.append(np.linalg.solve(m, np.array([b[i], b[j]])))
        return np.array(pts)


def _footprint_world(pose: Pose, geom: VehicleGeometry) -> np.ndarray:
    x, y, theta = pose
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return np.array([x, y]) + geom.inflated_vertices() @ rot.T


def _points_in_oriented_rect(points, center, axis_f, axis_l, front, back, left, right):
    rel = points - center
    u = rel @ axis_f
    v = rel @ axis_l
    return (u <= front) & (u >= -back) & (v <= left) & (v >= -right)


def footprint_in_collision(grid: OccupancyGrid, pose: Pose, geom: VehicleGeometry) -> bool:
    """True if any occupied cell center lies inside the (inflated) footprint."""
    occ = grid.occupied_centers()
    if occ.shape[0] == 0:
        return False
    verts = _footprint_world(pose, geom)
    rel = occ - verts.mean(axis=0)
    r2 = (rel**2).sum(axis=1)
    rad = np.linalg.norm(verts - verts.mean(axis=0), axis=1).max()
    near = occ[r2 <= (rad + grid.resolution) ** 2]
    if near.shape[0] == 0:
        return False
    edges = np.roll(verts, -1, axis=0) - verts
    normals = edges @ B.T
    offsets = np.sum(normals * verts, axis=1)
    inside = np.all(near @ normals.T - offsets <= 0.0, axis=1)
    return bool(inside.any())


_halfplane_cache: dict = {}


def _body_halfplanes(geom: VehicleGeometry):
    key = id(geom)
    cached = _halfplane_cache.get(key)
    if cached is None:
        verts = geom.inflated_vertices()
        edges = np.roll(verts, -1, axis=0) - verts
        normals = edges @ B.T / np.linalg.norm(edges, axis=1)[:, None]
        offsets = np.sum(normals * verts, axis=1)
        radius = float(np.linalg.norm(verts, axis=1).max())
        cached = (normals, offsets, radius)
        if len(_halfplane_cache) > 64:
            _halfplane_cache.clear()
        _halfplane_cache[key] = cached
    return cached


def swept_collision(grid: OccupancyGrid, poses: np.ndarray, geom: VehicleGeometry) -> bool:
    """True if the footprint hits an occupied cell at any of the poses.

    Poses whose dilated-occupancy cell is clear are skipped outright;
    the rest get a KD-tree lookup and an exact half-plane test.
    Equivalent to checking footprint_in_collision pose by pose.
    """
    tree = grid.occupied_tree()
    if tree is None:
        return False
    occ = grid.occupied_centers()
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    normals, offsets, radius = _body_halfplanes(geom)

    mask = grid.dilated_mask(radius)
    idx = np.floor((poses[:, :2] - grid.origin) / grid.resolution).astype(int)
    in_bounds = (
        (idx[:, 0] >= 0) & (idx[:, 0] < grid.width) & (idx[:, 1] >= 0) & (idx[:, 1] < grid.height)
    )
    suspicious = ~in_bounds
    ib = np.where(in_bounds)[0]
    if ib.size:
        flags = mask[idx[ib, 0], idx[ib, 1]]
        suspicious = suspicious.copy()
        suspicious[ib] = flags
    cand = poses[suspicious]
    if cand.shape[0] == 0:
        return False

    neighbor_lists = tree.query_ball_point(cand[:, :2], radius + 0.01)
    for pose, nbr in zip(cand, neighbor_lists):
        if not nbr:
            continue
        near = occ[nbr]
        c, s = math.cos(pose[2]), math.sin(pose[2])
        rel = near - pose[:2]
        local = np.empty_like(rel)
        local[:, 0] = rel[:, 0] * c + rel[:, 1] * s
        local[:, 1] = -rel[:, 0] * s + rel[:, 1] * c
        if np.all(local @ normals.T - offsets <= 0.0, axis=1).any():
            return True
    return False


def build_corridor(
    grid: OccupancyGrid,
    seeds: list[Pose],
    footprint: VehicleGeometry,
    max_extent: float = 10.0,
    long_extent: float | None = None,
) -> Corridor:
    """Grow one free oriented rectangle around each seed pose.

    Extents are measured from the seed position along the seed heading,
    start at the footprint bounds, and grow in resolution-sized steps per
    direction until an occupied cell would enter the rectangle or the
    direction's extent cap is reached. The longitudinal directions grow
    first (to long_extent, default max_extent): cells stay narrow while
    they reach through gaps, which leaves the time profile room to slide
    constraint points along the path. Raises SeedInCollision for seeds
    whose footprint already overlaps an occupied cell.
    """
    occ = grid.occupied_centers()
    res = grid.resolution
    caps = {
        "front": long_extent if long_extent is not None else max_extent,
        "back": long_extent if long_extent is not None else max_extent,
        "left": max_extent,
        "right": max_extent,
    }
    normals_out: list[np.ndarray] = []
    offsets_out: list[np.ndarray] = []
    body = footprint.inflated_vertices()

    for idx, pose in enumerate(seeds):
        if footprint_in_collision(grid, pose, footprint):
            raise SeedInCollision(idx)
        x, y, theta = pose
        center = np.array([x, y])
        axis_f = np.array([np.cos(theta), np.sin(theta)])
        axis_l = np.array([-np.sin(theta), np.cos(theta)])
        # start from the footprint's local bounding box
        local_f = body[:, 0]
        front = max(float(local_f.max()), res)
        back = max(float(-local_f.min()), res)
        local_l = body[:, 1]
        left = max(float(local_l.max()), res)
        right = max(float(-local_l.min()), res)

        if occ.shape[0] > 0:
            rel = occ - center
            u = rel @ axis_f
            v = rel @ axis_l
        else:
            u = v = np.empty(0)

        extents = {"front": front, "back": back, "left": left, "right": right}
        for key in ("front", "back", "left", "right"):
            cap = max(caps[key], extents[key])
            while extents[key] < cap:
                trial = dict(extents)
                trial[key] = min(trial[key] + res, cap)
                if u.shape[0] > 0:
                    hit = (
                        (u <= trial["front"])
                        & (u >= -trial["back"])
                        & (v <= trial["left"])
                        & (v >= -trial["right"])
                    )
                    if bool(hit.any()):
                        break
                extents[key] = trial[key]

        # faces ordered around the rectangle so adjacent pairs meet at corners
        normals = np.array([axis_f, axis_l, -axis_f, -axis_l])
        offsets = np.array(
            [
                axis_f @ center + extents["front"],
                axis_l @ center + extents["left"],
                -(axis_f @ center) + extents["back"],
                -(axis_l @ center) + extents["right"],
            ]
        )
        normals_out.append(normals)
        offsets_out.append(offsets)

    return Corridor(normals=normals_out, offsets=offsets_out, seed_poses=list(seeds))


def contains_footprint(
    normals: np.ndarray,
    offsets: np.ndarray,
    sigma: np.ndarray,
    d_sigma: np.ndarray,
    eta: int,
    geom: VehicleGeometry,
) -> float:
    """Worst containment violation of the footprint in one corridor cell.

    Returns max over (vertex, half-plane) of A . (sigma + R l) - b;
    non-positive means the whole footprint is inside.
    """
    if np.linalg.norm(d_sigma) < EPS_SPEED:
        raise SpeedSingularity("flat velocity below EPS_SPEED in contains_footprint")
    rot = rotation_from_flat(d_sigma, eta)
    verts = np.asarray(sigma, float) + geom.body_vertices @ rot.T
    vals = verts @ np.asarray(normals, float).T - np.asarray(offsets, float)[None, :]
    return float(vals.max())
