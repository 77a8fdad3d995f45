"""Kinodynamic front-end: hybrid A* search and initial-plan extraction.

The search expands fixed-arc motion primitives over a discretized
(x, y, heading, direction) state space, shooting an analytic
bounded-curvature connection to the goal at every expansion. The
resulting pose path is split at direction switches and subsampled into
the waypoints and durations that warm-start the optimizer.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import reeds_shepp
from .corridor import OccupancyGrid, footprint_in_collision, swept_collision
from .errors import NoPathFound
from .flat_model import VehicleGeometry

Pose = tuple[float, float, float]


@dataclass
class FrontendConfig:
    xy_resolution: float = 0.3
    heading_bins: int = 72
    primitive_arc_factor: float = 1.5  # primitive length in grid resolutions
    forward_cost: float = 1.0
    backward_cost: float = 2.0
    switch_cost: float = 3.0
    max_expansions: int = 50000
    v_ref: float = 2.0
    piece_length: float = 2.0
    min_duration: float = 1.0
    max_pieces: int = 16
    corridor_extent: float = 8.0
    corridor_long_extent: float = 5.0


@dataclass
class SegmentPlan:
    """Warm-start data for one direction-constant trajectory segment."""

    eta: int
    poses: np.ndarray  # (n, 3)
    arc_length: float
    n_pieces: int
    waypoints: np.ndarray  # (n_pieces - 1, 2)
    duration: float
    profile: np.ndarray = None  # arc position vs normalized time, fine grid

    def arc_at_fraction(self, u: float) -> float:
        """Arc position for a normalized time fraction along the segment.

        Follows the trapezoidal warm-start speed profile so early and
        late samples sit close to the slow segment boundaries.
        """
        if self.profile is None:
            return self.arc_length * u
        n = self.profile.shape[0] - 1
        k = min(max(int(u * n), 0), n - 1)
        t = u * n - k
        return float(self.profile[k] * (1 - t) + self.profile[k + 1] * t)


@dataclass
class InitialPlan:
    segments: list[SegmentPlan]
    shift_positions: np.ndarray  # (n-1, 2)
    shift_angles: np.ndarray  # (n-1,), velocity direction before each shift

    @property
    def n_segments(self) -> int:
        return len(self.segments)


def reeds_shepp_shot(
    grid: OccupancyGrid,
    start: Pose,
    goal: Pose,
    kappa_max: float,
    geom: VehicleGeometry,
    step: float,
):
    """Collision-checked shortest analytic connection, or None."""
    path = reeds_shepp.shortest_path(start, goal, kappa_max)
    if path is None:
        return None
    poses, dirs = reeds_shepp.sample_path(start, path, kappa_max, step)
    if swept_collision(grid, np.asarray(poses), geom):
        return None
    return poses, dirs


def _wrap(theta: float) -> float:
    return theta % (2.0 * math.pi)


class _Search:
    def __init__(self, grid, geom, kappa_max, cfg: FrontendConfig):
        self.grid = grid
        self.geom = geom
        self.kappa = kappa_max
        self.cfg = cfg
        self.dth = 2.0 * math.pi / cfg.heading_bins
        self._h_cache: dict = {}

    def key(self, pose: Pose, direction: int):
        return (
            int(math.floor(pose[0] / self.cfg.xy_resolution)),
            int(math.floor(pose[1] / self.cfg.xy_resolution)),
            int(_wrap(pose[2]) / self.dth) % self.cfg.heading_bins,
            direction,
        )

    def heuristic(self, pose: Pose, goal: Pose) -> float:
        cell = self.key(pose, 0)[:3]
        cached = self._h_cache.get(cell)
        if cached is not None:
            return cached
        euclid = math.hypot(goal[0] - pose[0], goal[1] - pose[1])
        best = None
        for cand in reeds_shepp.all_candidates(pose, goal, self.kappa):
            if best is None or cand.length < best:
                best = cand.length
        rs = (best / self.kappa) if best is not None else 0.0
        h = max(euclid, rs)
        self._h_cache[cell] = h
        return h

    def primitive(self, pose: Pose, steer: float, direction: int):
        """Advance one primitive; returns (end_pose, substep poses)."""
        arc = self.cfg.primitive_arc_factor * self.grid.resolution
        n_sub = max(2, int(math.ceil(arc / self.grid.resolution)))
        ds = arc / n_sub * direction
        x, y, th = pose
        samples = []
        for _ in range(n_sub):
            if steer == 0.0:
                x += ds * math.cos(th)
                y += ds * math.sin(th)
            else:
                r = 1.0 / steer
                cx = x - r * math.sin(th)
                cy = y + r * math.cos(th)
                th += ds * steer
                x = cx + r * math.sin(th)
                y = cy - r * math.cos(th)
            samples.append((x, y, th))
        return samples


def hybrid_astar(
    grid: OccupancyGrid,
    start: Pose,
    goal: Pose,
    geom: VehicleGeometry,
    kappa_max: float,
    cfg: FrontendConfig | None = None,
):
    """Collision-free kinodynamic path from start to goal.

    Returns (poses, directions): dense resolution-spaced poses and the
    per-pose travel direction (direction of the step arriving at each
    pose; index 0 mirrors index 1). Raises NoPathFound when the search
    exhausts its open set or expansion budget.
    """
    cfg = cfg or FrontendConfig()
    if footprint_in_collision(grid, start, geom):
        raise NoPathFound("start footprint is in collision")
    if footprint_in_collision(grid, goal, geom):
        raise NoPathFound("goal footprint is in collision")

    search = _Search(grid, geom, kappa_max, cfg)
    steers = (-kappa_max, 0.0, kappa_max)
    start_key = search.key(start, 1)

    # node records: key -> (g, pose, direction, parent_key, samples_from_parent)
    nodes = {start_key: (0.0, start, 1, None, [])}
    open_heap = [(search.heuristic(start, goal), 0, start_key)]
    seq = 1
    closed = set()
    expansions = 0

    while open_heap:
        _, _, key = heapq.heappop(open_heap)
        if key in closed:
            continue
        closed.add(key)
        g, pose, direction, _, _ = nodes[key]

        shot = reeds_shepp_shot(grid, pose, goal, kappa_max, geom, grid.resolution)
        if shot is not None:
            return _reconstruct(nodes, key, shot)

        expansions += 1
        if expansions > cfg.max_expansions:
            raise NoPathFound(f"expansion budget ({cfg.max_expansions}) exhausted")

        base_arc = cfg.primitive_arc_factor * grid.resolution
        for steer in steers:
            for new_dir in (1, -1):
                samples = search.primitive(pose, steer, new_dir)
                if swept_collision(grid, np.asarray(samples), geom):
                    continue
                end = samples[-1]
                new_key = search.key(end, new_dir)
                if new_key in closed:
                    continue
                step_cost = base_arc * (cfg.forward_cost if new_dir == 1 else cfg.backward_cost)
                if new_dir != direction:
                    step_cost += cfg.switch_cost
                new_g = g + step_cost
                if new_key in nodes and nodes[new_key][0] <= new_g:
                    continue
                nodes[new_key] = (new_g, end, new_dir, key, samples)
                heapq.heappush(open_heap, (new_g + search.heuristic(end, goal), seq, new_key))
                seq += 1

    raise NoPathFound("open set exhausted")


def _reconstruct(nodes, key, shot):
    chain = []
    while key is not None:
        g, pose, direction, parent, samples = nodes[key]
        chain.append((pose, direction, samples))
        key = parent
    chain.reverse()
    poses = [chain[0][0]]
    dirs = [chain[0][1]]
    for pose, direction, samples in chain[1:]:
        for p in samples:
            poses.append(p)
            dirs.append(direction)
    shot_poses, shot_dirs = shot
    for p, d in zip(shot_poses[1:], shot_dirs[1:]):
        poses.append(p)
        dirs.append(d)
    if len(dirs) > 1:
        dirs[0] = dirs[1]
    return np.array(poses), np.array(dirs, dtype=int)


# -- initial-plan extraction ----------------------------------------------------


def _runs(dirs: np.ndarray) -> list[tuple[int, int, int]]:
    """(start_index, end_index, direction) for direction-constant stretches."""
    runs = []
    n = len(dirs)
    i = 1
    while i < n:
        d = dirs[i]
        j = i
        while j + 1 < n and dirs[j + 1] == d:
            j += 1
        runs.append((i - 1, j, int(d)))
        i = j + 1
    if not runs:
        runs.append((0, n - 1, int(dirs[0]) if n else 1))
    return runs


def _arc_table(poses: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(poses[:, :2], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def interpolate_pose(poses: np.ndarray, arcs: np.ndarray, s: float) -> np.ndarray:
    """Pose at arc position s: linear position, shortest-angle heading."""
    s = min(max(s, 0.0), float(arcs[-1]))
    i = int(np.searchsorted(arcs, s, side="right")) - 1
    i = min(max(i, 0), len(arcs) - 2)
    span = arcs[i + 1] - arcs[i]
    t = 0.0 if span <= 0 else (s - arcs[i]) / span
    p = poses[i, :2] * (1 - t) + poses[i + 1, :2] * t
    dth = (poses[i + 1, 2] - poses[i, 2] + math.pi) % (2 * math.pi) - math.pi
    return np.array([p[0], p[1], poses[i, 2] + t * dth])


def _speed_profile(arc: float, boundary_speed: float, ramp: float = 0.25, grid: int = 512) -> np.ndarray:
    """Cumulative arc vs normalized time for a trapezoidal speed shape.

    Segments start and end at the (small) boundary speed; placing early
    waypoints accordingly keeps the warm-start spline slow and straight
    where the flat-output singularity looms.
    """
    u = np.linspace(0.0, 1.0, grid + 1)
    ramp_shape = np.minimum(1.0, np.minimum(u / ramp, (1.0 - u) / ramp))
    # relative speed: boundary fraction + smooth rise to cruise
    rel = boundary_speed + (1.0 - boundary_speed) * np.sin(0.5 * np.pi * np.clip(ramp_shape, 0, 1)) ** 2
    s = np.concatenate([[0.0], np.cumsum(0.5 * (rel[1:] + rel[:-1]))])
    return s / s[-1] * arc


def segment_plan(
    poses: np.ndarray,
    dirs: np.ndarray,
    cfg: FrontendConfig | None = None,
    pieces: int | None = None,
) -> InitialPlan:
    """Split a pose path at direction switches and subsample waypoints.

    Each direction-constant stretch becomes one segment whose interior
    waypoints follow a trapezoidal arc profile (slow near the rest or
    gear-shift boundaries, cruising in between), one waypoint per
    planned piece, with a duration of arc_length / v_ref clamped below
    by min_duration. Stretches too short to carry a piece are merged
    into their neighbor.
    """
    cfg = cfg or FrontendConfig()
    poses = np.asarray(poses, float)
    runs = _runs(np.asarray(dirs, int))

    # merge degenerate stretches (below one grid step of arc) into neighbors
    cleaned: list[tuple[int, int, int]] = []
    for run in runs:
        i0, i1, d = run
        arc = _arc_table(poses[i0 : i1 + 1])[-1]
        if arc < 1e-6 and cleaned:
            prev = cleaned[-1]
            cleaned[-1] = (prev[0], i1, prev[2])
        elif arc < 1e-6 and not cleaned:
            continue
        else:
            cleaned.append(run)
    if not cleaned:
        cleaned = [(0, len(poses) - 1, int(dirs[0]) if len(dirs) else 1)]

    segments = []
    shift_positions = []
    shift_angles = []
    for si, (i0, i1, d) in enumerate(cleaned):
        seg_poses = poses[i0 : i1 + 1]
        arcs = _arc_table(seg_poses)
        arc = float(arcs[-1])
        m = pieces if pieces is not None else max(1, min(cfg.max_pieces, int(math.ceil(arc / cfg.piece_length))))
        duration = max(arc / cfg.v_ref, cfg.min_duration)
        boundary_frac = min(0.5, 0.05 / max(cfg.v_ref, 0.1))
        profile = _speed_profile(arc, boundary_frac) if arc > 1e-9 else np.zeros(2)
        seg = SegmentPlan(
            eta=d,
            poses=seg_poses,
            arc_length=arc,
            n_pieces=m,
            waypoints=np.empty((0, 2)),
            duration=duration,
            profile=profile,
        )
        seg.waypoints = np.array(
            [interpolate_pose(seg_poses, arcs, seg.arc_at_fraction(j / m))[:2] for j in range(1, m)]
        ).reshape(-1, 2)
        segments.append(seg)
        if si + 1 < len(cleaned):
            shift_pose = poses[i1]
            psi = shift_pose[2]
            shift_positions.append(shift_pose[:2])
            # velocity direction before the shift: along heading when the
            # ending segment drives forward, opposite otherwise
            shift_angles.append(psi if d == 1 else psi + math.pi)

    return InitialPlan(
        segments=segments,
        shift_positions=np.array(shift_positions).reshape(-1, 2),
        shift_angles=np.array(shift_angles),
    )


def constraint_seed_poses(plan: InitialPlan, n_constraint: int) -> list[list[Pose]]:
    """Per-segment seed poses at the constraint-point parameters.

    n_constraint is the number of samples per piece (lambda + 1); each
    segment yields n_pieces * n_constraint poses, junction parameters
    duplicated, matching the penalty layout. Seeds follow the same arc
    profile as the warm-start waypoints so every cell is grown where the
    initial spline actually sits.
    """
    out = []
    for seg in plan.segments:
        arcs = _arc_table(seg.poses)
        seeds = []
        lam = n_constraint - 1
        for j in range(seg.n_pieces):
            for k in range(n_constraint):
                frac = (j + (k / lam if lam > 0 else 0.0)) / seg.n_pieces
                p = interpolate_pose(seg.poses, arcs, seg.arc_at_fraction(frac))
                seeds.append((float(p[0]), float(p[1]), float(p[2])))
        out.append(seeds)
    return out
