"""Scenario file schema: loading, validation and round-trip saving.

A scenario is a single YAML document holding the grid spec, static
obstacle polygons (rasterized on load), start and goal states, dynamic
obstacles as piecewise-polynomial pose trajectories, the vehicle
geometry, and the frontend/constraints/solver config blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .corridor import OccupancyGrid
from .errors import ParseError, ValidationError
from .flat_model import VehicleGeometry
from .frontend import FrontendConfig
from .geometry import validate_convex_clockwise
from .optimizer import SolverConfig
from .penalties import ConstraintConfig, DynamicObstacle, PoseTrajectory

Pose = tuple[float, float, float]

_DEFAULT_VEHICLE = {
    "wheelbase": 2.0,
    "vertices": [[2.45, 0.85], [2.45, -0.85], [-0.45, -0.85], [-0.45, 0.85]],
    "inflation": 0.0,
}


@dataclass
class Scenario:
    name: str
    grid: OccupancyGrid
    static_polygons: list
    start_pose: Pose
    goal_pose: Pose
    geom: VehicleGeometry
    dynamic_obstacles: list
    frontend: FrontendConfig
    constraints: ConstraintConfig
    solver: SolverConfig
    start_speed: float = 0.0
    start_accel: float = 0.0
    goal_speed: float = 0.0
    goal_accel: float = 0.0
    occupied_cells: list = field(default_factory=list)


def _require(data, key, field_name, kind=None):
    if key not in data:
        raise ValidationError(field_name, "missing required field")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(field_name, f"expected {kind}")
    return value


def _state(data, prefix):
    for key in ("x", "y", "theta"):
        if key not in data:
            raise ValidationError(f"{prefix}.{key}", "missing required field")
    pose = (float(data["x"]), float(data["y"]), float(data["theta"]))
    return pose, float(data.get("v", 0.0)), float(data.get("a", 0.0))


def _positive(value, field_name):
    v = float(value)
    if v <= 0:
        raise ValidationError(field_name, "must be positive")
    return v


def _constraint_config(data, geom) -> ConstraintConfig:
    data = dict(data or {})
    if "phi_m" in data and "kappa_m" not in data:
        phi_m = _positive(data.pop("phi_m"), "constraints.phi_m")
        data["kappa_m"] = math.tan(phi_m) / geom.wheelbase
    kwargs = {}
    for key, attr in (
        ("v_m", "v_m"),
        ("a_tm", "a_tm"),
        ("a_nm", "a_nm"),
        ("kappa_m", "kappa_m"),
        ("d_m", "d_m"),
        ("alpha", "alpha"),
        ("w_T", "w_t"),
    ):
        if key in data:
            kwargs[attr] = float(data[key])
    if "lambda" in data:
        kwargs["n_lambda"] = int(data["lambda"])
    if "weights" in data:
        kwargs["weights"] = {k: float(v) for k, v in data["weights"].items()}
    for name in ("v_m", "a_tm", "a_nm", "kappa_m"):
        if name in kwargs and kwargs[name] <= 0:
            raise ValidationError(f"constraints.{name}", "must be positive")
    if "n_lambda" in kwargs and kwargs["n_lambda"] < 1:
        raise ValidationError("constraints.lambda", "must be >= 1")
    try:
        return ConstraintConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError("constraints", str(exc))


def _frontend_config(data) -> FrontendConfig:
    data = dict(data or {})
    kwargs = {}
    for key in (
        "xy_resolution",
        "heading_bins",
        "primitive_arc_factor",
        "forward_cost",
        "backward_cost",
        "switch_cost",
        "max_expansions",
        "v_ref",
        "piece_length",
        "min_duration",
        "max_pieces",
        "corridor_extent",
        "corridor_long_extent",
    ):
        if key in data:
            kwargs[key] = type(getattr(FrontendConfig(), key))(data[key])
    cfg = FrontendConfig(**kwargs)
    if cfg.v_ref <= 0:
        raise ValidationError("frontend.v_ref", "must be positive")
    if cfg.xy_resolution <= 0:
        raise ValidationError("frontend.xy_resolution", "must be positive")
    return cfg


def _solver_config(data) -> SolverConfig:
    data = dict(data or {})
    kwargs = {}
    for key, attr in (
        ("tolerance", "tolerance"),
        ("memory", "memory"),
        ("max_iterations", "max_iterations"),
        ("c1", "c1"),
        ("c2", "c2"),
        ("shift_speed", "shift_speed"),
        ("stagnation_tol", "stagnation_tol"),
    ):
        if key in data:
            cast = int if attr in ("memory", "max_iterations") else float
            kwargs[attr] = cast(data[key])
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError("solver", str(exc))


def _vehicle(data) -> VehicleGeometry:
    data = {**_DEFAULT_VEHICLE, **(data or {})}
    verts = np.asarray(data["vertices"], dtype=float)
    try:
        validate_convex_clockwise(verts, "vehicle.vertices")
    except Exception as exc:
        raise ValidationError("vehicle.vertices", str(exc))
    wheelbase = _positive(data["wheelbase"], "vehicle.wheelbase")
    return VehicleGeometry(wheelbase=wheelbase, body_vertices=verts, inflation=float(data["inflation"]))


def _dynamic_obstacles(items) -> list:
    out = []
    for i, item in enumerate(items or []):
        verts = np.asarray(_require(item, "vertices", f"dynamic_obstacles[{i}].vertices"), float)
        try:
            validate_convex_clockwise(verts, f"dynamic_obstacles[{i}].vertices")
        except Exception as exc:
            raise ValidationError(f"dynamic_obstacles[{i}].vertices", str(exc))
        pieces = _require(item, "pieces", f"dynamic_obstacles[{i}].pieces", list)
        durations = []
        coeffs = []
        for j, piece in enumerate(pieces):
            durations.append(_positive(piece.get("duration", 0.0), f"dynamic_obstacles[{i}].pieces[{j}].duration"))
            cx = np.asarray(piece.get("x", [0.0]), float)
            cy = np.asarray(piece.get("y", [0.0]), float)
            ch = np.asarray(piece.get("heading", [0.0]), float)
            deg = max(cx.size, cy.size, ch.size)
            block = np.zeros((deg, 3))
            block[: cx.size, 0] = cx
            block[: cy.size, 1] = cy
            block[: ch.size, 2] = ch
            coeffs.append(block)
        out.append(DynamicObstacle(body_vertices=verts, pose_traj=PoseTrajectory(durations, coeffs)))
    return out


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ValidationError("root", "scenario document must be a mapping")
    grid_spec = _require(data, "grid", "grid", dict)
    resolution = _positive(grid_spec.get("resolution", 0.0), "grid.resolution")
    width = int(_require(grid_spec, "width", "grid.width"))
    height = int(_require(grid_spec, "height", "grid.height"))
    if width <= 0 or height <= 0:
        raise ValidationError("grid.width", "grid dimensions must be positive")
    origin = np.asarray(grid_spec.get("origin", [0.0, 0.0]), float)
    grid = OccupancyGrid(resolution=resolution, origin=origin, width=width, height=height)

    occupied = grid_spec.get("occupied", [])
    if occupied:
        idx = np.asarray(occupied, dtype=int)
        if idx.ndim != 2 or idx.shape[1] != 2:
            raise ValidationError("grid.occupied", "expected a list of [i, j] cell indices")
        if np.any(idx < 0) or np.any(idx[:, 0] >= width) or np.any(idx[:, 1] >= height):
            raise ValidationError("grid.occupied", "cell index out of bounds")
        grid.occupy_cells(idx)

    polygons = []
    for i, poly in enumerate(data.get("obstacles", []) or []):
        verts = np.asarray(poly, dtype=float)
        try:
            validate_convex_clockwise(verts, f"obstacles[{i}]")
        except Exception as exc:
            raise ValidationError(f"obstacles[{i}]", str(exc))
        polygons.append(verts)
        grid.occupy_polygon(verts)

    geom = _vehicle(data.get("vehicle"))
    start_pose, start_v, start_a = _state(_require(data, "start", "start", dict), "start")
    goal_pose, goal_v, goal_a = _state(_require(data, "goal", "goal", dict), "goal")
    constraints = _constraint_config(data.get("constraints"), geom)
    frontend = _frontend_config(data.get("frontend"))
    solver = _solver_config(data.get("solver"))
    obstacles = _dynamic_obstacles(data.get("dynamic_obstacles"))

    return Scenario(
        name=str(data.get("name", name)),
        grid=grid,
        static_polygons=polygons,
        start_pose=start_pose,
        goal_pose=goal_pose,
        geom=geom,
        dynamic_obstacles=obstacles,
        frontend=frontend,
        constraints=constraints,
        solver=solver,
        start_speed=start_v,
        start_accel=start_a,
        goal_speed=goal_v,
        goal_accel=goal_a,
        occupied_cells=[[int(i), int(j)] for i, j in (occupied or [])],
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read scenario file: {exc}")
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ParseError(str(exc), line=line)
    if data is None:
        raise ParseError("scenario file is empty")
    import os

    return scenario_from_dict(data, name=os.path.splitext(os.path.basename(str(path)))[0])


def scenario_to_dict(s: Scenario) -> dict:
    def floats(arr):
        return [[float(v) for v in row] for row in np.asarray(arr)]

    data = {
        "name": s.name,
        "grid": {
            "resolution": float(s.grid.resolution),
            "origin": [float(v) for v in s.grid.origin],
            "width": int(s.grid.width),
            "height": int(s.grid.height),
        },
        "obstacles": [floats(p) for p in s.static_polygons],
        "start": {
            "x": s.start_pose[0],
            "y": s.start_pose[1],
            "theta": s.start_pose[2],
            "v": s.start_speed,
            "a": s.start_accel,
        },
        "goal": {
            "x": s.goal_pose[0],
            "y": s.goal_pose[1],
            "theta": s.goal_pose[2],
            "v": s.goal_speed,
            "a": s.goal_accel,
        },
        "vehicle": {
            "wheelbase": float(s.geom.wheelbase),
            "vertices": floats(s.geom.body_vertices),
            "inflation": float(s.geom.inflation),
        },
        "dynamic_obstacles": [
            {
                "vertices": floats(o.body_vertices),
                "pieces": [
                    {
                        "duration": float(d),
                        "x": [float(v) for v in c[:, 0]],
                        "y": [float(v) for v in c[:, 1]],
                        "heading": [float(v) for v in c[:, 2]],
                    }
                    for d, c in zip(o.pose_traj.durations, o.pose_traj.coeffs)
                ],
            }
            for o in s.dynamic_obstacles
        ],
        "frontend": {
            "xy_resolution": s.frontend.xy_resolution,
            "heading_bins": s.frontend.heading_bins,
            "primitive_arc_factor": s.frontend.primitive_arc_factor,
            "forward_cost": s.frontend.forward_cost,
            "backward_cost": s.frontend.backward_cost,
            "switch_cost": s.frontend.switch_cost,
            "max_expansions": s.frontend.max_expansions,
            "v_ref": s.frontend.v_ref,
            "piece_length": s.frontend.piece_length,
            "min_duration": s.frontend.min_duration,
            "max_pieces": s.frontend.max_pieces,
            "corridor_extent": s.frontend.corridor_extent,
            "corridor_long_extent": s.frontend.corridor_long_extent,
        },
        "constraints": {
            "v_m": s.constraints.v_m,
            "a_tm": s.constraints.a_tm,
            "a_nm": s.constraints.a_nm,
            "kappa_m": s.constraints.kappa_m,
            "d_m": s.constraints.d_m,
            "lambda": s.constraints.n_lambda,
            "alpha": s.constraints.alpha,
            "w_T": s.constraints.w_t,
            "weights": {k: float(v) for k, v in s.constraints.weights.items()},
        },
        "solver": {
            "tolerance": s.solver.tolerance,
            "memory": s.solver.memory,
            "max_iterations": s.solver.max_iterations,
            "c1": s.solver.c1,
            "c2": s.solver.c2,
            "shift_speed": s.solver.shift_speed,
            "stagnation_tol": s.solver.stagnation_tol,
        },
    }
    if s.occupied_cells:
        data["grid"]["occupied"] = s.occupied_cells
    return data


def save_scenario(s: Scenario, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(s), fh, sort_keys=False)
