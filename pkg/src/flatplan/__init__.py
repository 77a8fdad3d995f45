"""Spatial-temporal trajectory planning for car-like robots.

The planner parameterizes trajectories as piecewise quintics in the flat
output (rear-axle position), searches a kinodynamic initial path with
hybrid A*, builds a convex safe corridor, and jointly optimizes waypoints
and per-segment durations under feasibility and obstacle constraints.
"""

from .errors import (
    DegenerateEdge,
    LineSearchFailure,
    NoPathFound,
    OutOfRange,
    ParseError,
    PlannerError,
    SeedInCollision,
    SingularSystem,
    SpeedSingularity,
    StampOutOfHorizon,
    ValidationError,
)
from .flat_model import (
    B,
    BACKWARD,
    EPS_SPEED,
    FORWARD,
    FlatPoint,
    VehicleGeometry,
    VehicleState,
    recover_state,
    rotation_from_flat,
)
from .poly_traj import BoundaryState, FlatTrajectory, Segment, control_effort, minco_backprop, minco_solve

__all__ = [
    "B",
    "BACKWARD",
    "EPS_SPEED",
    "FORWARD",
    "BoundaryState",
    "DegenerateEdge",
    "FlatPoint",
    "FlatTrajectory",
    "LineSearchFailure",
    "NoPathFound",
    "OutOfRange",
    "ParseError",
    "PlannerError",
    "SeedInCollision",
    "Segment",
    "SingularSystem",
    "SpeedSingularity",
    "StampOutOfHorizon",
    "ValidationError",
    "VehicleGeometry",
    "VehicleState",
    "control_effort",
    "minco_backprop",
    "minco_solve",
    "recover_state",
    "rotation_from_flat",
]

__version__ = "0.1.0"
