"""Exception types shared across the planner."""


class PlannerError(Exception):
    """Base class for all planner errors."""


class SpeedSingularity(PlannerError):
    """Flat-output velocity too small to recover vehicle orientation."""


class OutOfRange(PlannerError):
    """Trajectory evaluated outside its time domain."""


class SingularSystem(PlannerError):
    """Banded coefficient system could not be factorized."""


class DegenerateEdge(PlannerError):
    """Polygon edge shorter than the degeneracy threshold."""


class SeedInCollision(PlannerError):
    """Corridor seed pose overlaps an occupied cell."""

    def __init__(self, seed_index: int, message: str | None = None):
        self.seed_index = seed_index
        super().__init__(message or f"corridor seed {seed_index} is in collision")


class NoPathFound(PlannerError):
    """Front-end search exhausted its open set or expansion budget."""


class StampOutOfHorizon(PlannerError):
    """Requested timestamp lies outside an obstacle trajectory horizon."""


class LineSearchFailure(PlannerError):
    """Line search could not find an acceptable step.

    Carries the best iterate seen so far.
    """

    def __init__(self, best_x, best_f: float, iterations: int):
        self.best_x = best_x
        self.best_f = best_f
        self.iterations = iterations
        super().__init__(
            f"line search failed after {iterations} iterations (best objective {best_f:.6g})"
        )


class ParseError(PlannerError):
    """Scenario file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(PlannerError):
    """Scenario content violates a schema rule."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
