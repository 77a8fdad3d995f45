"""Piecewise-quintic trajectory representation and the banded coefficient solve.

A trajectory is a list of direction-tagged segments. Each segment holds M
uniform-duration quintic pieces whose coefficients are the unique solution
of a banded linear system pinning the head/tail states, the interior
waypoints, and derivative continuity up to order 4 at piece junctions.
The same system, transposed, back-propagates cost gradients from
coefficients to waypoints, durations and boundary states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import OutOfRange, SingularSystem

# Quintic pieces: minimum third-derivative control effort.
S_ORDER = 3
NCOEF = 2 * S_ORDER  # rows per piece
KL, KU = 4, 2  # structural band of the coefficient system


def basis(t: float, order: int) -> np.ndarray:
    """Monomial basis (1, t, ..., t^5) differentiated `order` times."""
    b = np.zeros(NCOEF)
    for i in range(order, NCOEF):
        f = 1.0
        for k in range(order):
            f *= i - k
        b[i] = f * t ** (i - order)
    return b


def basis_stack(ts: np.ndarray, order: int) -> np.ndarray:
    """basis() vectorized over a time array; returns (len(ts), 6)."""
    ts = np.asarray(ts, float)
    out = np.zeros((ts.shape[0], NCOEF))
    for i in range(order, NCOEF):
        f = 1.0
        for k in range(order):
            f *= i - k
        out[:, i] = f * ts ** (i - order)
    return out


@dataclass(frozen=True)
class BoundaryState:
    """Position, velocity and acceleration pinned at a segment end."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def as_rows(self) -> np.ndarray:
        return np.vstack([self.position, self.velocity, self.acceleration]).astype(float)


@dataclass
class Segment:
    """M uniform-time quintic pieces with one travel direction."""

    coeffs: np.ndarray  # (M, 6, 2)
    delta_t: float
    eta: int = 1

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != (NCOEF, 2):
            raise ValueError("coeffs must have shape (M, 6, 2)")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")

    @property
    def n_pieces(self) -> int:
        return self.coeffs.shape[0]

    @property
    def duration(self) -> float:
        return self.n_pieces * self.delta_t

    def eval_local(self, t: float, order: int = 0) -> np.ndarray:
        """Evaluate within the segment at local time t in [0, duration]."""
        j = min(int(t / self.delta_t), self.n_pieces - 1)
        tl = t - j * self.delta_t
        return basis(tl, order) @ self.coeffs[j]


@dataclass
class FlatTrajectory:
    """Concatenated segments covering [0, total_duration]."""

    segments: list[Segment]
    start_stamps: np.ndarray = field(init=False)

    def __post_init__(self):
        durs = [s.duration for s in self.segments]
        self.start_stamps = np.concatenate([[0.0], np.cumsum(durs)])

    @property
    def total_duration(self) -> float:
        return float(self.start_stamps[-1])

    def locate(self, t: float) -> tuple[int, float]:
        """Segment index and local time for absolute time t."""
        if t < 0.0 or t > self.total_duration + 1e-12:
            raise OutOfRange(f"t={t} outside [0, {self.total_duration}]")
        t = min(t, self.total_duration)
        i = int(np.searchsorted(self.start_stamps, t, side="right")) - 1
        i = min(i, len(self.segments) - 1)
        return i, t - self.start_stamps[i]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Order-th derivative of the flat output at absolute time t."""
        i, tl = self.locate(t)
        return self.segments[i].eval_local(tl, order)


# -- banded system assembly ---------------------------------------------------


_FACT = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0]
_AB_CACHE: dict = {}


def _assemble_banded(n_pieces: int, dt: float) -> np.ndarray:
    """Banded storage (KL+KU+1 rows) of the coefficient matrix.

    Junction row blocks repeat with a fixed in-band row index per
    (derivative order, column-within-piece) pair, so the whole matrix
    fills with strided slice writes. Cached per (n_pieces, dt) since the
    solve and its transposed back-propagation share one assembly.
    """
    key = (n_pieces, dt)
    cached = _AB_CACHE.get(key)
    if cached is not None:
        return cached
    n = NCOEF * n_pieces
    m = n_pieces
    ab = np.zeros((KL + KU + 1, n))
    bd = [basis(dt, d) for d in range(6)]

    # head state rows: orders 0..2 at local t=0
    ab[KU, 0] = 1.0
    ab[KU, 1] = 1.0
    ab[KU, 2] = 2.0

    if m > 1:
        last = NCOEF * (m - 1)  # exclude the final piece from junction strides
        for k in range(NCOEF):
            # waypoint rows: in-band row 5-k across all junctions
            ab[5 - k, k:last:NCOEF] = bd[0][k]
        for d in range(5):
            for k in range(d, NCOEF):
                ab[6 + d - k, k:last:NCOEF] = bd[d][k]
            ab[0, NCOEF + d :: NCOEF] = -_FACT[d]
    c0 = NCOEF * (m - 1)
    for d in range(3):
        r = n - 3 + d
        for k in range(d, NCOEF):
            ab[KU + r - (c0 + k), c0 + k] = bd[d][k]
    if len(_AB_CACHE) > 64:
        _AB_CACHE.clear()
    _AB_CACHE[key] = ab
    ab.setflags(write=False)
    return ab


def _transpose_banded(ab: np.ndarray) -> np.ndarray:
    """Banded storage of the transposed matrix (bands swap to (KU, KL))."""
    n = ab.shape[1]
    abt = np.zeros((KL + KU + 1, n))
    # entry a[i, i+o] lives at ab[KU - o, i + o]; transpose flips o.
    for o in range(-KU, KL + 1):
        if o >= 0:
            abt[KL - o, o:n] = ab[KU + o, : n - o]
        else:
            abt[KL - o, : n + o] = ab[KU + o, -o:]
    return abt


def _rhs(head: np.ndarray, tail: np.ndarray, waypoints: np.ndarray, n_pieces: int) -> np.ndarray:
    b = np.zeros((NCOEF * n_pieces, 2))
    b[0:3] = head
    for j in range(n_pieces - 1):
        b[S_ORDER + 6 * j] = waypoints[j]
    b[-3:] = tail
    return b


def minco_solve(
    head: BoundaryState,
    tail: BoundaryState,
    waypoints: np.ndarray,
    duration: float,
    eta: int = 1,
) -> Segment:
    """Solve for the minimum-effort quintic spline through the waypoints.

    waypoints is an (M-1, 2) array of interior junction positions (empty
    for a single piece). The solved spline matches head/tail position,
    velocity and acceleration and is C^4 across junctions.
    """
    waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    n_pieces = waypoints.shape[0] + 1
    if duration <= 0:
        raise SingularSystem(f"segment duration {duration} is not positive")
    dt = duration / n_pieces
    ab = _assemble_banded(n_pieces, dt)
    b = _rhs(head.as_rows(), tail.as_rows(), waypoints, n_pieces)
    try:
        x = solve_banded((KL, KU), ab, b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("banded factorization produced non-finite coefficients")
    return Segment(coeffs=x.reshape(n_pieces, NCOEF, 2), delta_t=dt, eta=eta)


# -- control effort ------------------------------------------------------------


def _effort_gram(dt: float) -> np.ndarray:
    """Gram matrix of the third-derivative basis over one piece."""
    q = np.zeros((NCOEF, NCOEF))
    q[3, 3] = 36.0 * dt
    q[3, 4] = q[4, 3] = 72.0 * dt**2
    q[3, 5] = q[5, 3] = 120.0 * dt**3
    q[4, 4] = 192.0 * dt**3
    q[4, 5] = q[5, 4] = 360.0 * dt**4
    q[5, 5] = 720.0 * dt**5
    return q


def control_effort(seg: Segment, weight: np.ndarray | None = None):
    """Integrated third-derivative cost of a segment.

    Returns (cost, grad_coeffs, grad_duration) where grad_duration is the
    direct partial with the coefficients held fixed; the time-regularization
    weight is added by the caller.
    """
    w = np.ones(2) if weight is None else np.asarray(np.diag(weight) if np.ndim(weight) == 2 else weight, float)
    q = _effort_gram(seg.delta_t)
    qc = np.einsum("ck,mkd->mcd", q, seg.coeffs)
    cost = float(np.einsum("mcd,mcd,d->", seg.coeffs, qc, w))
    grad_c = 2.0 * qc * w
    end_jerk = np.einsum("c,mcd->md", basis(seg.delta_t, S_ORDER), seg.coeffs)
    g_t = float(np.einsum("md,d->", end_jerk**2, w)) / seg.n_pieces
    return cost, grad_c, g_t


# -- gradient back-propagation --------------------------------------------------


def minco_backprop(seg: Segment, grad_c: np.ndarray, grad_t_direct: float = 0.0):
    """Propagate a coefficient-space gradient to the solve inputs.

    Returns (grad_waypoints, grad_duration, grad_head, grad_tail) where the
    boundary gradients are (3, 2) arrays over (position, velocity,
    acceleration) rows. grad_t_direct is the explicit duration partial of
    the cost (coefficients held fixed) and is added to the propagated term.
    """
    n_pieces = seg.n_pieces
    dt = seg.delta_t
    n = NCOEF * n_pieces
    ab = _assemble_banded(n_pieces, dt)
    abt = _transpose_banded(ab)
    rhs = np.asarray(grad_c, float).reshape(n, 2)
    try:
        g = solve_banded((KU, KL), abt, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystem(str(exc)) from exc

    grad_head = g[0:3].copy()
    grad_tail = g[-3:].copy()
    grad_q = np.array([g[S_ORDER + 6 * j] for j in range(n_pieces - 1)]).reshape(-1, 2)

    # duration sensitivity through the matrix entries: rows evaluated at dt
    # differentiate to the next basis order, scaled by d(dt)/dT = 1/M.
    bd1 = [basis(dt, d + 1) for d in range(5)]
    dmc = np.zeros((n, 2))
    r = S_ORDER
    for j in range(n_pieces - 1):
        c = seg.coeffs[j]
        dmc[r] = bd1[0] @ c
        r += 1
        for d in range(5):
            dmc[r] = bd1[d] @ c
            r += 1
    c = seg.coeffs[-1]
    for d in range(3):
        dmc[r] = bd1[d] @ c
        r += 1
    grad_t = grad_t_direct - float(np.sum(g * dmc)) / n_pieces
    return grad_q, grad_t, grad_head, grad_tail
