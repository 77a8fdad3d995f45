"""Shortest bounded-curvature curves with reversals.

Candidate paths are enumerated over the standard word families
(CSC, CCC, CCCC, CCSC, CCSCC) with time-flip, reflection and backwards
transforms, in curvature-normalized coordinates. Segment parameters are
signed arc lengths: positive drives forward, negative reverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_ZERO = 1e-10
_PI = math.pi

LEFT, STRAIGHT, RIGHT = "L", "S", "R"

_WORDS = {
    "LRL": (LEFT, RIGHT, LEFT),
    "RLR": (RIGHT, LEFT, RIGHT),
    "LRLR": (LEFT, RIGHT, LEFT, RIGHT),
    "RLRL": (RIGHT, LEFT, RIGHT, LEFT),
    "LRSL": (LEFT, RIGHT, STRAIGHT, LEFT),
    "RLSR": (RIGHT, LEFT, STRAIGHT, RIGHT),
    "LSRL": (LEFT, STRAIGHT, RIGHT, LEFT),
    "RSLR": (RIGHT, STRAIGHT, LEFT, RIGHT),
    "LRSR": (LEFT, RIGHT, STRAIGHT, RIGHT),
    "RLSL": (RIGHT, LEFT, STRAIGHT, LEFT),
    "RSRL": (RIGHT, STRAIGHT, RIGHT, LEFT),
    "LSLR": (LEFT, STRAIGHT, LEFT, RIGHT),
    "LSR": (LEFT, STRAIGHT, RIGHT),
    "RSL": (RIGHT, STRAIGHT, LEFT),
    "LSL": (LEFT, STRAIGHT, LEFT),
    "RSR": (RIGHT, STRAIGHT, RIGHT),
    "LRSLR": (LEFT, RIGHT, STRAIGHT, LEFT, RIGHT),
    "RLSRL": (RIGHT, LEFT, STRAIGHT, RIGHT, LEFT),
}


@dataclass(frozen=True)
class RSPath:
    """A candidate curve: segment types plus signed normalized lengths."""

    word: str
    params: tuple[float, ...]

    @property
    def length(self) -> float:
        return sum(abs(p) for p in self.params)

    @property
    def segments(self) -> tuple[str, ...]:
        return _WORDS[self.word]


def _mod2pi(x: float) -> float:
    v = math.fmod(x, 2.0 * _PI)
    if v < -_PI:
        v += 2.0 * _PI
    elif v > _PI:
        v -= 2.0 * _PI
    return v


def _polar(x: float, y: float) -> tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


def _tau_omega(u, v, xi, eta, phi):
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + _PI) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


# base formulas in normalized coordinates


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -_ZERO:
        v = _mod2pi(phi - t)
        if v >= -_ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    if u1 * u1 >= 4.0:
        u = math.sqrt(u1 * u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _mod2pi(t1 + theta)
        v = _mod2pi(t - phi)
        if t >= -_ZERO and v >= -_ZERO:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _mod2pi(theta + 0.5 * u + _PI)
        v = _mod2pi(phi - t + u)
        if t >= -_ZERO and u <= _ZERO:
            return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.hypot(xi, eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -_ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -0.5 * _PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _mod2pi(theta + math.atan2(r, -2.0))
        v = _mod2pi(phi - 0.5 * _PI - t)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _mod2pi(t + 0.5 * _PI - phi)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= _ZERO:
            t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _mod2pi(t - phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _variants(fn, x, y, phi, word_pos, word_neg, arrange):
    """Apply time-flip and reflection transforms of one base formula."""
    out = []
    for sx, sy, sphi, word, sign in (
        (1.0, 1.0, 1.0, word_pos, 1.0),
        (-1.0, 1.0, -1.0, word_pos, -1.0),  # time flip
        (1.0, -1.0, -1.0, word_neg, 1.0),  # reflect
        (-1.0, -1.0, 1.0, word_neg, -1.0),  # both
    ):
        res = fn(sx * x, sy * y, sphi * phi)
        if res is not None:
            t, u, v = res
            out.append(RSPath(word, tuple(sign * p for p in arrange(t, u, v))))
    return out


def candidate_paths(x: float, y: float, phi: float) -> list[RSPath]:
    """All feasible words for the normalized goal (x, y, phi)."""
    paths: list[RSPath] = []
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    tuv = lambda t, u, v: (t, u, v)
    vut = lambda t, u, v: (v, u, t)

    # CSC
    paths += _variants(_lp_sp_lp, x, y, phi, "LSL", "RSR", tuv)
    paths += _variants(_lp_sp_rp, x, y, phi, "LSR", "RSL", tuv)
    # CCC
    paths += _variants(_lp_rm_l, x, y, phi, "LRL", "RLR", tuv)
    paths += _variants(_lp_rm_l, xb, yb, phi, "LRL", "RLR", vut)
    # CCCC
    paths += _variants(_lp_rup_lum_rm, x, y, phi, "LRLR", "RLRL", lambda t, u, v: (t, u, -u, v))
    paths += _variants(_lp_rum_lum_rp, x, y, phi, "LRLR", "RLRL", lambda t, u, v: (t, u, u, v))
    # CCSC
    half = 0.5 * _PI
    paths += _variants(_lp_rm_sm_lm, x, y, phi, "LRSL", "RLSR", lambda t, u, v: (t, -half, u, v))
    paths += _variants(_lp_rm_sm_lm, xb, yb, phi, "LSRL", "RSLR", lambda t, u, v: (v, u, -half, t))
    paths += _variants(_lp_rm_sm_rm, x, y, phi, "LRSR", "RLSL", lambda t, u, v: (t, -half, u, v))
    paths += _variants(_lp_rm_sm_rm, xb, yb, phi, "RSRL", "LSLR", lambda t, u, v: (v, u, -half, t))
    # CCSCC
    paths += _variants(
        _lp_rm_s_lm_rp, x, y, phi, "LRSLR", "RLSRL", lambda t, u, v: (t, -half, u, -half, v)
    )
    return paths


def all_candidates(start, goal, kappa_max: float) -> list[RSPath]:
    """Candidate words between world poses, lengths still normalized."""
    dx = goal[0] - start[0]
    dy = goal[1] - start[1]
    c, s = math.cos(start[2]), math.sin(start[2])
    x = (c * dx + s * dy) * kappa_max
    y = (-s * dx + c * dy) * kappa_max
    phi = _mod2pi(goal[2] - start[2])
    return candidate_paths(x, y, phi)


def shortest_path(start, goal, kappa_max: float) -> RSPath | None:
    """Shortest candidate between world poses, or None if no word fits."""
    cands = all_candidates(start, goal, kappa_max)
    if not cands:
        return None
    return min(cands, key=lambda p: p.length)


def sample_path(start, path: RSPath, kappa_max: float, step: float):
    """Sample a candidate into world poses with direction flags.

    Returns (poses, directions): poses is an (n, 3) array, and
    directions[i] in {-1, +1} is the travel direction of the step
    arriving at poses[i] (directions[0] repeats the first step).
    """
    import numpy as np

    radius = 1.0 / kappa_max
    pose_blocks = [np.array([[start[0], start[1], start[2]]])]
    dir_blocks = [np.array([1], dtype=int)]
    x, y, theta = float(start[0]), float(start[1]), float(start[2])
    for seg_type, param in zip(path.segments, path.params):
        if abs(param) < _ZERO:
            continue
        seg_len = abs(param) * radius
        direction = 1 if param > 0 else -1
        n = max(1, int(math.ceil(seg_len / step)))
        s = np.linspace(seg_len / n, seg_len, n) * direction  # signed arc offsets
        if seg_type == STRAIGHT:
            xs = x + s * math.cos(theta)
            ys = y + s * math.sin(theta)
            ths = np.full(n, theta)
        else:
            side = 1.0 if seg_type == LEFT else -1.0
            cx = x - side * radius * math.sin(theta)
            cy = y + side * radius * math.cos(theta)
            ths = theta + side * s * kappa_max
            xs = cx + side * radius * np.sin(ths)
            ys = cy - side * radius * np.cos(ths)
        pose_blocks.append(np.stack([xs, ys, ths], axis=1))
        dir_blocks.append(np.full(n, direction, dtype=int))
        x, y, theta = float(xs[-1]), float(ys[-1]), float(ths[-1])
    poses = np.concatenate(pose_blocks)
    dirs = np.concatenate(dir_blocks)
    if dirs.shape[0] > 1:
        dirs[0] = dirs[1]
    return poses, dirs
