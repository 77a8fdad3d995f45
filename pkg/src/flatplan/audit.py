"""Post-hoc trajectory auditing, metrics and state sampling.

The audit re-checks a stored trajectory at high sampling density with
exact geometry: unsmoothed signed distances against moving obstacles and
footprint containment against the corridor, alongside the dynamic
feasibility classes in native units (m/s, m/s^2, 1/m, m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .corridor import Corridor
from .errors import ParseError
from .flat_model import EPS_SPEED, VehicleGeometry
from .geometry import sd_exact
from .poly_traj import FlatTrajectory, Segment, basis_stack


@dataclass
class AuditReport:
    """Worst-case violations per constraint class, in native units."""

    violations: dict
    worst_times: dict
    min_dynamic_distance: float | None = None
    samples: int = 0

    def max_violation(self) -> float:
        if not self.violations:
            return 0.0
        return max(self.violations.values())

    def ok(self, tolerance: float = 1e-2) -> bool:
        return self.max_violation() <= tolerance


def sample_states(traj: FlatTrajectory, times: np.ndarray):
    """Vehicle states at the given times (vectorized, clamped speeds).

    Returns a dict of arrays: x, y, theta, v, a_t, a_n, kappa, phi,
    segment, eta, plus the raw derivatives sigma1..sigma3.
    """
    times = np.asarray(times, float)
    n = times.shape[0]
    out = {
        "x": np.empty(n),
        "y": np.empty(n),
        "sigma1": np.empty((n, 2)),
        "sigma2": np.empty((n, 2)),
        "sigma3": np.empty((n, 2)),
        "segment": np.empty(n, dtype=int),
        "eta": np.empty(n, dtype=int),
    }
    for k, t in enumerate(times):
        i, tl = traj.locate(float(t))
        seg = traj.segments[i]
        j = min(int(tl / seg.delta_t), seg.n_pieces - 1)
        tp = tl - j * seg.delta_t
        b = basis_stack(np.array([tp]), 0)[0]
        out["x"][k], out["y"][k] = b @ seg.coeffs[j]
        for d, key in ((1, "sigma1"), (2, "sigma2"), (3, "sigma3")):
            out[key][k] = basis_stack(np.array([tp]), d)[0] @ seg.coeffs[j]
        out["segment"][k] = i
        out["eta"][k] = seg.eta

    s1 = out["sigma1"]
    s2 = out["sigma2"]
    eta = out["eta"]
    norms = np.maximum(np.linalg.norm(s1, axis=1), EPS_SPEED)
    cross = s1[:, 0] * s2[:, 1] - s1[:, 1] * s2[:, 0]
    dot = np.einsum("ni,ni->n", s1, s2)
    out["v"] = eta * norms
    out["theta"] = np.arctan2(eta * s1[:, 1], eta * s1[:, 0])
    out["a_t"] = eta * dot / norms
    out["a_n"] = eta * cross / norms
    out["kappa"] = eta * cross / norms**3
    return out


def check_trajectory(
    traj: FlatTrajectory,
    scenario,
    corridor: Corridor | None = None,
    oversample: int = 10,
) -> AuditReport:
    """Audit a trajectory at oversample x the optimizer's sampling density.

    Violations are reported in native units: (speed - v_m) in m/s,
    (|a| - a_max) in m/s^2, (|kappa| - kappa_m) in 1/m, containment
    overshoot in m, and (d_m - exact signed distance) in m for moving
    obstacles. Corridor containment is checked against the union of the
    cells adjacent to each sample.
    """
    cfg = scenario.constraints
    geom: VehicleGeometry = scenario.geom
    lam = cfg.n_lambda
    dense = oversample * lam

    violations = {"velocity": -np.inf, "accel_t": -np.inf, "accel_n": -np.inf, "curvature": -np.inf}
    worst_times = {k: 0.0 for k in violations}
    if corridor is not None:
        violations["corridor"] = -np.inf
        worst_times["corridor"] = 0.0
    if scenario.dynamic_obstacles:
        violations["dynamic"] = -np.inf
        worst_times["dynamic"] = 0.0
    min_sd = np.inf
    n_samples = 0

    cell_offset = 0
    for i, seg in enumerate(traj.segments):
        for j in range(seg.n_pieces):
            tl = np.linspace(0.0, seg.delta_t, dense + 1)
            b = [basis_stack(tl, d) for d in range(4)]
            s0 = b[0] @ seg.coeffs[j]
            s1 = b[1] @ seg.coeffs[j]
            s2 = b[2] @ seg.coeffs[j]
            t_abs = traj.start_stamps[i] + j * seg.delta_t + tl
            n_samples += tl.shape[0]

            norms = np.maximum(np.linalg.norm(s1, axis=1), EPS_SPEED)
            speed_over = norms - cfg.v_m
            dot = np.einsum("ni,ni->n", s1, s2)
            cross = s1[:, 0] * s2[:, 1] - s1[:, 1] * s2[:, 0]
            at_over = np.abs(dot) / norms - cfg.a_tm
            an_over = np.abs(cross) / norms - cfg.a_nm
            kap_over = np.abs(cross) / norms**3 - cfg.kappa_m
            for key, arr in (
                ("velocity", speed_over),
                ("accel_t", at_over),
                ("accel_n", an_over),
                ("curvature", kap_over),
            ):
                k = int(np.argmax(arr))
                if arr[k] > violations[key]:
                    violations[key] = float(arr[k])
                    worst_times[key] = float(t_abs[k])

            rot = np.empty((tl.shape[0], 2, 2))
            rot[:, 0, 0] = s1[:, 0]
            rot[:, 1, 0] = s1[:, 1]
            rot[:, 0, 1] = -s1[:, 1]
            rot[:, 1, 1] = s1[:, 0]
            rot = seg.eta * rot / norms[:, None, None]
            verts = s0[:, None, :] + np.einsum("pij,ej->pei", rot, geom.body_vertices)

            if corridor is not None:
                for k in range(tl.shape[0]):
                    # sample parameter between constraint cells k0 and k0+1
                    u = k / oversample
                    k0 = int(np.floor(u))
                    k1 = min(int(np.ceil(u)), lam)
                    best = np.inf
                    for kc in {k0, k1}:
                        idx = cell_offset + j * (lam + 1) + kc
                        a = corridor.normals[idx]
                        bb = corridor.offsets[idx]
                        best = min(best, float((verts[k] @ a.T - bb[None, :]).max()))
                    if best > violations["corridor"]:
                        violations["corridor"] = best
                        worst_times["corridor"] = float(t_abs[k])

            for obs in scenario.dynamic_obstacles:
                for k in range(tl.shape[0]):
                    poly = obs.world_polygon(float(t_abs[k]), clamp=True)
                    sd = sd_exact(verts[k], poly)
                    min_sd = min(min_sd, sd)
                    over = cfg.d_m - sd
                    if over > violations["dynamic"]:
                        violations["dynamic"] = float(over)
                        worst_times["dynamic"] = float(t_abs[k])
        cell_offset += seg.n_pieces * (lam + 1)

    violations = {k: (v if np.isfinite(v) else 0.0) for k, v in violations.items()}
    return AuditReport(
        violations=violations,
        worst_times=worst_times,
        min_dynamic_distance=None if not scenario.dynamic_obstacles else float(min_sd),
        samples=n_samples,
    )


@dataclass
class Metrics:
    mean_accel: float
    mean_jerk: float
    duration: float
    path_length: float
    solve_time: float = 0.0
    max_violations: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mean_accel": self.mean_accel,
            "mean_jerk": self.mean_jerk,
            "duration": self.duration,
            "path_length": self.path_length,
            "solve_time": self.solve_time,
            "max_violations": dict(self.max_violations),
        }


def compute_metrics(traj: FlatTrajectory, solve_time: float = 0.0, rate_hz: float = 100.0) -> Metrics:
    """Time-averaged acceleration/jerk magnitudes and arc length.

    Sampled at the given rate (default 100 Hz), trapezoid rule for the
    arc length.
    """
    T = traj.total_duration
    n = int(np.floor(T * rate_hz))
    times = np.arange(n + 1) / rate_hz
    if times[-1] < T - 1e-12:
        times = np.append(times, T)
    a = np.empty(times.shape[0])
    jrk = np.empty(times.shape[0])
    speed = np.empty(times.shape[0])
    for k, t in enumerate(times):
        a[k] = np.linalg.norm(traj.eval(float(t), 2))
        jrk[k] = np.linalg.norm(traj.eval(float(t), 3))
        speed[k] = np.linalg.norm(traj.eval(float(t), 1))
    return Metrics(
        mean_accel=float(a.mean()),
        mean_jerk=float(jrk.mean()),
        duration=float(T),
        path_length=float(np.trapezoid(speed, times)),
        solve_time=solve_time,
    )


# -- trajectory persistence -------------------------------------------------------


def trajectory_to_dict(traj: FlatTrajectory) -> dict:
    return {
        "segments": [
            {
                "eta": int(seg.eta),
                "delta_t": float(seg.delta_t),
                "coeffs": [[[float(v) for v in row] for row in piece] for piece in seg.coeffs],
            }
            for seg in traj.segments
        ]
    }


def save_trajectory(traj: FlatTrajectory, path):
    with open(path, "w") as fh:
        yaml.safe_dump(trajectory_to_dict(traj), fh, sort_keys=False)


def load_trajectory(path) -> FlatTrajectory:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read trajectory file: {exc}")
    except yaml.YAMLError as exc:
        raise ParseError(str(exc))
    if not isinstance(data, dict) or "segments" not in data:
        raise ParseError("trajectory file must hold a 'segments' list")
    segments = [
        Segment(
            coeffs=np.asarray(item["coeffs"], dtype=float),
            delta_t=float(item["delta_t"]),
            eta=int(item["eta"]),
        )
        for item in data["segments"]
    ]
    return FlatTrajectory(segments)


def write_state_csv(traj: FlatTrajectory, path, wheelbase: float = 2.0, rate_hz: float = 100.0):
    """Sampled state table: 9 significant digits, newline endings."""
    T = traj.total_duration
    n = int(np.floor(T * rate_hz))
    times = np.arange(n + 1) / rate_hz
    if times[-1] < T - 1e-12:
        times = np.append(times, T)
    states = sample_states(traj, times)
    cols = ("t", "x", "y", "theta", "v", "a_t", "a_n", "kappa", "phi", "segment", "eta")
    lines = [",".join(cols)]
    phi = np.arctan(states["kappa"] * wheelbase)
    for k, t in enumerate(times):
        row = [
            f"{t:.9g}",
            f"{states['x'][k]:.9g}",
            f"{states['y'][k]:.9g}",
            f"{states['theta'][k]:.9g}",
            f"{states['v'][k]:.9g}",
            f"{states['a_t'][k]:.9g}",
            f"{states['a_n'][k]:.9g}",
            f"{states['kappa'][k]:.9g}",
            f"{phi[k]:.9g}",
            str(int(states["segment"][k])),
            str(int(states["eta"][k])),
        ]
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
