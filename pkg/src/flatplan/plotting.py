"""Figure rendering for scenarios, corridors and planned trajectories."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection
from matplotlib.patches import Polygon as MplPolygon


def _draw_polygon(ax, verts, **kw):
    ax.add_patch(MplPolygon(np.asarray(verts), closed=True, **kw))


def _vehicle_outline(geom, pose):
    x, y, theta = pose
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return np.array([x, y]) + geom.body_vertices @ rot.T


def render_scenario(
    scenario,
    trajectory=None,
    corridor=None,
    frontend_poses=None,
    out_path=None,
    dpi=120,
):
    """Compose the scenario picture and optionally save it.

    Shows occupied cells, static polygons, the corridor cells, the
    front-end path, the optimized trajectory colored by time, dynamic
    obstacle tracks, and vehicle outlines at regular samples.
    """
    fig, ax = plt.subplots(figsize=(9, 7))
    lo, hi = scenario.grid.extent()

    occ = scenario.grid.occupied_centers()
    if occ.shape[0]:
        ax.scatter(occ[:, 0], occ[:, 1], s=4, c="0.55", marker="s", linewidths=0, zorder=1)
    for poly in scenario.static_polygons:
        _draw_polygon(ax, poly, facecolor="0.4", edgecolor="0.2", zorder=2)

    if corridor is not None:
        step = max(1, len(corridor) // 60)
        for k in range(0, len(corridor), step):
            _draw_polygon(
                ax,
                corridor.cell_vertices(k),
                facecolor=(0.2, 0.6, 1.0, 0.04),
                edgecolor=(0.2, 0.6, 1.0, 0.25),
                linewidth=0.6,
                zorder=3,
            )

    if frontend_poses is not None and len(frontend_poses):
        fp = np.asarray(frontend_poses)
        ax.plot(fp[:, 0], fp[:, 1], "--", color="0.3", linewidth=1.0, label="search path", zorder=4)

    if trajectory is not None:
        T = trajectory.total_duration
        times = np.linspace(0.0, T, 400)
        pts = np.array([trajectory.eval(float(t)) for t in times])
        segs = np.stack([pts[:-1], pts[1:]], axis=1)
        lc = LineCollection(segs, cmap="viridis", array=times[:-1], linewidth=2.2, zorder=5)
        ax.add_collection(lc)
        fig.colorbar(lc, ax=ax, label="time [s]", shrink=0.8)
        for t in np.linspace(0.0, T, 9):
            s1 = trajectory.eval(float(t), 1)
            if np.linalg.norm(s1) < 1e-9:
                continue
            i, _ = trajectory.locate(float(t))
            eta = trajectory.segments[i].eta
            theta = np.arctan2(eta * s1[1], eta * s1[0])
            pos = trajectory.eval(float(t))
            _draw_polygon(
                ax,
                _vehicle_outline(scenario.geom, (pos[0], pos[1], theta)),
                facecolor="none",
                edgecolor=(0.1, 0.4, 0.15, 0.7),
                linewidth=0.9,
                zorder=6,
            )
        for obs in scenario.dynamic_obstacles:
            horizon = min(obs.pose_traj.horizon, T if T > 0 else obs.pose_traj.horizon)
            ts = np.linspace(0.0, horizon, 120)
            track = np.array([obs.pose_traj.sample(np.array([t]), clamp=True)[0][0] for t in ts])
            ax.plot(track[:, 0], track[:, 1], ":", color="tab:red", linewidth=1.2, zorder=4)
            for t in np.linspace(0.0, horizon, 7):
                _draw_polygon(
                    ax,
                    obs.world_polygon(float(t), clamp=True),
                    facecolor=(0.9, 0.2, 0.2, 0.10),
                    edgecolor=(0.8, 0.1, 0.1, 0.5),
                    linewidth=0.8,
                    zorder=4,
                )

    for pose, color in ((scenario.start_pose, "tab:green"), (scenario.goal_pose, "tab:orange")):
        _draw_polygon(ax, _vehicle_outline(scenario.geom, pose), facecolor="none", edgecolor=color, linewidth=1.6, zorder=7)
        ax.annotate(
            "",
            xy=(pose[0] + 1.5 * np.cos(pose[2]), pose[1] + 1.5 * np.sin(pose[2])),
            xytext=(pose[0], pose[1]),
            arrowprops=dict(arrowstyle="->", color=color),
            zorder=7,
        )

    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(scenario.name)
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, dpi=dpi)
        plt.close(fig)
        return None
    return fig, ax


def render_bench(rows, out_path, dpi=120):
    """Bar chart of solve-time percentiles per scenario."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    names = [r["scenario"] for r in rows]
    p50 = [r["solve_p50"] for r in rows]
    p90 = [r["solve_p90"] for r in rows]
    x = np.arange(len(names))
    ax.bar(x - 0.18, p50, width=0.36, label="p50")
    ax.bar(x + 0.18, p90, width=0.36, label="p90")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("solve time [s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
