"""Boustrophedon sweep cycle and the rotated multi-agent lawnmower."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import DEFAULT_CLEARANCE, Environment
from .traj import MultiPath, Trajectory, arc_lengths, fly_over_polyline, observing_mask, point_at, rotate_cycle


@dataclass
class SweepPlan:
    lane_spacing: float
    lanes: list[tuple[tuple[float, float], tuple[float, float]]]
    cycle: Trajectory


def boustrophedon(extent, lane_spacing: float, speed: float = 1.0, sensor_radius: float | None = None,
                  altitude: float = 0.0) -> SweepPlan:
    """Back-and-forth lanes along the long axis, closed by a return leg on the boundary.

    Lanes are inset ``lane_spacing / 2`` from the two long edges and spread evenly so
    that adjacent lanes are never further apart than ``lane_spacing``.
    """
    L1, L2 = (float(v) for v in extent)
    r = lane_spacing / 2 if sensor_radius is None else sensor_radius
    if not 0 < lane_spacing <= 2 * r + 1e-12:
        raise ValueError(f"lane spacing {lane_spacing} must lie in (0, 2*sensor_radius={2 * r}]")
    if 2 * r > min(L1, L2) + 1e-12:
        raise ValueError(f"sensor footprint diameter {2 * r} exceeds the extent {extent}")
    if speed <= 0:
        raise ValueError("speed must be positive")

    swap = L2 > L1
    long_, short = (L2, L1) if swap else (L1, L2)
    n_lanes = max(1, math.ceil(short / lane_spacing - 1e-9))
    if n_lanes == 1:
        offsets = [short / 2]
    else:
        gap = (short - lane_spacing) / (n_lanes - 1)
        offsets = [lane_spacing / 2 + i * gap for i in range(n_lanes)]

    pts = []
    lanes = []
    for i, c in enumerate(offsets):
        a, b = (0.0, long_) if i % 2 == 0 else (long_, 0.0)
        pts += [(a, c), (b, c)]
        lanes.append(((a, c), (b, c)))
    if n_lanes % 2 == 1:
        # finished on the far end: climb to the far long edge and come back along it
        pts += [(long_, short), (0.0, short)]
    pts.append(pts[0])
    pts = np.asarray(pts, float)
    if swap:
        pts = pts[:, ::-1]
        lanes = [((a[1], a[0]), (b[1], b[0])) for a, b in lanes]
    # drop zero-length hops (e.g. a single lane whose return leg starts on it)
    keep = np.ones(len(pts), bool)
    keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 0
    pts = pts[keep]
    pts3 = np.column_stack([pts, np.full(len(pts), altitude)])
    cycle = Trajectory(arc_lengths(pts3) / speed, pts3, np.ones(len(pts3), bool))
    return SweepPlan(lane_spacing, lanes, cycle)


def repaired_cycle(env: Environment, lane_spacing: float | None = None, speed: float = 1.0,
                   clearance: float = DEFAULT_CLEARANCE) -> Trajectory:
    """Sweep cycle over the obstacle-free footprint, lifted over buildings."""
    spacing = 2 * env.sensor_radius if lane_spacing is None else lane_spacing
    plan = boustrophedon(env.extent, spacing, speed, env.sensor_radius, env.optimal_altitude)
    pts3 = fly_over_polyline(plan.cycle.ground, env, clearance)
    return Trajectory(arc_lengths(pts3) / speed, pts3, observing_mask(pts3[:, 2], env.optimal_altitude))


def equal_offsets(n: int, ell: float) -> np.ndarray:
    """Agent i (1-based) starts (i/n) of the way around; agent n wraps to 0."""
    return np.array([math.fmod(i / n * ell, ell) if ell > 0 else 0.0 for i in range(1, n + 1)])


def multi_lawnmower(env: Environment, n: int, lane_spacing: float | None = None, speed: float = 1.0,
                    offsets=None, clearance: float = DEFAULT_CLEARANCE) -> MultiPath:
    """One repaired cycle per agent, each rotated to its own starting arc length."""
    if n < 1:
        raise ValueError("need at least one agent")
    cycle = repaired_cycle(env, lane_spacing, speed, clearance)
    ell = cycle.length()
    offsets = equal_offsets(n, ell) if offsets is None else np.asarray(offsets, float)
    if len(offsets) != n:
        raise ValueError(f"expected {n} offsets, got {len(offsets)}")
    paths = []
    for i, off in enumerate(offsets):
        tr = rotate_cycle(cycle, float(off))
        tr.agent_id = i
        paths.append(tr)
    return MultiPath(paths)


def sample_cycle(cycle: Trajectory, dt: float, steps: int, speed: float, agent_id: int | None = None,
                 optimal_altitude: float | None = None) -> Trajectory:
    """Loop around a closed cycle at constant ``speed`` for ``steps`` ticks of ``dt``."""
    arcs = arc_lengths(cycle.pos)
    ell = arcs[-1]
    s = speed * dt * np.arange(steps + 1)
    if ell > 0:
        s = np.mod(s, ell)
    pts = point_at(cycle.pos, arcs, s)
    if optimal_altitude is None:
        optimal_altitude = float(cycle.pos[cycle.observing, 2][0]) if cycle.observing.any() else -1.0
    return Trajectory(dt * np.arange(steps + 1), pts, observing_mask(pts[:, 2], optimal_altitude),
                      cycle.agent_id if agent_id is None else agent_id)
