"""Time-sampled 3D agent paths, fly-over repair, cycle rotation and swept-area rasterization."""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .env import DEFAULT_CLEARANCE, Environment, GroundGrid, ground_grid, obstacle_mask

ALT_TOL = 1e-9
POS_TOL = 1e-9


def observing_mask(h, optimal_altitude: float) -> np.ndarray:
    return np.abs(np.asarray(h, float) - optimal_altitude) <= ALT_TOL


@dataclass
class Trajectory:
    """One agent's samples: times ``t`` (T,), positions ``pos`` (T, 3) as x, y, h, and sensing flags."""

    t: np.ndarray
    pos: np.ndarray
    observing: np.ndarray
    agent_id: int = 0

    def __post_init__(self):
        self.t = np.asarray(self.t, float).reshape(-1)
        self.pos = np.asarray(self.pos, float).reshape(-1, 3)
        self.observing = np.asarray(self.observing, bool).reshape(-1)
        if not (len(self.t) == len(self.pos) == len(self.observing)):
            raise ValueError("t, pos and observing must have equal length")

    @classmethod
    def empty(cls, agent_id: int = 0) -> "Trajectory":
        return cls(np.empty(0), np.empty((0, 3)), np.empty(0, bool), agent_id)

    @classmethod
    def from_points(cls, pts3, dt: float | None = None, t=None, optimal_altitude: float | None = None,
                    agent_id: int = 0, t0: float = 0.0) -> "Trajectory":
        """Wrap 3D points; observing flags derive from altitude when ``optimal_altitude`` is given."""
        pts3 = np.asarray(pts3, float).reshape(-1, 3)
        if t is None:
            if dt is None:
                raise ValueError("need either dt or explicit timestamps")
            t = t0 + dt * np.arange(len(pts3))
        obs = observing_mask(pts3[:, 2], optimal_altitude) if optimal_altitude is not None else np.ones(len(pts3), bool)
        return cls(t, pts3, obs, agent_id)

    @classmethod
    def from_ground(cls, pts2, altitude: float, dt: float, agent_id: int = 0, t0: float = 0.0) -> "Trajectory":
        pts2 = np.asarray(pts2, float).reshape(-1, 2)
        pts3 = np.column_stack([pts2, np.full(len(pts2), altitude)])
        return cls(t0 + dt * np.arange(len(pts2)), pts3, np.ones(len(pts2), bool), agent_id)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def ground(self) -> np.ndarray:
        return self.pos[:, :2]

    @property
    def altitude(self) -> np.ndarray:
        return self.pos[:, 2]

    def length(self) -> float:
        """3D arc length of the sample polyline."""
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.pos, axis=0), axis=1).sum())

    def is_closed(self) -> bool:
        return len(self) >= 2 and bool(np.linalg.norm(self.pos[0] - self.pos[-1]) <= POS_TOL)

    def check(self, optimal_altitude: float, u_max: float | None = None) -> None:
        """Raise ValueError if the sample invariants do not hold."""
        if len(self) == 0:
            return
        if self.t[0] < 0 or np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be non-negative and strictly increasing")
        if not np.array_equal(self.observing, observing_mask(self.altitude, optimal_altitude)):
            raise ValueError("observing flags disagree with altitude")
        if u_max is not None and len(self) > 1:
            v = np.linalg.norm(np.diff(self.pos, axis=0), axis=1) / np.diff(self.t)
            if v.max() > u_max + 1e-9:
                raise ValueError(f"speed {v.max():.6g} exceeds u_max {u_max}")

    # -- csv -------------------------------------------------------------
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "h", "observing"])
            for ti, (x, y, h), o in zip(self.t, self.pos, self.observing):
                w.writerow([f"{ti:.6f}", f"{x:.6f}", f"{y:.6f}", f"{h:.6f}", int(o)])

    @classmethod
    def from_csv(cls, path, agent_id: int = 0) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return cls.empty(agent_id)
        return cls(data[:, 0], data[:, 1:4], data[:, 4].astype(bool), agent_id)


@dataclass
class MultiPath:
    trajectories: list[Trajectory] = field(default_factory=list)

    def __post_init__(self):
        ids = [tr.agent_id for tr in self.trajectories]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be distinct")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]

    def observing(self) -> "MultiPath":
        return MultiPath([observing_subset(tr) for tr in self.trajectories])


def observing_subset(path: Trajectory) -> Trajectory:
    """Samples at which the camera is usable, timestamps preserved."""
    m = path.observing
    return Trajectory(path.t[m], path.pos[m], path.observing[m], path.agent_id)


# ----------------------------------------------------------------------
# swept area


@dataclass
class SweptRegion:
    grid: GroundGrid
    mask: np.ndarray  # (ny, nx) bool, marked cells
    free: np.ndarray  # (ny, nx) bool, free-space cells

    @property
    def cell_size(self) -> float:
        return math.sqrt(self.grid.cell_area)

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.grid.cell_area

    @property
    def fraction(self) -> float:
        """Swept share of the free-space cells."""
        return float(self.mask.sum()) / max(1, int(self.free.sum()))


def swept_area(mp: MultiPath | Trajectory, env: Environment, cell_size: float) -> SweptRegion:
    """Free cells whose center lies within ``env.sensor_radius`` of an observing sample."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if isinstance(mp, Trajectory):
        mp = MultiPath([mp])
    grid = ground_grid(env, cell_size)
    free = ~obstacle_mask(env, grid)
    pts = [tr.ground[tr.observing] for tr in mp]
    pts = np.concatenate(pts) if pts else np.empty((0, 2))
    mask = np.zeros_like(free)
    if len(pts):
        pts = np.unique(pts, axis=0)
        centers = grid.centers()[free]
        d, _ = cKDTree(pts).query(centers, k=1, distance_upper_bound=env.sensor_radius * (1 + 1e-12))
        mask[free] = d <= env.sensor_radius
    return SweptRegion(grid, mask, free)


# ----------------------------------------------------------------------
# fly-over repair


def _slab(p0: np.ndarray, p1: np.ndarray, boxes: np.ndarray):
    """Entry/exit parameters of segments p0->p1 (S, 2) against closed boxes (B, 4)."""
    d = p1 - p0
    lo = np.zeros((len(p0), len(boxes)))
    hi = np.ones((len(p0), len(boxes)))
    for ax, (a, b) in enumerate(((boxes[:, 0], boxes[:, 2]), (boxes[:, 1], boxes[:, 3]))):
        da = d[:, ax, None]
        pa = p0[:, ax, None]
        flat = da == 0.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ta = (a - pa) / da
            tb = (b - pa) / da
        t_lo = np.where(flat, np.where((pa >= a) & (pa <= b), -np.inf, np.inf), np.minimum(ta, tb))
        t_hi = np.where(flat, np.where((pa >= a) & (pa <= b), np.inf, -np.inf), np.maximum(ta, tb))
        lo = np.maximum(lo, t_lo)
        hi = np.minimum(hi, t_hi)
    return lo, hi, lo <= hi


def _overflight_intervals(ground: np.ndarray, env: Environment, clearance: float, margin: float):
    """Merged arc-length intervals (start, end, altitude) over which the route must be elevated.

    Starts/ends of -inf/+inf mean the route begins/ends over a roof.
    """
    seg = np.linalg.norm(np.diff(ground, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    s_end = s[-1]
    raw = []
    if env.buildings and len(ground):
        if len(ground) == 1:
            p0 = p1 = ground
            seg_s, seg_len = np.zeros(1), np.zeros(1)
        else:
            p0, p1, seg_s, seg_len = ground[:-1], ground[1:], s[:-1], seg
        lo, hi, hit = _slab(p0, p1, env.boxes)
        for i, b in zip(*np.nonzero(hit)):
            raw.append((seg_s[i] + lo[i, b] * seg_len[i], seg_s[i] + hi[i, b] * seg_len[i], int(b)))
    raw.sort()
    merged: list[list] = []
    for a, b, k in raw:
        alt = env.heights[k] + clearance
        if alt > env.max_altitude + 1e-9:
            raise ValueError(
                f"building {k} ({env.buildings[k]}) needs altitude {alt:.3f} above max_altitude {env.max_altitude}"
            )
        if alt <= env.optimal_altitude:
            continue
        a_x = -np.inf if a <= 0.0 else max(a - margin, 0.0)
        b_x = np.inf if b >= s_end else min(b + margin, s_end)
        if merged and a_x <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b_x)
            merged[-1][2] = max(merged[-1][2], alt)
        else:
            merged.append([a_x, b_x, alt])
    return s, [tuple(m) for m in merged]


def fly_over_polyline(ground, env: Environment, clearance: float = DEFAULT_CLEARANCE,
                      margin: float = 1e-3) -> np.ndarray:
    """Lift a ground route over every building it crosses.

    Returns 3D waypoints: the original ground points in order, plus a vertical climb just
    before each footprint entry and a vertical drop just after each exit. Climbs start
    ``margin`` meters of route before the (closed) footprint so no waypoint touches a roof
    edge at sensing altitude.
    """
    ground = np.asarray(ground, float).reshape(-1, 2)
    h0 = env.optimal_altitude
    s, spans = _overflight_intervals(ground, env, clearance, margin)
    if not spans:
        return np.column_stack([ground, np.full(len(ground), h0)])

    # split the route at every finite span endpoint that is not already a vertex
    cuts = sorted({e for a, b, _ in spans for e in (a, b) if np.isfinite(e)})
    pts, arcs = [ground[0]], [s[0]]
    ci = 0
    for i in range(1, len(ground)):
        while ci < len(cuts) and cuts[ci] <= s[i - 1]:
            ci += 1
        while ci < len(cuts) and cuts[ci] < s[i]:
            w = (cuts[ci] - s[i - 1]) / (s[i] - s[i - 1])
            pts.append(ground[i - 1] + w * (ground[i] - ground[i - 1]))
            arcs.append(cuts[ci])
            ci += 1
        pts.append(ground[i])
        arcs.append(s[i])

    los = [a for a, _, _ in spans]
    out = []
    climbed, dropped = set(), set()
    for p, a in zip(pts, arcs):
        j = bisect_right(los, a) - 1
        x, y = p
        if j < 0:
            out.append((x, y, h0))
            continue
        lo, hi, h = spans[j]
        if a == lo:
            out += [(x, y, h0), (x, y, h)] if j not in climbed else [(x, y, h)]
            climbed.add(j)
        elif a == hi:
            out += [(x, y, h), (x, y, h0)] if j not in dropped else [(x, y, h0)]
            dropped.add(j)
        elif a < hi:
            out.append((x, y, h))
        else:
            out.append((x, y, h0))
    return np.asarray(out, float)


def subdivide(pts3: np.ndarray, step: float) -> np.ndarray:
    """Insert evenly spaced points so that no segment is longer than ``step``."""
    pts3 = np.asarray(pts3, float)
    if len(pts3) < 2:
        return pts3.copy()
    out = [pts3[:1]]
    seg = np.linalg.norm(np.diff(pts3, axis=0), axis=1)
    for i, L in enumerate(seg):
        k = max(1, math.ceil(L / step - 1e-9))
        w = np.arange(1, k + 1)[:, None] / k
        out.append(pts3[i] + w * (pts3[i + 1] - pts3[i]))
    return np.concatenate(out)


def fly_over_buildings(path2d: Trajectory, env: Environment, u_max: float = 1.0, dt: float | None = None,
                       clearance: float = DEFAULT_CLEARANCE, margin: float = 1e-3) -> Trajectory:
    """Repair a sensing-altitude route so it climbs over buildings instead of through them.

    The result keeps every ground waypoint in order and is re-timed on the ``dt`` clock at
    speed at most ``u_max``; vertical maneuvers therefore stretch the schedule.
    """
    if len(path2d) == 0:
        return Trajectory.empty(path2d.agent_id)
    if dt is None:
        dt = float(path2d.t[1] - path2d.t[0]) if len(path2d) > 1 else 1.0
    pts3 = fly_over_polyline(path2d.ground, env, clearance, margin)
    pts3 = subdivide(pts3, u_max * dt)
    return Trajectory.from_points(pts3, dt=dt, t0=float(path2d.t[0]),
                                  optimal_altitude=env.optimal_altitude, agent_id=path2d.agent_id)


# ----------------------------------------------------------------------
# arc-length utilities


def arc_lengths(pts3: np.ndarray) -> np.ndarray:
    pts3 = np.asarray(pts3, float)
    if len(pts3) == 0:
        return np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts3, axis=0), axis=1))])


def point_at(pts3: np.ndarray, arcs: np.ndarray, s) -> np.ndarray:
    """Positions at arc lengths ``s`` along a polyline (clamped to its ends)."""
    s = np.clip(np.asarray(s, float), 0.0, arcs[-1])
    i = np.clip(np.searchsorted(arcs, s, side="right") - 1, 0, max(len(arcs) - 2, 0))
    if len(arcs) == 1:
        return np.broadcast_to(pts3[0], s.shape + (pts3.shape[1],)).copy()
    seg = arcs[i + 1] - arcs[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(seg > 0, (s - arcs[i]) / seg, 0.0)
    a, b = pts3[i], pts3[i + 1]
    # a + w (b - a) keeps constant coordinates bit-exact
    return a + w[..., None] * (b - a)


def rotate_cycle(cycle: Trajectory, offset: float) -> Trajectory:
    """Re-start a closed path at arc length ``offset`` (mod its length); times re-based to 0."""
    if not cycle.is_closed():
        raise ValueError("rotate_cycle needs a closed path (first and last positions equal)")
    if offset < 0:
        raise ValueError("offset must be non-negative")
    arcs = arc_lengths(cycle.pos)
    ell = arcs[-1]
    duration = cycle.t[-1] - cycle.t[0]
    speed = ell / duration if duration > 0 else 1.0
    s0 = math.fmod(offset, ell) if ell > 0 else 0.0
    if s0 <= 1e-12 * max(ell, 1.0) or ell - s0 <= 1e-12 * max(ell, 1.0):
        pts = cycle.pos.copy()
    else:
        start = point_at(cycle.pos, arcs, s0)
        after = cycle.pos[(arcs > s0) & (np.arange(len(arcs)) < len(arcs) - 1)]
        before = cycle.pos[(arcs < s0) & (np.arange(len(arcs)) > 0)]
        pts = np.vstack([start, after, cycle.pos[:1], before, start])
        # drop duplicates produced when s0 sits on a vertex
        keep = np.ones(len(pts), bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 0
        pts = pts[keep]
    t = arc_lengths(pts) / speed
    alt = cycle.pos[cycle.observing, 2]
    obs = observing_mask(pts[:, 2], alt[0]) if len(alt) else np.zeros(len(pts), bool)
    return Trajectory(t, pts, obs, cycle.agent_id)


def concat(a: Trajectory, b: Trajectory) -> Trajectory:
    """Traverse ``a`` then ``b``; ``b``'s clock continues from ``a``'s last timestamp."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if np.linalg.norm(a.pos[-1] - b.pos[0]) > POS_TOL:
        raise ValueError("concat: end of first path does not meet start of second")
    tb = b.t[1:] - b.t[0] + a.t[-1]
    return Trajectory(
        np.concatenate([a.t, tb]),
        np.vstack([a.pos, b.pos[1:]]),
        np.concatenate([a.observing, b.observing[1:]]),
        a.agent_id,
    )
