"""Static coverage: grid-labelled Voronoi (Lloyd) cover and rectangular grid cover."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .env import Environment, GroundGrid, grid_for_extent, in_obstacle, obstacle_mask
from .traj import MultiPath, Trajectory, fly_over_buildings


@dataclass
class Partition:
    generators: np.ndarray  # (n, 2)
    grid: GroundGrid
    labels: np.ndarray  # (ny, nx) int in 0..n-1
    rects: np.ndarray | None = None  # (n, 4) tiles for grid partitions

    @property
    def n(self) -> int:
        return len(self.generators)

    def centroids(self) -> np.ndarray:
        return np.array([centroid(self, i) for i in range(self.n)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.labels:
                w.writerow(row.tolist())


def _nearest_label(cells: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Index of the nearest point for every cell; ties go to the lowest index."""
    cx, cy = cells[:, 0], cells[:, 1]
    best = np.full(len(cells), np.inf)
    label = np.zeros(len(cells), int)
    for j, (px, py) in enumerate(pts):
        d2 = (cx - px) ** 2 + (cy - py) ** 2
        closer = d2 < best  # strict, so the earlier index keeps a tie
        best[closer] = d2[closer]
        label[closer] = j
    return label


def reflected_generators(points: np.ndarray, extent) -> np.ndarray:
    """Originals followed by their mirror images across x=0, x=L1, y=0, y=L2 (5n points)."""
    L1, L2 = extent
    x, y = points[:, 0], points[:, 1]
    return np.vstack([
        points,
        np.column_stack([-x, y]),
        np.column_stack([2 * L1 - x, y]),
        np.column_stack([x, -y]),
        np.column_stack([x, 2 * L2 - y]),
    ])


def voronoi_partition(points, extent, cell_size: float, check: bool = True) -> Partition:
    """Label ground cells by nearest generator, built from the 5n reflected point set.

    With ``check`` the truncated reflected labelling is compared against direct
    nearest-original labelling and a mismatch raises.
    """
    points = np.asarray(points, float).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("voronoi_partition needs at least one point")
    grid = grid_for_extent(extent, cell_size)
    cells = grid.centers().reshape(-1, 2)
    n = len(points)
    lab5 = _nearest_label(cells, reflected_generators(points, extent))
    labels = lab5 % n
    if check:
        direct = _nearest_label(cells, points)
        if not np.array_equal(labels, direct):
            raise AssertionError("reflected Voronoi labelling disagrees with direct labelling")
    return Partition(points.copy(), grid, labels.reshape(grid.ny, grid.nx))


def centroid(partition: Partition, i: int) -> np.ndarray:
    """Uniform-density centroid of cell ``i``; the generator itself if the cell is empty."""
    mask = partition.labels == i
    if not mask.any():
        return partition.generators[i].copy()
    return partition.grid.centers()[mask].mean(axis=0)


def _all_centroids(partition: Partition) -> np.ndarray:
    centers = partition.grid.centers().reshape(-1, 2)
    lab = partition.labels.reshape(-1)
    n = partition.n
    counts = np.bincount(lab, minlength=n)
    sx = np.bincount(lab, centers[:, 0], minlength=n)
    sy = np.bincount(lab, centers[:, 1], minlength=n)
    out = partition.generators.copy()
    has = counts > 0
    out[has, 0] = sx[has] / counts[has]
    out[has, 1] = sy[has] / counts[has]
    return out


def nearest_free_point(env: Environment, p, cell_size: float = 0.25) -> np.ndarray:
    """Center of the free cell nearest to ``p``; ``p`` itself if already free."""
    p = np.asarray(p, float)
    if not in_obstacle(env, p):
        return p.copy()
    grid = grid_for_extent(env.extent, cell_size)
    centers = grid.centers()
    free = ~obstacle_mask(env, grid)
    cand = centers[free]
    if len(cand) == 0:
        raise ValueError("environment has no free ground")
    return cand[np.argmin(((cand - p) ** 2).sum(axis=1))]


def _straight_line(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    d = float(np.linalg.norm(b - a))
    k = max(1, math.ceil(d / step - 1e-9)) if d > 0 else 0
    if k == 0:
        return a[None].copy()
    w = np.arange(k + 1)[:, None] / k
    return a + w * (b - a)


def voronoi_cover(env: Environment, n: int, steps: int, step_size: float | None = None, seed: int = 0,
                  starts=None, cell_size: float = 0.5, u_max: float = 1.0, dt: float = 0.1,
                  relocate: bool = False, settle_tol: float = 1e-9, history: list | None = None) -> MultiPath:
    """Lloyd iteration over the whole rectangle, one bounded move per tick, then fly-over repair.

    Iteration stops early once no agent moves more than ``settle_tol``; agents then hold.
    ``history`` (if given) collects the total movement per iteration.
    """
    if n < 1:
        raise ValueError("need at least one agent")
    step = u_max * dt if step_size is None else step_size
    if starts is None:
        from .engine import place_agents

        starts = place_agents(env, n, seed=seed)
    x = np.asarray(starts, float).reshape(n, 2).copy()
    grid = grid_for_extent(env.extent, cell_size)
    cells = grid.centers().reshape(-1, 2)
    track = [x.copy()]
    for _ in range(steps):
        part = Partition(x, grid, (_nearest_label(cells, reflected_generators(x, env.extent)) % n).reshape(grid.ny, grid.nx))
        c = _all_centroids(part)
        delta = c - x
        dist = np.linalg.norm(delta, axis=1)
        scale = np.where(dist > step, step / np.where(dist > 0, dist, 1.0), 1.0)
        x = x + delta * scale[:, None]
        moved = float(np.minimum(dist, step).sum())
        if history is not None:
            history.append(moved)
        if moved <= settle_tol * n:
            break
        track.append(x.copy())
    track = np.asarray(track)
    paths = []
    for i in range(n):
        route = track[:, i]
        if relocate:
            hold = nearest_free_point(env, route[-1], min(cell_size, 0.25))
            if not np.array_equal(hold, route[-1]):
                route = np.vstack([route, _straight_line(route[-1], hold, u_max * dt)[1:]])
        tr = Trajectory.from_ground(route, env.optimal_altitude, dt, agent_id=i)
        paths.append(fly_over_buildings(tr, env, u_max, dt))
    return MultiPath(paths)


def grid_shape(n: int, extent) -> tuple[int, int]:
    """Rows and columns r x c with r*c >= n and fewer than c leftover tiles, tiles closest to square."""
    L1, L2 = extent
    best = None
    base = math.isqrt(n)
    for r in range(1, n + 1):
        c = math.ceil(n / r)
        if r * c - n >= c:
            continue
        w, h = L1 / c, L2 / r
        key = (max(w / h, h / w), abs(r - base), r)
        if best is None or key < best[0]:
            best = (key, r, c)
    return best[1], best[2]


def grid_partition(extent, n: int, cell_size: float = 0.5) -> Partition:
    """Row-major r x c tiling; leftover tiles in the top row merge into their left neighbour."""
    if n < 1:
        raise ValueError("need at least one agent")
    L1, L2 = extent
    r, c = grid_shape(n, extent)
    w, h = L1 / c, L2 / r
    rects = []
    for i in range(n):
        row, col = divmod(i, c)
        x0, x1 = col * w, (col + 1) * w
        if i == n - 1:
            x1 = L1  # absorb the leftover tiles of the last row
        rects.append((x0, row * h, x1, (row + 1) * h))
    rects = np.asarray(rects)
    grid = grid_for_extent(extent, cell_size)
    centers = grid.centers()
    labels = np.full((grid.ny, grid.nx), -1, int)
    for i, (x0, y0, x1, y1) in enumerate(rects):
        inside = (centers[..., 0] >= x0) & (centers[..., 0] < x1) & (centers[..., 1] >= y0) & (centers[..., 1] < y1)
        labels[inside & (labels < 0)] = i
    # cell centers never sit exactly on the outer edges, so every cell is labelled
    centers_of_tiles = np.column_stack([(rects[:, 0] + rects[:, 2]) / 2, (rects[:, 1] + rects[:, 3]) / 2])
    return Partition(centers_of_tiles, grid, labels, rects)


def grid_cover(env: Environment, n: int, seed: int = 0, starts=None, u_max: float = 1.0, dt: float = 0.1,
               cell_size: float = 0.5, relocate: bool = False) -> MultiPath:
    """Each agent flies straight to the center of its precomputed tile and stays."""
    part = grid_partition(env.extent, n, cell_size)
    if starts is None:
        from .engine import place_agents

        starts = place_agents(env, n, seed=seed)
    starts = np.asarray(starts, float).reshape(n, 2)
    paths = []
    for i in range(n):
        goal = part.generators[i]
        if relocate:
            goal = nearest_free_point(env, goal, min(cell_size, 0.25))
        route = _straight_line(starts[i], goal, u_max * dt)
        tr = Trajectory.from_ground(route, env.optimal_altitude, dt, agent_id=i)
        paths.append(fly_over_buildings(tr, env, u_max, dt))
    return MultiPath(paths)
