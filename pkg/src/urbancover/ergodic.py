"""Spectral ergodic coverage on a rectangle: cosine basis, target coefficients and feedback laws."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .env import Environment, GroundGrid, ground_grid, in_obstacle, nearest_obstacle
from .traj import MultiPath, Trajectory, _slab, fly_over_buildings

# ----------------------------------------------------------------------
# basis


def normalizer_h_k(mode, L1: float, L2: float) -> float:
    """sqrt of the integral of cos^2(k1 x1) cos^2(k2 x2) over the rectangle."""
    a1 = L1 if mode[0] == 0 else L1 / 2
    a2 = L2 if mode[1] == 0 else L2 / 2
    return math.sqrt(a1 * a2)


def basis_f_k(mode, x, L1: float = 1.0, L2: float = 1.0) -> float:
    k1, k2 = mode[0] * math.pi / L1, mode[1] * math.pi / L2
    return math.cos(k1 * x[0]) * math.cos(k2 * x[1]) / normalizer_h_k(mode, L1, L2)


def grad_f_k(mode, x, L1: float = 1.0, L2: float = 1.0) -> np.ndarray:
    k1, k2 = mode[0] * math.pi / L1, mode[1] * math.pi / L2
    h = normalizer_h_k(mode, L1, L2)
    return np.array([
        -k1 * math.sin(k1 * x[0]) * math.cos(k2 * x[1]) / h,
        -k2 * math.cos(k1 * x[0]) * math.sin(k2 * x[1]) / h,
    ])


@dataclass
class ModeGrid:
    """All modes (i, j) with 0 <= i <= K1, 0 <= j <= K2, flattened row-major (index i*(K2+1)+j)."""

    K1: int
    K2: int
    L1: float
    L2: float
    weights: str = "sobolev"

    def __post_init__(self):
        if self.K1 < 0 or self.K2 < 0:
            raise ValueError("mode counts must be non-negative")
        i, j = np.meshgrid(np.arange(self.K1 + 1), np.arange(self.K2 + 1), indexing="ij")
        self.index = np.stack([i.ravel(), j.ravel()], axis=1)
        self.k1s = np.arange(self.K1 + 1) * math.pi / self.L1
        self.k2s = np.arange(self.K2 + 1) * math.pi / self.L2
        a1 = np.where(self.index[:, 0] == 0, self.L1, self.L1 / 2)
        a2 = np.where(self.index[:, 1] == 0, self.L2, self.L2 / 2)
        self.h = np.sqrt(a1 * a2)
        if self.weights == "sobolev":
            self.lam = (1.0 + (self.index**2).sum(axis=1)) ** -1.5
        elif self.weights == "uniform":
            self.lam = np.ones(len(self.index))
        else:
            raise ValueError(f"unknown weighting {self.weights!r}")

    @classmethod
    def for_env(cls, env: Environment, K: int = 10, weights: str = "sobolev") -> "ModeGrid":
        return cls(K, K, env.extent[0], env.extent[1], weights)

    def __len__(self) -> int:
        return len(self.index)

    def f(self, pts) -> np.ndarray:
        """Basis values at (n, 2) points, shape (n, M)."""
        pts = np.atleast_2d(pts)
        cx = np.cos(pts[:, 0, None] * self.k1s)
        cy = np.cos(pts[:, 1, None] * self.k2s)
        return (cx[:, :, None] * cy[:, None, :]).reshape(len(pts), -1) / self.h

    def grad(self, pts) -> np.ndarray:
        """Basis gradients at (n, 2) points, shape (n, M, 2)."""
        pts = np.atleast_2d(pts)
        ax, ay = pts[:, 0, None] * self.k1s, pts[:, 1, None] * self.k2s
        cx, sx, cy, sy = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay)
        gx = (-(self.k1s * sx)[:, :, None] * cy[:, None, :]).reshape(len(pts), -1) / self.h
        gy = (-cx[:, :, None] * (self.k2s * sy)[:, None, :]).reshape(len(pts), -1) / self.h
        return np.stack([gx, gy], axis=-1)


# ----------------------------------------------------------------------
# target distributions


@dataclass
class TargetDistribution:
    kind: str
    grid: GroundGrid
    density: np.ndarray  # (ny, nx), integrates to 1

    def __post_init__(self):
        if np.any(self.density < 0):
            raise ValueError("density must be non-negative")

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.grid.cell_area)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.density:
                w.writerow([f"{v:.9g}" for v in row])


def _uniform_on(mask: np.ndarray, grid: GroundGrid) -> np.ndarray:
    count = int(mask.sum())
    if count == 0:
        raise ValueError("target support is empty")
    return np.where(mask, 1.0 / (count * grid.cell_area), 0.0)


def vacant_target(env: Environment, cell_size: float = 0.5) -> TargetDistribution:
    """Uniform over the whole rectangle, buildings ignored."""
    grid = ground_grid(env, cell_size)
    return TargetDistribution("vacant", grid, _uniform_on(np.ones((grid.ny, grid.nx), bool), grid))


def free_target(env: Environment, cell_size: float = 0.5) -> TargetDistribution:
    """Uniform over free ground, zero on footprints."""
    grid = ground_grid(env, cell_size)
    return TargetDistribution("free", grid, _uniform_on(~in_obstacle(env, grid.centers()), grid))


def spectral_mu(target: TargetDistribution, modes: ModeGrid) -> np.ndarray:
    """Midpoint-rule inner products of the target density with every basis function."""
    if abs(target.mass - 1.0) > 1e-9:
        raise ValueError(f"target density integrates to {target.mass}, not 1")
    centers = target.grid.centers().reshape(-1, 2)
    w = target.density.reshape(-1) * target.grid.cell_area
    nz = w > 0
    return w[nz] @ modes.f(centers[nz])


# ----------------------------------------------------------------------
# controller state


@dataclass
class ErgodicState:
    """Running coefficients for a team of N agents sharing one set of C_k."""

    modes: ModeGrid
    mu: np.ndarray
    positions: np.ndarray
    u_max: float = 1.0
    seed: int = 0
    C: np.ndarray = None
    t: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.array(self.positions, float).reshape(-1, 2)
        if self.C is None:
            self.C = np.zeros(len(self.modes))
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def M(self) -> np.ndarray:
        return self.N * self.t * self.mu

    @property
    def S(self) -> np.ndarray:
        return self.C - self.M

    @property
    def c(self) -> np.ndarray:
        """Time-averaged trajectory coefficients C_k / (N t)."""
        if self.t == 0:
            return np.zeros_like(self.C)
        return self.C / (self.N * self.t)

    def metric(self) -> float:
        """Weighted squared distance between trajectory and target spectra."""
        return float(self.modes.lam @ (self.c - self.mu) ** 2)


def accumulate_C_k(state: ErgodicState, positions, dt: float) -> ErgodicState:
    """Add sum_j f_k(x_j) dt to every C_k and advance the clock."""
    positions = np.asarray(positions, float).reshape(-1, 2)
    state.positions = positions.copy()
    if dt == 0:
        return state
    state.C = state.C + state.modes.f(positions).sum(axis=0) * dt
    state.t += dt
    return state


def _random_heading(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0.0, 2 * math.pi)
    return np.array([math.cos(a), math.sin(a)])


def descent_directions(state: ErgodicState) -> np.ndarray:
    """Unit vectors -B_j/|B_j| per agent, with B_j = sum_k lam_k S_k grad f_k(x_j).

    Agents with B_j = 0 get a seeded random heading.
    """
    B = np.einsum("k,nkd->nd", state.modes.lam * state.S, state.modes.grad(state.positions))
    norm = np.linalg.norm(B, axis=1)
    out = np.empty_like(B)
    for j in range(len(B)):
        out[j] = -B[j] / norm[j] if norm[j] > 0 and np.isfinite(norm[j]) else _random_heading(state.rng)
    return out


def control_step(state: ErgodicState, j: int | None = None) -> np.ndarray:
    """Velocity of magnitude u_max for agent ``j`` (or all agents, shape (N, 2), when j is None)."""
    u = state.u_max * descent_directions(state)
    return u if j is None else u[j]


# ----------------------------------------------------------------------
# obstacle-repulsive variant


def bump_alpha(distance, d_infl: float):
    """Linear blend weight: 0 touching an obstacle, 1 at or beyond ``d_infl``."""
    if d_infl <= 0:
        raise ValueError("d_infl must be positive")
    return np.minimum(1.0, np.asarray(distance, float) / d_infl)


def _walls_repel(env: Environment, walls: bool | None) -> bool:
    # by default the boundary pushes back only in cluttered worlds; an empty world keeps the plain law
    return bool(env.buildings) if walls is None else walls


def _clearance(env: Environment, pts: np.ndarray, walls: bool | None):
    d, near = nearest_obstacle(env, pts)
    if _walls_repel(env, walls):
        L1, L2 = env.extent
        cand = np.stack([pts[:, 0], L1 - pts[:, 0], pts[:, 1], L2 - pts[:, 1]], axis=1)
        k = np.argmin(cand, axis=1)
        dw = cand[np.arange(len(pts)), k]
        wall_pt = pts.copy()
        wall_pt[k == 0, 0] = 0.0
        wall_pt[k == 1, 0] = L1
        wall_pt[k == 2, 1] = 0.0
        wall_pt[k == 3, 1] = L2
        use = dw < d
        d = np.where(use, dw, d)
        near = np.where(use[:, None], wall_pt, near)
    return d, near


def repulsive_field(x, env: Environment, d_infl: float, walls: bool | None = None) -> np.ndarray:
    """Unit vector from the nearest obstacle (or wall) point toward ``x`` inside ``d_infl``, else zero.

    A point lying exactly on a wall gets the inward wall normal.

    Accepts one point (2,) or many (n, 2).
    """
    pts = np.atleast_2d(np.asarray(x, float))
    if in_obstacle(env, pts).any():
        raise ValueError("repulsive field evaluated inside an obstacle")
    d, near = _clearance(env, pts, walls)
    F = np.zeros_like(pts)
    close = (d < d_infl) & (d > 0)
    if close.any():
        F[close] = (pts[close] - near[close]) / d[close, None]
    if _walls_repel(env, walls):
        L = np.asarray(env.extent, float)
        touching = d == 0
        F[touching] = (pts[touching] == 0).astype(float) - (pts[touching] == L).astype(float)
    return F[0] if np.ndim(x) == 1 else F


def avoid_control_step(state: ErgodicState, env: Environment, d_infl: float, j: int | None = None,
                       walls: bool | None = None) -> np.ndarray:
    """Blend of the ergodic heading and the repulsive field, rescaled to u_max.

    Far from obstacles this equals ``control_step``; at contact it points straight away
    from the obstacle.
    """
    V = descent_directions(state)
    d, _ = _clearance(env, state.positions, walls)
    F = repulsive_field(state.positions, env, d_infl, walls)
    alpha = bump_alpha(d, d_infl)[:, None]
    Vs = alpha * V + (1.0 - alpha) * F
    norm = np.linalg.norm(Vs, axis=1)
    u = np.empty_like(Vs)
    for k in range(len(Vs)):
        if alpha[k, 0] == 1.0:
            u[k] = state.u_max * V[k]  # out of range: exactly the plain law
        elif norm[k] > 0:
            u[k] = state.u_max * Vs[k] / norm[k]
        else:
            fk = np.linalg.norm(F[k])
            u[k] = state.u_max * (F[k] / fk if fk > 0 else V[k])
    return u if j is None else u[j]


# ----------------------------------------------------------------------
# planners


def _clamp(pts: np.ndarray, extent) -> np.ndarray:
    """Mirror overshoot back across the walls (the cosine basis is even about each wall)."""
    L = np.asarray(extent, float)
    pts = np.abs(pts)
    pts = np.where(pts > L, 2 * L - pts, pts)
    return np.clip(pts, 0.0, L)


def _blocked(env: Environment, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Segments that end in, or pass through, a closed footprint."""
    if not env.buildings:
        return np.zeros(len(p0), bool)
    _, _, hit = _slab(p0, p1, env.boxes)
    return hit.any(axis=1)


_FALLBACK_TURNS = np.array([s * k * math.pi / 16 for k in range(1, 17) for s in (1, -1)])


def _safe_step(env: Environment, p: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Largest-agreement heading whose step stays in free space; hold position if none."""
    c, s = np.cos(_FALLBACK_TURNS), np.sin(_FALLBACK_TURNS)
    rot = np.stack([c * u[0] - s * u[1], s * u[0] + c * u[1]], axis=1)
    cand = _clamp(p + rot * dt, env.extent)
    ok = ~_blocked(env, np.repeat(p[None], len(cand), 0), cand)
    if ok.any():
        return cand[np.argmax(ok)]
    return p.copy()


class ErgodicTeam:
    """Synchronous step-by-step ergodic controller for a team.

    ``variant`` is ``plain`` (no obstacle handling) or ``avoiding``. With
    ``coupling="independent"`` every agent keeps its own coefficients, mirroring a
    per-agent planner.
    """

    def __init__(self, env: Environment, target: TargetDistribution, starts, variant: str = "plain",
                 K: int = 10, u_max: float = 1.0, seed: int = 0, coupling: str = "shared",
                 d_infl: float | None = None, weights: str = "sobolev", walls: bool | None = None):
        if variant not in ("plain", "avoiding"):
            raise ValueError(f"unknown variant {variant!r}")
        if coupling not in ("shared", "independent"):
            raise ValueError(f"unknown coupling {coupling!r}")
        self.env = env
        self.variant = variant
        self.modes = ModeGrid.for_env(env, K, weights)
        self.mu = spectral_mu(target, self.modes)
        self.d_infl = 2 * env.sensor_radius if d_infl is None else d_infl
        self.walls = walls
        starts = np.asarray(starts, float).reshape(-1, 2)
        if variant == "avoiding" and in_obstacle(env, starts).any():
            raise ValueError("obstacle-avoiding agents must start in free space")
        rng = np.random.default_rng(seed)
        if coupling == "shared":
            self.states = [ErgodicState(self.modes, self.mu, starts, u_max, rng=rng)]
        else:
            self.states = [ErgodicState(self.modes, self.mu, s[None], u_max, rng=rng) for s in starts]

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([s.positions for s in self.states])

    def metric(self) -> float:
        return float(np.mean([s.metric() for s in self.states]))

    def step(self, dt: float) -> np.ndarray:
        """Advance every agent one tick; returns the new (N, 2) positions."""
        for st in self.states:
            p = st.positions
            if self.variant == "avoiding":
                u = avoid_control_step(st, self.env, self.d_infl, walls=self.walls)
                nxt = _clamp(p + u * dt, self.env.extent)
                bad = _blocked(self.env, p, nxt)
                for j in np.nonzero(bad)[0]:
                    nxt[j] = _safe_step(self.env, p[j], u[j], dt)
            else:
                u = control_step(st)
                nxt = _clamp(p + u * dt, self.env.extent)
            accumulate_C_k(st, nxt, dt)
        return self.positions


def single_ergodic(env: Environment, target: TargetDistribution, steps: int, dt: float, start=None,
                   seed: int = 0, K: int = 10, u_max: float = 1.0, weights: str = "sobolev") -> Trajectory:
    """Open-loop ergodic route for one agent at the sensing altitude."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if start is None:
        start = np.random.default_rng(seed).uniform((0, 0), env.extent)
    team = ErgodicTeam(env, target, [start], "plain", K, u_max, seed, weights=weights)
    pts = [team.positions[0]]
    for _ in range(steps):
        pts.append(team.step(dt)[0])
    return Trajectory.from_ground(np.asarray(pts), env.optimal_altitude, dt)


def single_erg_avoid_obs(env: Environment, target: TargetDistribution, steps: int, dt: float, start=None,
                         seed: int = 0, K: int = 10, u_max: float = 1.0, d_infl: float | None = None,
                         weights: str = "sobolev") -> Trajectory:
    """Ergodic route that steers around footprints and never leaves free space."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if start is None:
        from .engine import place_agents

        start = place_agents(env, 1, seed=seed)[0]
    team = ErgodicTeam(env, target, [start], "avoiding", K, u_max, seed, d_infl=d_infl, weights=weights)
    pts = [team.positions[0]]
    for _ in range(steps):
        pts.append(team.step(dt)[0])
    return Trajectory.from_ground(np.asarray(pts), env.optimal_altitude, dt)


VARIANTS = ("naive", "biased", "avoiding")


def multi_ergodic(env: Environment, n: int, variant: str, steps: int, dt: float, starts=None, seed: int = 0,
                  K: int = 10, u_max: float = 1.0, coupling: str = "shared", cell_size: float = 0.5,
                  d_infl: float | None = None, weights: str = "sobolev", clearance: float = 1.0) -> MultiPath:
    """Team ergodic coverage.

    naive: uniform target over the whole rectangle, then fly-over repair.
    biased: uniform target over free ground, then fly-over repair.
    avoiding: free-ground target with the repulsive blend; no repair needed.
    """
    if n < 1:
        raise ValueError("need at least one agent")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if starts is None:
        from .engine import place_agents

        starts = place_agents(env, n, seed=seed)
    target = vacant_target(env, cell_size) if variant == "naive" else free_target(env, cell_size)
    team = ErgodicTeam(env, target, starts, "avoiding" if variant == "avoiding" else "plain", K, u_max, seed,
                       coupling, d_infl, weights)
    hist = np.empty((steps + 1, n, 2))
    hist[0] = team.positions
    for k in range(steps):
        hist[k + 1] = team.step(dt)
    paths = []
    for j in range(n):
        tr = Trajectory.from_ground(hist[:, j], env.optimal_altitude, dt, agent_id=j)
        if variant != "avoiding":
            tr = fly_over_buildings(tr, env, u_max, dt, clearance)
        paths.append(tr)
    return MultiPath(paths)
