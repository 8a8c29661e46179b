"""Discrete-time simulation loop tying planners, replay and the probe recorder together."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .env import Environment, in_obstacle, resolve_environment
from .ergodic import ErgodicTeam, free_target, multi_ergodic
from .lawnmower import equal_offsets, multi_lawnmower, repaired_cycle, sample_cycle
from .metrics import MetricsReport, ProbeSet
from .partition import grid_cover, voronoi_cover
from .traj import MultiPath, Trajectory, arc_lengths, observing_mask, point_at

log = logging.getLogger(__name__)

ALGORITHMS = ("lawnmower", "ergodic", "biased-ergodic", "avoid-ergodic", "voronoi", "grid")


@dataclass
class SimConfig:
    env: str = "empty10"
    algorithm: str = "lawnmower"
    n: int = 1
    steps: int = 15000
    dt: float = 0.1
    u_max: float = 1.0
    seed: int = 0
    env_seed: int | None = None
    start_seed: int | None = None
    control_seed: int | None = None
    probe_seed: int | None = None
    probes: int = 500
    probe_radius: float | None = None
    metrics_every: int = 100
    cell_size: float = 0.5
    K: int = 10
    lane_spacing: float | None = None
    spacing: str = "random"
    coupling: str = "shared"
    relocate: bool = False
    clearance: float = 1.0
    environment: Environment | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.dt <= 0 or self.u_max <= 0:
            raise ValueError("dt and u_max must be positive")
        if self.n < 1:
            raise ValueError("need at least one agent")
        if self.spacing not in ("random", "equal"):
            raise ValueError("spacing must be 'random' or 'equal'")
        if self.metrics_every < 1:
            raise ValueError("metrics_every must be >= 1")

    def _seed(self, explicit: int | None, stream: int) -> int:
        if explicit is not None:
            return explicit
        return int(np.random.SeedSequence([self.seed, stream]).generate_state(1)[0])

    @property
    def seeds(self) -> dict[str, int]:
        return {
            "env": self.seed if self.env_seed is None else self.env_seed,
            "start": self._seed(self.start_seed, 1),
            "control": self._seed(self.control_seed, 2),
            "probe": self._seed(self.probe_seed, 3),
        }

    def build_env(self) -> Environment:
        if self.environment is not None:
            return self.environment
        return resolve_environment(self.env, self.seeds["env"])

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "environment"}
        d["seeds"] = self.seeds
        return d


@dataclass
class SimResult:
    config: SimConfig
    env: Environment
    paths: MultiPath
    reports: list[MetricsReport]
    probes: ProbeSet
    wall_time: float

    @property
    def final(self) -> MetricsReport:
        return self.reports[-1]


def place_agents(env: Environment, n: int, mode: str = "random-free", seed: int = 0,
                 cycle: Trajectory | None = None) -> np.ndarray:
    """Starting ground positions: uniform over free ground, or uniform in arc length on a cycle."""
    if n < 1:
        raise ValueError("need at least one agent")
    rng = np.random.default_rng(seed)
    if mode == "random-free":
        out = np.empty((0, 2))
        for _ in range(1000):
            cand = rng.uniform((0.0, 0.0), env.extent, size=(max(4 * n, 16), 2))
            out = np.vstack([out, cand[~in_obstacle(env, cand)]])
            if len(out) >= n:
                return out[:n]
        raise RuntimeError("no free ground to place agents on")
    if mode == "on-cycle":
        if cycle is None:
            raise ValueError("on-cycle placement needs a cycle")
        arcs = arc_lengths(cycle.pos)
        return point_at(cycle.pos, arcs, rng.uniform(0.0, arcs[-1], size=n))[:, :2]
    raise ValueError(f"unknown placement mode {mode!r}")


def replay(plan: Trajectory, dt: float, steps: int) -> Trajectory:
    """Sample a plan on the engine clock, holding its final sample once it runs out."""
    idx = np.minimum(np.arange(steps + 1), len(plan) - 1)
    return Trajectory(dt * np.arange(steps + 1), plan.pos[idx], plan.observing[idx], plan.agent_id)


def _plan(cfg: SimConfig, env: Environment, seeds: dict) -> MultiPath:
    n, dt, u = cfg.n, cfg.dt, cfg.u_max
    alg = cfg.algorithm
    if alg == "lawnmower":
        cycle = repaired_cycle(env, cfg.lane_spacing, u, cfg.clearance)
        ell = cycle.length()
        if cfg.spacing == "equal":
            offsets = equal_offsets(n, ell)
        else:
            offsets = np.random.default_rng(seeds["start"]).uniform(0.0, ell, size=n)
        cycles = multi_lawnmower(env, n, cfg.lane_spacing, u, offsets, cfg.clearance)
        return MultiPath([sample_cycle(c, dt, cfg.steps, u, i, env.optimal_altitude) for i, c in enumerate(cycles)])
    starts = place_agents(env, n, "random-free", seeds["start"])
    if alg in ("ergodic", "biased-ergodic"):
        variant = "naive" if alg == "ergodic" else "biased"
        plan = multi_ergodic(env, n, variant, cfg.steps, dt, starts, seeds["control"], cfg.K, u,
                             cfg.coupling, cfg.cell_size, clearance=cfg.clearance)
    elif alg == "voronoi":
        plan = voronoi_cover(env, n, cfg.steps, None, seeds["control"], starts, cfg.cell_size, u, dt, cfg.relocate)
    elif alg == "grid":
        plan = grid_cover(env, n, seeds["control"], starts, u, dt, cfg.cell_size, cfg.relocate)
    else:
        raise AssertionError(alg)
    return MultiPath([replay(tr, dt, cfg.steps) for tr in plan])


def run(cfg: SimConfig) -> SimResult:
    """Run one trial: plan (or steer) every agent for ``cfg.steps`` ticks and record metrics each tick."""
    t_start = time.perf_counter()
    env = cfg.build_env()
    seeds = cfg.seeds
    probes = ProbeSet.sample(env, cfg.probes, cfg.probe_radius, seeds["probe"])
    n, dt, steps = cfg.n, cfg.dt, cfg.steps
    context = f"{cfg.algorithm} (n={n}, env={env.name}, seed={cfg.seed})"

    team = None
    try:
        if cfg.algorithm == "avoid-ergodic":
            starts = place_agents(env, n, "random-free", seeds["start"])
            team = ErgodicTeam(env, free_target(env, cfg.cell_size), starts, "avoiding", cfg.K, cfg.u_max,
                               seeds["control"], cfg.coupling)
            ground = np.empty((steps + 1, n, 2))
            ground[0] = team.positions
        else:
            plan = _plan(cfg, env, seeds)
            pos = np.stack([tr.pos for tr in plan], axis=1)
            obs = np.stack([tr.observing for tr in plan], axis=1)
    except Exception as exc:
        raise RuntimeError(f"planning failed for {context}: {exc}") from exc

    h0 = env.optimal_altitude
    reports = []
    for k in range(steps + 1):
        if team is not None:
            if k > 0:
                ground[k] = team.step(dt)
            p_k, o_k = ground[k], np.ones(n, bool)
        else:
            p_k, o_k = pos[k], obs[k]
        t = k * dt
        probes.record_step(p_k, o_k, t, env.sensor_radius)
        if k > 0 and (k % cfg.metrics_every == 0 or k == steps):
            reports.append(probes.report(t))

    if team is not None:
        t_axis = dt * np.arange(steps + 1)
        paths = MultiPath([
            Trajectory(t_axis, np.column_stack([ground[:, j], np.full(steps + 1, h0)]), np.ones(steps + 1, bool), j)
            for j in range(n)
        ])
    else:
        paths = plan
    for tr in paths:
        tr.observing = observing_mask(tr.altitude, h0)
    wall = time.perf_counter() - t_start
    log.info("%s finished in %.2fs: coverage %.1f%%", context, wall, reports[-1].percent_coverage)
    return SimResult(cfg, env, paths, reports, probes, wall)


def config_from_dict(d: dict) -> SimConfig:
    names = {f.name for f in fields(SimConfig)} - {"environment"}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return SimConfig(**d)


__all__ = ["ALGORITHMS", "SimConfig", "SimResult", "config_from_dict", "place_agents", "replay", "run", "asdict"]
