"""Command-line runner: single trials, experiment grids, world generation and SVG rendering."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .engine import ALGORITHMS, SimConfig, SimResult, config_from_dict, run
from .env import FAMILIES, Environment, EnvSpec, generate_environment
from .metrics import CSV_HEADER, write_metrics_csv
from .partition import grid_partition, voronoi_partition
from .render import svg
from .traj import Trajectory

log = logging.getLogger("urbancover")

METRIC_FIELDS = CSV_HEADER[1:]


class UsageError(Exception):
    """Bad flags, unreadable input or an invalid configuration (exit code 2)."""


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad TOML in {path}: {exc}") from exc


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, names) -> Path:
    manifest = {"files": {name: sha256(out / name) for name in sorted(names)}}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- single run ------------------------------------------------------------

# CLI flag dest -> SimConfig field
RUN_FLAGS = {
    "env": "env",
    "alg": "algorithm",
    "agents": "n",
    "steps": "steps",
    "dt": "dt",
    "umax": "u_max",
    "seed": "seed",
    "spacing": "spacing",
    "probes": "probes",
    "metrics_every": "metrics_every",
}


def build_config(args) -> SimConfig:
    values: dict = {}
    if args.config:
        data = load_toml(args.config)
        values.update(data.get("sim", data))
    for flag, name in RUN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        cfg = config_from_dict(values)
        cfg.build_env()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    return cfg


def final_partition(result: SimResult):
    cfg = result.config
    if cfg.algorithm == "voronoi":
        final = np.array([tr.ground[-1] for tr in result.paths])
        return voronoi_partition(final, result.env.extent, cfg.cell_size, check=False)
    if cfg.algorithm == "grid":
        return grid_partition(result.env.extent, cfg.n, cfg.cell_size)
    return None


def summary_dict(result: SimResult) -> dict:
    # wall-clock time is left out so reruns are byte-identical
    return {
        "config": result.config.as_dict(),
        "env": result.env.name,
        "samples_per_agent": len(result.paths[0]),
        "final": result.final.as_dict(),
    }


def write_run(result: SimResult, out) -> list[str]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = ["metrics.csv", "env.json", "summary.json", "render.svg"]
    write_metrics_csv(result.reports, out / "metrics.csv")
    result.env.to_json(out / "env.json")
    for i, tr in enumerate(result.paths):
        tr.to_csv(out / f"traj_{i}.csv")
        names.append(f"traj_{i}.csv")
    part = final_partition(result)
    labels = None
    if part is not None:
        part.to_csv(out / "partition.csv")
        names.append("partition.csv")
        labels = part.labels
    (out / "render.svg").write_text(svg(result.env, result.paths, labels))
    (out / "summary.json").write_text(json.dumps(summary_dict(result), indent=2, sort_keys=True) + "\n")
    write_manifest(out, names)
    return names + ["manifest.json"]


def cmd_run(args) -> int:
    cfg = build_config(args)
    result = run(cfg)
    write_run(result, args.out)
    f = result.final
    print(f"{cfg.algorithm} n={cfg.n} on {result.env.name}: coverage {f.percent_coverage:.1f}%, "
          f"mean revisit {f.mean_revisit:.2f}s, wall {result.wall_time:.1f}s -> {args.out}")
    return 0


# -- experiment grid -------------------------------------------------------

@dataclass
class ExperimentGrid:
    envs: list[str]
    algorithms: list[str]
    teams: list[int]
    trials: int = 3
    out: str = "results"
    workers: int | None = None
    series_team: int = 10
    sim: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.envs or not self.algorithms or not self.teams:
            raise ValueError("envs, algorithms and teams must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentGrid":
        known = {"envs", "algorithms", "teams", "trials", "out", "workers", "series_team", "sim"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**d)

    def configs(self) -> list[SimConfig]:
        """One config per (env, algorithm, team size, trial); every trial shares the same world."""
        base = int(self.sim.get("seed", 0))
        env_seed = self.sim.get("env_seed", base)
        shared = {k: v for k, v in self.sim.items() if k not in ("seed", "env_seed", "env", "algorithm", "n")}
        return [
            config_from_dict({**shared, "env": e, "algorithm": a, "n": n, "seed": base + t, "env_seed": env_seed})
            for e in self.envs for a in self.algorithms for n in self.teams for t in range(self.trials)
        ]


def _light(result: SimResult) -> SimResult:
    # trajectories and probe state are large and not needed for the tables
    return replace(result, paths=None, probes=None)


def _run_light(cfg: SimConfig) -> SimResult:
    return _light(run(cfg))


def run_grid(grid: ExperimentGrid) -> list[SimResult]:
    configs = grid.configs()
    workers = grid.workers or os.cpu_count() or 1
    if workers <= 1:
        results = [_run_light(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_light, configs))
    return sorted(results, key=_result_key)


def _result_key(r: SimResult):
    c = r.config
    return (c.env, c.algorithm, c.n, c.seed)


# fields that must agree for trials to be pooled into one row
_POOLED = ("steps", "dt", "u_max", "probes", "probe_radius", "metrics_every", "cell_size", "K",
           "lane_spacing", "spacing", "coupling", "relocate", "clearance", "env_seed")


def summarize(results, series_team: int | None = 10) -> tuple[list[dict], list[dict]]:
    """Final-step mean and std per (env, algorithm, n), plus full time series for one team size."""
    results = list(results)
    if not results:
        raise ValueError("summarize needs at least one result")
    groups: dict[tuple, list[SimResult]] = {}
    for r in results:
        groups.setdefault((r.config.env, r.config.algorithm, r.config.n), []).append(r)
    table = []
    for key in sorted(groups):
        members = groups[key]
        ref = members[0].config
        for r in members[1:]:
            diff = [f for f in _POOLED if getattr(r.config, f) != getattr(ref, f)]
            if diff:
                raise ValueError(f"incompatible configs grouped under {key}: differ in {diff}")
        row = {"env": key[0], "algorithm": key[1], "n": key[2], "trials": len(members)}
        for name in METRIC_FIELDS:
            vals = np.array([getattr(r.final, name) for r in members])
            row[f"mean_{name}"] = float(vals.mean())
            row[f"std_{name}"] = float(vals.std())
        table.append(row)
    series = []
    if series_team is not None:
        for r in sorted(results, key=_result_key):
            if r.config.n != series_team:
                continue
            for rep in r.reports:
                series.append({"env": r.config.env, "algorithm": r.config.algorithm, "n": r.config.n,
                               "seed": r.config.seed, **rep.as_dict()})
    return table, series


def _write_rows(path: Path, rows: list[dict], header: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def write_grid(results: list[SimResult], out, series_team: int | None = 10) -> list[str]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    per_trial = [{"env": r.config.env, "algorithm": r.config.algorithm, "n": r.config.n, "seed": r.config.seed,
                  **{k: getattr(r.final, k) for k in METRIC_FIELDS}} for r in sorted(results, key=_result_key)]
    _write_rows(out / "summary.csv", per_trial, ["env", "algorithm", "n", "seed"] + METRIC_FIELDS)
    table, series = summarize(results, series_team)
    agg_header = ["env", "algorithm", "n", "trials"] + [f"{s}_{m}" for m in METRIC_FIELDS for s in ("mean", "std")]
    _write_rows(out / "aggregate.csv", table, agg_header)
    _write_rows(out / "timeseries.csv", series, ["env", "algorithm", "n", "seed"] + CSV_HEADER)
    names = ["summary.csv", "aggregate.csv", "timeseries.csv"]
    write_manifest(out, names)
    return names + ["manifest.json"]


def cmd_grid(args) -> int:
    data = load_toml(args.config)
    if args.out:
        data["out"] = args.out
    if args.workers:
        data["workers"] = args.workers
    try:
        grid = ExperimentGrid.from_dict(data)
        for cfg in grid.configs()[:: grid.trials * len(grid.teams) * len(grid.algorithms)]:
            cfg.build_env()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid grid: {exc}") from exc
    results = run_grid(grid)
    write_grid(results, grid.out, grid.series_team)
    print(f"{len(results)} trials -> {grid.out}")
    return 0


# -- worlds and drawings ---------------------------------------------------

def cmd_gen_env(args) -> int:
    overrides = {}
    if args.buildings is not None:
        overrides["building_count"] = args.buildings
    if args.heights is not None:
        overrides["height_range"] = tuple(args.heights)
    try:
        spec = EnvSpec.from_family(args.family, seed=args.seed, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    env = generate_environment(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    env.to_json(args.out)
    print(f"{args.family}: {len(env.buildings)} buildings -> {args.out}")
    return 0


def cmd_render(args) -> int:
    try:
        env = Environment.from_json(args.env)
        paths = [Trajectory.from_csv(p, agent_id=i) for i, p in enumerate(args.traj)]
        labels = np.loadtxt(args.partition, delimiter=",", dtype=int, ndmin=2) if args.partition else None
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    Path(args.out).write_text(svg(env, paths, labels))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urbancover", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one trial")
    r.add_argument("--config", help="TOML file with SimConfig fields (flags override)")
    r.add_argument("--env", help="family name, emptyN / emptyWxH, or environment JSON")
    r.add_argument("--alg", choices=ALGORITHMS)
    r.add_argument("--agents", type=int)
    r.add_argument("--steps", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--umax", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--spacing", choices=("random", "equal"))
    r.add_argument("--probes", type=int)
    r.add_argument("--metrics-every", type=int)
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("grid", help="run an environment x algorithm x team-size x trial grid")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--workers", type=int)
    g.set_defaults(func=cmd_grid)

    e = sub.add_parser("gen-env", help="generate a world and write it as JSON")
    e.add_argument("--family", "--env", dest="family", required=True, choices=sorted(FAMILIES))
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--buildings", type=int)
    e.add_argument("--heights", type=float, nargs=2, metavar=("LOW", "HIGH"))
    e.add_argument("--out", default="env.json")
    e.set_defaults(func=cmd_gen_env)

    d = sub.add_parser("render", help="draw a world with trajectories and an optional partition")
    d.add_argument("--env", required=True, help="environment JSON")
    d.add_argument("--traj", nargs="*", default=[])
    d.add_argument("--partition")
    d.add_argument("--out", default="render.svg")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"urbancover: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"urbancover: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
