"""Probe-based coverage statistics: coverage, visit counts, revisit gaps and time spent."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .env import Environment, in_obstacle

CSV_HEADER = [
    "t",
    "percent_coverage",
    "mean_visits",
    "std_visits",
    "mean_revisit",
    "std_revisit",
    "mean_time_spent",
    "std_time_spent",
]


def sees(probe, position, observing: bool, sensor_radius: float, probe_radius: float) -> bool:
    """Whether an agent sample's footprint disc meets the probe's disc (closed test)."""
    if not observing:
        return False
    d = np.hypot(probe[0] - position[0], probe[1] - position[1])
    return bool(d <= sensor_radius + probe_radius)


@dataclass(frozen=True)
class MetricsReport:
    t: float
    percent_coverage: float
    mean_visits: float
    std_visits: float
    mean_revisit: float
    std_revisit: float
    mean_time_spent: float
    std_time_spent: float

    def row(self) -> list[str]:
        return [f"{v:.6f}" for v in astuple(self)]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ProbeSet:
    """Random ground probes with per-probe visit intervals.

    A visit opens on the first step any observing agent sees the probe and closes on
    the first step none does; the probe is treated as seen for the whole step interval
    ``[t_k, t_{k+1})`` of each sample that sees it.
    """

    def __init__(self, points, probe_radius: float):
        self.points = np.asarray(points, float).reshape(-1, 2)
        if len(self.points) == 0:
            raise ValueError("a probe set needs at least one probe")
        if probe_radius < 0:
            raise ValueError("probe_radius must be non-negative")
        self.probe_radius = float(probe_radius)
        m = len(self.points)
        self.intervals: list[list[list[float]]] = [[] for _ in range(m)]
        self.open_since = np.full(m, np.nan)
        self.n_intervals = np.zeros(m, int)  # includes the open one
        self.closed_time = np.zeros(m)
        self.last_leave = np.full(m, np.nan)
        self.gap_sum = np.zeros(m)
        self.gap_count = np.zeros(m, int)
        self.t_last: float | None = None
        self._last_input = None  # (positions, observing, radius, seen) of the previous step

    @classmethod
    def sample(cls, env: Environment, m: int = 500, probe_radius: float | None = None, seed: int = 0) -> "ProbeSet":
        """Uniform probes over the free ground, by rejection."""
        if m < 1:
            raise ValueError("need at least one probe")
        rng = np.random.default_rng(seed)
        out = np.empty((0, 2))
        tries = 0
        while len(out) < m:
            tries += 1
            if tries > 1000:
                raise RuntimeError("no free ground to place probes on")
            cand = rng.uniform((0.0, 0.0), env.extent, size=(2 * m, 2))
            out = np.vstack([out, cand[~in_obstacle(env, cand)]])
        r = env.sensor_radius / 2 if probe_radius is None else probe_radius
        return cls(out[:m], r)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def is_open(self) -> np.ndarray:
        return ~np.isnan(self.open_since)

    def seen_by(self, positions, observing, sensor_radius: float) -> np.ndarray:
        """(m,) mask of probes seen by at least one observing agent."""
        pos = np.asarray(positions, float).reshape(-1, 3 if np.shape(positions)[-1] == 3 else 2)[:, :2]
        pos = pos[np.asarray(observing, bool).reshape(-1)]
        if len(pos) == 0:
            return np.zeros(self.m, bool)
        reach = sensor_radius + self.probe_radius
        d2 = ((self.points[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
        return (d2 <= reach * reach).any(axis=1)

    def record_step(self, positions, observing, t: float, sensor_radius: float) -> "ProbeSet":
        if self.t_last is not None and t < self.t_last:
            raise ValueError(f"time went backwards: {t} after {self.t_last}")
        self.t_last = float(t)
        positions = np.asarray(positions, float)
        observing = np.asarray(observing, bool)
        prev = self._last_input
        if (prev is not None and prev[2] == sensor_radius and np.array_equal(prev[0], positions)
                and np.array_equal(prev[1], observing)):
            seen = prev[3]  # agents holding still: same answer as last step
        else:
            seen = self.seen_by(positions, observing, sensor_radius)
            self._last_input = (positions.copy(), observing.copy(), sensor_radius, seen)
        opened = self.is_open

        for i in np.nonzero(seen & ~opened)[0]:
            if self.n_intervals[i]:
                self.gap_sum[i] += t - self.last_leave[i]
                self.gap_count[i] += 1
            self.open_since[i] = t
            self.n_intervals[i] += 1
            self.intervals[i].append([float(t), np.nan])

        for i in np.nonzero(~seen & opened)[0]:
            self.closed_time[i] += t - self.open_since[i]
            self.last_leave[i] = t
            self.open_since[i] = np.nan
            self.intervals[i][-1][1] = float(t)
        return self

    def time_spent(self, t_now: float) -> np.ndarray:
        extra = np.where(self.is_open, t_now - np.nan_to_num(self.open_since), 0.0)
        return self.closed_time + extra

    def revisit(self) -> np.ndarray:
        """Mean gap between consecutive visits per probe; 0 for probes seen fewer than twice."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.gap_count > 0, self.gap_sum / np.maximum(self.gap_count, 1), 0.0)

    def report(self, t_now: float | None = None) -> MetricsReport:
        if t_now is None:
            t_now = self.t_last if self.t_last is not None else 0.0
        visits = self.n_intervals.astype(float)
        rev = self.revisit()
        spent = self.time_spent(t_now)
        return MetricsReport(
            t=float(t_now),
            percent_coverage=100.0 * float((visits > 0).sum()) / self.m,
            mean_visits=float(visits.mean()),
            std_visits=float(visits.std()),
            mean_revisit=float(rev.mean()),
            std_revisit=float(rev.std()),
            mean_time_spent=float(spent.mean()),
            std_time_spent=float(spent.std()),
        )


def write_metrics_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.row())


def read_metrics_csv(path) -> list[MetricsReport]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsReport(*(float(r[k]) for k in CSV_HEADER)) for r in rows]
