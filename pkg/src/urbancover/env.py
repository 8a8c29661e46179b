"""Urban workspace: ground rectangle, box buildings, sensor model and random city generation."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# (extent, building count, max height) per environment family
FAMILIES = {
    "tall-high": ((50.96, 39.33), 27, 29.50),
    "tall-low": ((56.25, 53.03), 16, 14.25),
    "short-high": ((64.26, 53.80), 79, 12.50),
    "short-low": ((96.67, 62.92), 23, 7.2),
    "mixed": ((147.0, 59.0), None, None),
}

# fraction of the ground covered by footprints; not given for the families, chosen here
DENSITY = {"high": 0.30, "low": 0.12}

DEFAULT_OPTIMAL_ALTITUDE = 3.0
DEFAULT_SENSOR_RADIUS = 2.0
DEFAULT_CLEARANCE = 1.0


@dataclass(frozen=True)
class Building:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate footprint {self}")
        if self.height <= 0:
            raise ValueError(f"building height must be positive, got {self.height}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def sensor_footprint_radius(h: float, slope: float = DEFAULT_SENSOR_RADIUS / DEFAULT_OPTIMAL_ALTITUDE) -> float:
    """Ground radius of the downward camera disc at altitude ``h`` (linear model)."""
    return slope * h


@dataclass(frozen=True)
class Environment:
    extent: tuple[float, float]
    buildings: tuple[Building, ...] = ()
    optimal_altitude: float = DEFAULT_OPTIMAL_ALTITUDE
    sensor_radius: float = DEFAULT_SENSOR_RADIUS
    max_altitude: float | None = None
    name: str = "custom"
    _boxes: np.ndarray = field(init=False, repr=False, compare=False)
    _heights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L1, L2 = (float(v) for v in self.extent)
        object.__setattr__(self, "extent", (L1, L2))
        object.__setattr__(self, "buildings", tuple(self.buildings))
        if L1 <= 0 or L2 <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        if self.sensor_radius <= 0:
            raise ValueError("sensor_radius must be positive")
        if self.optimal_altitude <= 0:
            raise ValueError("optimal_altitude must be positive")
        for b in self.buildings:
            if b.x_min < 0 or b.y_min < 0 or b.x_max > L1 or b.y_max > L2:
                raise ValueError(f"building {b} leaves the ground rectangle")
        top = max((b.height for b in self.buildings), default=0.0)
        if self.max_altitude is None:
            object.__setattr__(self, "max_altitude", max(top + DEFAULT_CLEARANCE, self.optimal_altitude))
        if not 0 < self.optimal_altitude <= self.max_altitude:
            raise ValueError("need 0 < optimal_altitude <= max_altitude")
        if self.buildings and self.optimal_altitude >= top:
            warnings.warn(
                "optimal altitude clears every building; fly-over never costs sensing",
                stacklevel=2,
            )
        boxes = np.array([[b.x_min, b.y_min, b.x_max, b.y_max] for b in self.buildings], float).reshape(-1, 4)
        object.__setattr__(self, "_boxes", boxes)
        object.__setattr__(self, "_heights", np.array([b.height for b in self.buildings], float))

    @property
    def boxes(self) -> np.ndarray:
        """Footprints as an (B, 4) array of x_min, y_min, x_max, y_max."""
        return self._boxes

    @property
    def heights(self) -> np.ndarray:
        return self._heights

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]

    def inside(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.extent[0] and 0.0 <= y <= self.extent[1]

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent),
            "optimal_altitude": self.optimal_altitude,
            "sensor_radius": self.sensor_radius,
            "max_altitude": self.max_altitude,
            "buildings": [
                {"x_min": b.x_min, "y_min": b.y_min, "x_max": b.x_max, "y_max": b.y_max, "height": b.height}
                for b in self.buildings
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, name: str = "custom") -> "Environment":
        return cls(
            extent=tuple(d["extent"]),
            buildings=tuple(Building(**b) for b in d.get("buildings", [])),
            optimal_altitude=d.get("optimal_altitude", DEFAULT_OPTIMAL_ALTITUDE),
            sensor_radius=d.get("sensor_radius", DEFAULT_SENSOR_RADIUS),
            max_altitude=d.get("max_altitude"),
            name=d.get("name", name),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "Environment":
        p = Path(path)
        return cls.from_dict(json.loads(p.read_text()), name=p.stem)


# ----------------------------------------------------------------------
# geometric predicates


def in_obstacle(env: Environment, pts) -> np.ndarray:
    """Vectorized closed-footprint membership for an (..., 2) array of ground points."""
    pts = np.asarray(pts, float)
    if not env.buildings:
        return np.zeros(pts.shape[:-1], bool)
    x = pts[..., 0, None]
    y = pts[..., 1, None]
    b = env.boxes
    hit = (x >= b[:, 0]) & (x <= b[:, 2]) & (y >= b[:, 1]) & (y <= b[:, 3])
    return hit.any(axis=-1)


def point_in_obstacle(env: Environment, x) -> bool:
    """True iff ground point ``x`` lies in some footprint; footprint edges count as obstacle."""
    px, py = float(x[0]), float(x[1])
    if not env.inside(px, py):
        raise ValueError(f"point ({px}, {py}) is outside the ground rectangle {env.extent}")
    return bool(in_obstacle(env, np.array([px, py])))


def in_solid(env: Environment, pts3) -> np.ndarray:
    """Membership of 3D points in any closed building prism."""
    pts3 = np.asarray(pts3, float)
    if not env.buildings:
        return np.zeros(pts3.shape[:-1], bool)
    x, y, h = pts3[..., 0, None], pts3[..., 1, None], pts3[..., 2, None]
    b = env.boxes
    hit = (x >= b[:, 0]) & (x <= b[:, 2]) & (y >= b[:, 1]) & (y <= b[:, 3]) & (h <= env.heights)
    return hit.any(axis=-1)


@dataclass(frozen=True)
class GroundGrid:
    """Regular cell grid over the ground rectangle; ``cell_size`` is adjusted to tile it exactly."""

    nx: int
    ny: int
    dx: float
    dy: float

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> np.ndarray:
        """(ny, nx, 2) array of cell centers, row-major with y as the row index."""
        xs = (np.arange(self.nx) + 0.5) * self.dx
        ys = (np.arange(self.ny) + 0.5) * self.dy
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X, Y], axis=-1)


def ground_grid(env: Environment, cell_size: float) -> GroundGrid:
    return grid_for_extent(env.extent, cell_size)


def grid_for_extent(extent, cell_size: float) -> GroundGrid:
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    L1, L2 = extent
    if cell_size > min(L1, L2):
        raise ValueError(f"cell_size {cell_size} exceeds the smaller extent {min(L1, L2)}")
    nx = max(1, round(L1 / cell_size))
    ny = max(1, round(L2 / cell_size))
    return GroundGrid(nx, ny, L1 / nx, L2 / ny)


def obstacle_mask(env: Environment, grid: GroundGrid) -> np.ndarray:
    return in_obstacle(env, grid.centers())


def free_area(env: Environment, cell_size: float) -> float:
    """Approximate area of the free ground by counting cells whose centers are free."""
    grid = ground_grid(env, cell_size)
    return float((~obstacle_mask(env, grid)).sum()) * grid.cell_area


def segment_building_crossings(env: Environment, p, q) -> list[tuple[Building, float, float]]:
    """Parameter intervals [t_in, t_out] in [0, 1] where segment pq lies in a (closed) footprint.

    Sorted by entry parameter. A segment touching only an edge or corner yields a
    zero-length interval.
    """
    p = np.asarray(p, float)[:2]
    q = np.asarray(q, float)[:2]
    d = q - p
    out = []
    for i, (x0, y0, x1, y1) in enumerate(env.boxes):
        lo, hi = 0.0, 1.0
        for axis, (a, b) in enumerate(((x0, x1), (y0, y1))):
            if d[axis] == 0.0:
                if p[axis] < a or p[axis] > b:
                    lo, hi = 1.0, 0.0
                    break
                continue
            ta = (a - p[axis]) / d[axis]
            tb = (b - p[axis]) / d[axis]
            if ta > tb:
                ta, tb = tb, ta
            lo, hi = max(lo, ta), min(hi, tb)
            if lo > hi:
                break
        if lo <= hi:
            out.append((env.buildings[i], lo, hi))
    out.sort(key=lambda c: c[1])
    return out


def nearest_obstacle(env: Environment, pts) -> tuple[np.ndarray, np.ndarray]:
    """Distance to, and nearest point on, the closest footprint for each point in an (n, 2) array.

    Ties go to the lowest building index. With no buildings, distances are inf.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    n = len(pts)
    if not env.buildings:
        return np.full(n, np.inf), np.full((n, 2), np.nan)
    b = env.boxes
    cx = np.clip(pts[:, 0, None], b[:, 0], b[:, 2])
    cy = np.clip(pts[:, 1, None], b[:, 1], b[:, 3])
    d2 = (pts[:, 0, None] - cx) ** 2 + (pts[:, 1, None] - cy) ** 2
    k = np.argmin(d2, axis=1)
    rows = np.arange(n)
    return np.sqrt(d2[rows, k]), np.stack([cx[rows, k], cy[rows, k]], axis=1)


# ----------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class EnvSpec:
    family: str = "custom"
    extent: tuple[float, float] = (10.0, 10.0)
    building_count: int = 0
    height_range: tuple[float, float] = (4.0, 8.0)
    density: float = 0.2
    seed: int = 0
    min_gap: float = 1.0
    optimal_altitude: float = DEFAULT_OPTIMAL_ALTITUDE
    sensor_radius: float = DEFAULT_SENSOR_RADIUS
    max_attempts: int = 20000

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("extent must be positive")
        if self.building_count < 0:
            raise ValueError("building_count must be non-negative")
        lo, hi = self.height_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad height_range {self.height_range}")
        if not 0 < self.density < 1:
            raise ValueError("density must lie in (0, 1)")

    @classmethod
    def from_family(cls, family: str, seed: int = 0, **overrides) -> "EnvSpec":
        if family not in FAMILIES:
            raise ValueError(f"unknown environment family {family!r}; choose from {sorted(FAMILIES)}")
        extent, count, top = FAMILIES[family]
        if family == "mixed":
            # the mixed row carries no height or count; the caller must supply them
            missing = {"building_count", "height_range"} - overrides.keys()
            if missing:
                raise ValueError(f"family 'mixed' needs explicit {sorted(missing)}")
            return cls(family=family, extent=extent, seed=seed, **overrides)
        kw = dict(
            family=family,
            extent=extent,
            building_count=count,
            height_range=(0.5 * top, top),
            density=DENSITY[family.split("-")[1]],
            seed=seed,
        )
        kw.update(overrides)
        return cls(**kw)


def generate_environment(spec: EnvSpec) -> Environment:
    """Place ``spec.building_count`` separated box buildings by seeded rejection sampling."""
    rng = np.random.default_rng(spec.seed)
    L1, L2 = spec.extent
    placed: list[Building] = []
    if spec.building_count:
        side = math.sqrt(spec.density * L1 * L2 / spec.building_count)
        attempts = 0
        while len(placed) < spec.building_count:
            attempts += 1
            if attempts > spec.max_attempts:
                raise RuntimeError(
                    f"could not place {spec.building_count} buildings at density {spec.density:.2f} "
                    f"in {L1}x{L2} (placed {len(placed)})"
                )
            w, d = rng.uniform(0.6 * side, 1.4 * side, size=2)
            w, d = min(w, L1 / 2), min(d, L2 / 2)
            x0 = rng.uniform(0.0, L1 - w)
            y0 = rng.uniform(0.0, L2 - d)
            g = spec.min_gap
            if any(
                x0 < b.x_max + g and b.x_min < x0 + w + g and y0 < b.y_max + g and b.y_min < y0 + d + g
                for b in placed
            ):
                continue
            h = rng.uniform(*spec.height_range)
            placed.append(Building(float(x0), float(y0), float(x0 + w), float(y0 + d), float(h)))
        # pin the tallest building to the family's stated maximum
        top = int(np.argmax([b.height for b in placed]))
        placed[top] = replace(placed[top], height=float(spec.height_range[1]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Environment(
            extent=(L1, L2),
            buildings=tuple(placed),
            optimal_altitude=spec.optimal_altitude,
            sensor_radius=spec.sensor_radius,
            name=spec.family,
        )


def empty_environment(L1: float, L2: float | None = None, **kw) -> Environment:
    return Environment(extent=(L1, L2 if L2 is not None else L1), **kw)


def resolve_environment(name: str, seed: int = 0) -> Environment:
    """Environment from a family name, ``emptyN``/``emptyWxH`` shorthand, or a JSON path."""
    if name.startswith("empty"):
        dims = name[len("empty"):] or "10"
        parts = [float(v) for v in dims.split("x")]
        return empty_environment(*parts[:2], name=name)
    if name in FAMILIES:
        return generate_environment(EnvSpec.from_family(name, seed=seed))
    path = Path(name)
    if path.exists():
        return Environment.from_json(path)
    raise ValueError(f"unknown environment {name!r}: not a family, emptyN, or readable JSON file")
