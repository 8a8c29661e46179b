"""Plain SVG ground-plane drawings of worlds, paths and partitions."""

from __future__ import annotations

import numpy as np

from .env import Environment
from .traj import Trajectory

PALETTE = [
    "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
    "#17becf", "#bcbd22", "#ff7f0e", "#7f7f7f", "#393b79",
]
FLYOVER = "#d62728"
MAX_POINTS = 4000


def _thin(tr: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Drop samples evenly down to ``MAX_POINTS`` but keep every observing flip."""
    n = len(tr)
    if n <= MAX_POINTS:
        return tr.ground, tr.observing
    keep = np.zeros(n, bool)
    keep[:: int(np.ceil(n / MAX_POINTS))] = True
    keep[-1] = True
    flips = np.nonzero(np.diff(tr.observing.astype(int)))[0]
    keep[flips] = keep[flips + 1] = True
    return tr.ground[keep], tr.observing[keep]


def _runs(flags: np.ndarray):
    """Yield (start, stop, value) for maximal runs of equal values; runs share their boundary sample."""
    start = 0
    for i in range(1, len(flags) + 1):
        if i == len(flags) or flags[i] != flags[start]:
            yield start, i, bool(flags[start])
            start = i


def svg(env: Environment, paths=(), labels: np.ndarray | None = None, scale: float = 8.0) -> str:
    L1, L2 = env.extent
    W, H = L1 * scale, L2 * scale

    def xy(p):
        return f"{p[0] * scale:.2f},{(L2 - p[1]) * scale:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" viewBox="0 0 {W:.2f} {H:.2f}">',
        f'<rect x="0" y="0" width="{W:.2f}" height="{H:.2f}" fill="white" stroke="black"/>',
    ]
    if labels is not None:
        ny, nx = labels.shape
        cw, ch = W / nx, H / ny
        for r in range(ny):
            row = labels[r]
            for a, b, _ in _runs(row):
                color = PALETTE[int(row[a]) % len(PALETTE)]
                y = (ny - 1 - r) * ch
                out.append(f'<rect x="{a * cw:.2f}" y="{y:.2f}" width="{(b - a) * cw:.2f}" height="{ch:.2f}" '
                           f'fill="{color}" fill-opacity="0.15" stroke="none"/>')
    for b in env.buildings:
        out.append(f'<rect x="{b.x_min * scale:.2f}" y="{(L2 - b.y_max) * scale:.2f}" '
                   f'width="{(b.x_max - b.x_min) * scale:.2f}" height="{(b.y_max - b.y_min) * scale:.2f}" '
                   f'fill="#999999" stroke="#555555"><title>h={b.height:g}</title></rect>')
    for k, tr in enumerate(paths):
        if len(tr) == 0:
            continue
        color = PALETTE[k % len(PALETTE)]
        pts, obs = _thin(tr)
        # a segment is drawn red when either endpoint is off the sensing altitude
        seg_obs = obs[:-1] & obs[1:] if len(obs) > 1 else obs
        for a, b, good in _runs(seg_obs):
            poly = " ".join(xy(p) for p in pts[a: b + 1])
            out.append(f'<polyline points="{poly}" fill="none" stroke="{color if good else FLYOVER}" stroke-width="1"/>')
        out.append(f'<circle cx="{pts[-1][0] * scale:.2f}" cy="{(L2 - pts[-1][1]) * scale:.2f}" r="3" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
