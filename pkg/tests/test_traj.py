import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbancover.env import Building, Environment, EnvSpec, empty_environment, generate_environment, in_solid
from urbancover.traj import (
    MultiPath,
    Trajectory,
    arc_lengths,
    concat,
    fly_over_buildings,
    observing_subset,
    rotate_cycle,
    swept_area,
)

H0 = 3.0


def block_world(height=5.0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Environment((10.0, 10.0), (Building(4, 4, 6, 6, height),), optimal_altitude=H0, sensor_radius=1.0)


def hover(pt, steps=5, h=H0):
    pts = np.tile([pt[0], pt[1], h], (steps, 1))
    return Trajectory.from_points(pts, dt=0.1, optimal_altitude=H0)


# -- observing subset ------------------------------------------------------

def test_observing_subset_examples():
    tr = hover((1, 1))
    sub = observing_subset(tr)
    assert np.array_equal(sub.t, tr.t) and np.array_equal(sub.pos, tr.pos)
    assert len(observing_subset(hover((1, 1), h=H0 + 2))) == 0
    pts = np.array([[0, 0, H0], [1, 0, 5.0], [2, 0, H0], [3, 0, 5.0]])
    alt = observing_subset(Trajectory.from_points(pts, dt=1.0, optimal_altitude=H0))
    assert alt.t.tolist() == [0.0, 2.0]


def test_check_rejects_bad_samples():
    tr = hover((1, 1))
    tr.check(H0, 1.0)
    bad = Trajectory(tr.t, tr.pos, ~tr.observing)
    with pytest.raises(ValueError):
        bad.check(H0)
    fast = Trajectory.from_points([[0, 0, H0], [1, 0, H0]], dt=0.1, optimal_altitude=H0)
    with pytest.raises(ValueError):
        fast.check(H0, 1.0)


# -- swept area ------------------------------------------------------------

def test_swept_disc_area():
    env = empty_environment(10, optimal_altitude=H0, sensor_radius=1.0)
    region = swept_area(MultiPath([hover((5, 5))]), env, 0.02)
    assert region.area == pytest.approx(math.pi, abs=0.05)


def test_swept_empty_when_never_observing():
    env = empty_environment(10, optimal_altitude=H0, sensor_radius=1.0)
    assert swept_area(hover((5, 5), h=8.0), env, 0.1).area == 0.0


def test_swept_excludes_building_cells():
    env = block_world()
    region = swept_area(hover((6.5, 5.0)), env, 0.05)
    assert not (region.mask & ~region.free).any()
    assert region.area > 0


def test_swept_bad_cell():
    with pytest.raises(ValueError):
        swept_area(hover((1, 1)), empty_environment(10), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=2, max_size=8))
def test_swept_monotone_and_inside_free(pts):
    env = block_world()
    g = np.array(pts)
    full = Trajectory.from_ground(g, H0, 0.1)
    part = Trajectory.from_ground(g[: len(g) // 2], H0, 0.1)
    a = swept_area(part, env, 0.25).mask
    b = swept_area(full, env, 0.25)
    assert not (a & ~b.mask).any()
    assert not (b.mask & ~b.free).any()


# -- fly-over --------------------------------------------------------------

def test_fly_over_no_crossing_unchanged():
    env = block_world()
    tr = Trajectory.from_ground([[0, 1], [0.1, 1], [0.2, 1]], H0, 0.1)
    out = fly_over_buildings(tr, env)
    assert np.array_equal(out.pos, tr.pos) and out.observing.all()


def test_fly_over_profile():
    env = block_world()
    g = np.column_stack([np.arange(0, 10.01, 0.1), np.full(101, 5.0)])
    out = fly_over_buildings(Trajectory.from_ground(g, H0, 0.1), env, u_max=1.0, dt=0.1)
    alts = out.altitude
    assert alts[0] == H0 and alts[-1] == H0 and alts.max() == pytest.approx(6.0)
    # 3 -> 6 -> 3, one climb and one drop
    levels = [alts[0]]
    for a in alts[1:]:
        if a in (H0, 6.0) and a != levels[-1]:
            levels.append(a)
    assert levels == [H0, 6.0, H0]
    assert np.array_equal(out.observing, np.abs(alts - H0) <= 1e-9)
    assert not in_solid(env, out.pos).any()
    out.check(H0, 1.0)


def test_fly_over_keeps_ground_route():
    env = block_world()
    g = np.array([[1.0, 5.0], [9.0, 5.0], [9.0, 2.0], [5.0, 9.0]])
    out = fly_over_buildings(Trajectory.from_ground(g, H0, 1.0), env, u_max=1.0, dt=1.0)
    # every input waypoint appears in order in the output ground track
    idx = 0
    for p in g:
        while idx < len(out) and np.linalg.norm(out.ground[idx] - p) > 1e-9:
            idx += 1
        assert idx < len(out)
    # and every output sample lies on the input polyline
    for q in out.ground:
        d = min(_seg_dist(q, g[i], g[i + 1]) for i in range(len(g) - 1))
        assert d <= 1e-9


def _seg_dist(q, a, b):
    ab = b - a
    t = np.clip(np.dot(q - a, ab) / np.dot(ab, ab), 0, 1)
    return float(np.linalg.norm(q - (a + t * ab)))


def test_fly_over_grazing_edge():
    env = block_world()
    g = np.array([[0.0, 4.0], [10.0, 4.0]])
    out = fly_over_buildings(Trajectory.from_ground(g, H0, 1.0), env)
    assert (~out.observing).any()
    assert not in_solid(env, out.pos).any()


def test_fly_over_too_tall_names_building():
    env = Environment((10, 10), (Building(4, 4, 6, 6, 5.0),), optimal_altitude=H0, max_altitude=5.5)
    g = np.array([[0.0, 5.0], [10.0, 5.0]])
    with pytest.raises(ValueError, match="building 0"):
        fly_over_buildings(Trajectory.from_ground(g, H0, 1.0), env)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 64), st.floats(0, 53)), min_size=2, max_size=6), st.integers(0, 3))
def test_fly_over_never_inside_solids(pts, seed):
    env = generate_environment(EnvSpec.from_family("short-high", seed=seed))
    out = fly_over_buildings(Trajectory.from_ground(np.array(pts), env.optimal_altitude, 0.1), env, 1.0, 0.1)
    assert not in_solid(env, out.pos).any()
    out.check(env.optimal_altitude, 1.0)


# -- cycles ----------------------------------------------------------------

def square_cycle():
    pts = np.array([[0, 0, H0], [1, 0, H0], [1, 1, H0], [0, 1, H0], [0, 0, H0]], float)
    return Trajectory(arc_lengths(pts), pts, np.ones(5, bool))


def test_rotate_identity_and_wrap():
    c = square_cycle()
    for off in (0.0, 4.0):
        r = rotate_cycle(c, off)
        assert np.allclose(r.pos, c.pos)


def test_rotate_to_next_corner():
    r = rotate_cycle(square_cycle(), 1.0)
    assert r.pos[0] == pytest.approx([1, 0, H0])
    assert {tuple(p) for p in r.pos[:-1]} == {tuple(p) for p in square_cycle().pos[:-1]}
    assert r.is_closed()
    assert r.t[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 50))
def test_rotate_preserves_length(off):
    c = square_cycle()
    r = rotate_cycle(c, off)
    assert r.length() == pytest.approx(c.length(), rel=1e-6)
    assert r.is_closed()


def test_rotate_open_path_error():
    tr = Trajectory.from_ground([[0, 0], [1, 0]], H0, 1.0)
    with pytest.raises(ValueError):
        rotate_cycle(tr, 0.5)


def test_concat():
    p = Trajectory.from_ground([[0, 0], [1, 0]], H0, 1.0)
    q = Trajectory.from_ground([[1, 0], [1, 1]], H0, 1.0)
    e = Trajectory.empty()
    assert concat(p, e) is p and concat(e, p) is p
    pq = concat(p, q)
    assert pq.ground.tolist() == [[0, 0], [1, 0], [1, 1]]
    assert np.all(np.diff(pq.t) > 0)
    with pytest.raises(ValueError):
        concat(p, Trajectory.from_ground([[2, 0], [3, 0]], H0, 1.0))


def test_csv_round_trip(tmp_path):
    env = block_world()
    g = np.column_stack([np.linspace(0, 10, 21), np.full(21, 5.0)])
    tr = fly_over_buildings(Trajectory.from_ground(g, H0, 0.5), env, 1.0, 0.5)
    tr.to_csv(tmp_path / "t.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()
    assert head[0] == "t,x,y,h,observing"
    assert head[1] == "0.000000,0.000000,5.000000,3.000000,1"
    back = Trajectory.from_csv(tmp_path / "t.csv")
    assert np.allclose(back.pos, tr.pos, atol=1e-6)
    assert np.array_equal(back.observing, tr.observing)
