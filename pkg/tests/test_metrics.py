import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbancover.env import EnvSpec, empty_environment, generate_environment, in_obstacle
from urbancover.metrics import CSV_HEADER, MetricsReport, ProbeSet, read_metrics_csv, sees, write_metrics_csv

R = 1.0


def one_probe(p=(5.0, 5.0), r=0.5):
    return ProbeSet([p], r)


def feed(ps, xs, dt=1.0, observing=True, t0=0.0):
    """Step one agent along ground positions ``xs`` (one per tick)."""
    for k, x in enumerate(xs):
        ps.record_step(np.array([x]), np.array([observing]), t0 + k * dt, R)
    return ps


def test_sees_examples():
    assert sees((0, 0), (0, 0, 3), True, 1.0, 0.5)
    assert not sees((0, 0), (0, 0, 8), False, 1.0, 0.5)
    assert sees((0, 0), (1.5, 0, 3), True, 1.0, 0.5)
    assert not sees((0, 0), (1.5 + 1e-9, 0, 3), True, 1.0, 0.5)


def test_pass_through_one_interval():
    ps = one_probe()
    far, near = (0.0, 0.0), (5.0, 5.0)
    # seen on steps 10 and 11, gone at 12
    feed(ps, [far] * 10 + [near, near] + [far] * 3)
    assert ps.intervals[0] == [[10.0, 12.0]]
    assert ps.report().mean_visits == 1


def test_two_agents_one_visit():
    ps = one_probe()
    both = np.array([[5.0, 5.0], [5.2, 5.0]])
    for t in range(3):
        ps.record_step(both, [True, True], float(t), R)
    assert ps.n_intervals[0] == 1


def test_enter_leave_reenter():
    ps = one_probe()
    far, near = (0.0, 0.0), (5.0, 5.0)
    feed(ps, [near] * 3 + [far] * 4 + [near] * 2 + [far])
    assert ps.intervals[0] == [[0.0, 3.0], [7.0, 9.0]]
    rep = ps.report()
    assert rep.mean_visits == 2
    assert rep.mean_revisit == pytest.approx(4.0)
    assert rep.mean_time_spent == pytest.approx(5.0)


def test_no_visits_all_zero():
    ps = ProbeSet([[1, 1], [2, 2]], 0.1)
    feed(ps, [(9.0, 9.0)] * 5)
    rep = ps.report()
    assert rep.percent_coverage == 0
    assert rep.as_dict() == {**{k: 0.0 for k in CSV_HEADER}, "t": 4.0}


def test_static_agent_time_spent_is_t_now():
    ps = one_probe()
    feed(ps, [(5.0, 5.0)] * 11, dt=0.5)
    rep = ps.report(5.0)
    assert rep.mean_time_spent == pytest.approx(5.0)
    assert rep.mean_revisit == 0
    assert ps.report(7.5).mean_time_spent == pytest.approx(7.5)


def test_not_observing_never_counts():
    ps = one_probe()
    feed(ps, [(5.0, 5.0)] * 4, observing=False)
    assert ps.report().percent_coverage == 0


def test_time_must_not_go_back():
    ps = one_probe()
    ps.record_step([[0.0, 0.0]], [True], 2.0, R)
    with pytest.raises(ValueError):
        ps.record_step([[0.0, 0.0]], [True], 1.0, R)


def test_empty_probe_set_is_error():
    with pytest.raises(ValueError):
        ProbeSet(np.empty((0, 2)), 0.5)
    with pytest.raises(ValueError):
        ProbeSet.sample(empty_environment(10), 0)


def test_probes_sampled_in_free_space():
    env = generate_environment(EnvSpec.from_family("short-high", seed=1))
    ps = ProbeSet.sample(env, 500, seed=4)
    assert ps.m == 500
    assert not in_obstacle(env, ps.points).any()
    assert ps.probe_radius == env.sensor_radius / 2
    again = ProbeSet.sample(env, 500, seed=4)
    assert np.array_equal(ps.points, again.points)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=60), st.sampled_from([0.1, 0.25, 1.0]))
def test_bookkeeping_identity(pattern, dt):
    """Interval lengths sum to dt times the number of seen steps before t_now."""
    ps = one_probe()
    pos = [(5.0, 5.0) if s else (0.0, 0.0) for s in pattern]
    feed(ps, pos, dt=dt)
    t_now = (len(pattern) - 1) * dt
    spent = ps.time_spent(t_now)[0]
    assert spent == pytest.approx(dt * sum(pattern[:-1]), abs=1e-9)
    assert spent <= t_now + 1e-12
    runs = sum(1 for i, s in enumerate(pattern) if s and (i == 0 or not pattern[i - 1]))
    assert ps.n_intervals[0] == runs


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**16))
def test_coverage_monotone_random_walk(seed):
    rng = np.random.default_rng(seed)
    ps = ProbeSet(rng.uniform(0, 10, size=(50, 2)), 0.3)
    pos = rng.uniform(0, 10, size=(2, 2))
    last = 0.0
    for k in range(100):
        pos = np.clip(pos + rng.normal(0, 0.5, size=pos.shape), 0, 10)
        ps.record_step(pos, rng.uniform(size=2) < 0.8, k * 0.1, R)
        rep = ps.report()
        assert rep.percent_coverage >= last
        assert 0 <= rep.percent_coverage <= 100
        assert rep.mean_revisit >= 0 and rep.mean_time_spent >= 0
        last = rep.percent_coverage


def test_csv_round_trip(tmp_path):
    reps = [MetricsReport(0.0, 0, 0, 0, 0, 0, 0, 0), MetricsReport(1.5, 12.5, 1, 0.5, 2, 0.25, 3, 0.125)]
    write_metrics_csv(reps, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert read_metrics_csv(tmp_path / "m.csv") == reps
