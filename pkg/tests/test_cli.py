import csv
import hashlib
import json
import warnings

import pytest

from urbancover.cli import ExperimentGrid, main, run_grid, summarize
from urbancover.engine import SimConfig, run
from urbancover.env import Building, Environment


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "d"
    code = main(["run", "--env", "empty10", "--alg", "lawnmower", "--agents", "1", "--steps", "4000",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    for name in ("metrics.csv", "traj_0.csv", "summary.json", "env.json", "render.svg", "manifest.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["algorithm"] == "lawnmower"
    assert summary["samples_per_agent"] == 4001
    assert summary["final"]["percent_coverage"] == 100.0
    manifest = json.loads((out / "manifest.json").read_text())["files"]
    for name, digest in manifest.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert read_rows(out / "metrics.csv")[-1]["t"] == "400.000000"


def test_run_twice_checksum_identical(tmp_path):
    args = ["run", "--env", "tall-high", "--alg", "voronoi", "--agents", "3", "--steps", "400", "--seed", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    assert (tmp_path / "a" / "partition.csv").exists()


def test_toml_config_with_flag_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('env = "empty10"\nalgorithm = "grid"\nn = 4\nsteps = 50\nseed = 3\n')
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--steps", "30", "--out", str(out)]) == 0
    conf = json.loads((out / "summary.json").read_text())["config"]
    assert conf["algorithm"] == "grid" and conf["n"] == 4 and conf["steps"] == 30


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus"])
    assert exc.value.code == 2
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", "--env", "atlantis", "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "--steps", "0", "--out", str(tmp_path / "x")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("steps = [")
    assert main(["run", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_runtime_failure_exit_1(tmp_path, capsys):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        env = Environment((10, 10), (Building(0, 4, 10, 6, 5.0),), max_altitude=5.5)
    env.to_json(tmp_path / "w.json")
    code = main(["run", "--env", str(tmp_path / "w.json"), "--alg", "lawnmower", "--steps", "10",
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "lawnmower" in capsys.readouterr().err


def test_grid_row_count(tmp_path):
    cfg = tmp_path / "g.toml"
    cfg.write_text(
        'envs = ["short-low"]\nalgorithms = ["grid", "lawnmower"]\nteams = [2, 5, 10, 15, 20, 25]\n'
        f'trials = 3\nworkers = 1\nseries_team = 10\nout = "{tmp_path / "g"}"\n'
        "[sim]\nsteps = 20\nmetrics_every = 10\n"
    )
    assert main(["grid", "--config", str(cfg)]) == 0
    rows = read_rows(tmp_path / "g" / "summary.csv")
    assert len(rows) == 1 * 2 * 6 * 3
    agg = read_rows(tmp_path / "g" / "aggregate.csv")
    assert len(agg) == 12 and all(r["trials"] == "3" for r in agg)
    series = read_rows(tmp_path / "g" / "timeseries.csv")
    assert {r["n"] for r in series} == {"10"}
    assert len(series) == 2 * 3 * 2  # two algorithms, three trials, two reports each


def test_grid_order_does_not_matter(tmp_path):
    base = dict(envs=["empty10"], algorithms=["ergodic"], teams=[1, 2], trials=2, sim={"steps": 30})
    a = run_grid(ExperimentGrid(**base, workers=1))
    b = run_grid(ExperimentGrid(**base, workers=2))
    assert [r.final for r in a] == [r.final for r in b]
    assert summarize(a) == summarize(b)


def test_grid_validation():
    with pytest.raises(ValueError):
        ExperimentGrid(envs=[], algorithms=["grid"], teams=[1])
    with pytest.raises(ValueError):
        ExperimentGrid(envs=["empty10"], algorithms=["grid"], teams=[1], trials=0)
    with pytest.raises(ValueError):
        ExperimentGrid.from_dict({"envs": ["empty10"], "algorithms": ["grid"], "teams": [1], "colour": 1})


def _results(n_trials, **kw):
    return [run(SimConfig(env="tall-low", algorithm="grid", n=3, steps=40, seed=s, env_seed=0, **kw))
            for s in range(n_trials)]


def test_summarize_three_trials():
    res = _results(3)
    table, series = summarize(res, series_team=3)
    assert len(table) == 1
    row = table[0]
    vals = [r.final.percent_coverage for r in res]
    mean = sum(vals) / 3
    assert row["mean_percent_coverage"] == pytest.approx(mean)
    assert row["std_percent_coverage"] == pytest.approx((sum((v - mean) ** 2 for v in vals) / 3) ** 0.5)
    assert row["env"] == "tall-low"
    assert len(series) == sum(len(r.reports) for r in res)


def test_summarize_single_trial_std_zero():
    [row], _ = summarize(_results(1))
    assert all(row[k] == 0.0 for k in row if k.startswith("std_"))


def test_summarize_rejects_mixed_configs():
    res = _results(1) + [run(SimConfig(env="tall-low", algorithm="grid", n=3, steps=60, seed=1, env_seed=0))]
    with pytest.raises(ValueError, match="steps"):
        summarize(res)
    with pytest.raises(ValueError):
        summarize([])


def test_family_labels_round_trip():
    res = [run(SimConfig(env=e, algorithm="grid", n=2, steps=5)) for e in ("tall-high", "short-low")]
    table, _ = summarize(res)
    assert [r["env"] for r in table] == ["short-low", "tall-high"]
    assert {r.env.name for r in res} == {"tall-high", "short-low"}


def test_gen_env_and_render(tmp_path):
    world = tmp_path / "w.json"
    assert main(["gen-env", "--family", "short-high", "--seed", "2", "--out", str(world)]) == 0
    doc = json.loads(world.read_text())
    assert len(doc["buildings"]) == 79
    assert main(["gen-env", "--family", "mixed", "--out", str(world)]) == 2
    assert main(["gen-env", "--family", "mixed", "--buildings", "20", "--heights", "4", "16",
                 "--out", str(world)]) == 0

    out = tmp_path / "r"
    assert main(["run", "--env", str(world), "--alg", "ergodic", "--agents", "2", "--steps", "600",
                 "--out", str(out)]) == 0
    svg_path = tmp_path / "again.svg"
    assert main(["render", "--env", str(world), "--traj", str(out / "traj_0.csv"), str(out / "traj_1.csv"),
                 "--out", str(svg_path)]) == 0
    text = svg_path.read_text()
    assert text.startswith("<svg") and text.count('fill="#999999"') == 20
    assert "#d62728" in text  # fly-over spans drawn red
    assert main(["render", "--env", str(tmp_path / "nope.json"), "--out", str(svg_path)]) == 2
