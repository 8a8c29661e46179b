"""Run an experiment grid from a TOML file and print the aggregate table.

    python scripts/run_grid.py scripts/smoke_grid.toml --workers 4
"""

import argparse
import time

from urbancover.cli import ExperimentGrid, load_toml, run_grid, summarize, write_grid


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    args = ap.parse_args()

    doc = load_toml(args.config)
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.out:
        doc["out"] = args.out
    grid = ExperimentGrid.from_dict(doc)

    t0 = time.perf_counter()
    results = run_grid(grid)
    write_grid(results, grid.out, grid.series_team)
    table, _ = summarize(results, grid.series_team)

    print(f"{len(results)} trials in {time.perf_counter() - t0:.0f}s -> {grid.out}")
    print(f"{'env':<11} {'algorithm':<15} {'n':>3} {'coverage%':>10} {'visits':>8} {'revisit s':>10} {'time s':>9}")
    for row in table:
        print(f"{row['env']:<11} {row['algorithm']:<15} {row['n']:>3} {row['mean_percent_coverage']:>10.1f} "
              f"{row['mean_mean_visits']:>8.2f} {row['mean_mean_revisit']:>10.1f} {row['mean_mean_time_spent']:>9.1f}")


if __name__ == "__main__":
    main()
