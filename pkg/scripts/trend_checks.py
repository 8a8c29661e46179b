"""Team-size trends on one short-low world and revisit ordering on one tall-high world.

Prints the per-team coverage curve with its Pearson r for the static methods, then the
3-trial mean revisit time for the three ergodic variants.
"""

import numpy as np
from scipy import stats

from urbancover.engine import SimConfig, run

TEAMS = [2, 5, 10, 15, 20, 25]


def mean_final(alg, env, n, field, trials=3, steps=15000):
    vals = [getattr(run(SimConfig(env=env, algorithm=alg, n=n, steps=steps, seed=s, env_seed=0)).final, field)
            for s in range(trials)]
    return float(np.mean(vals))


def main() -> None:
    for alg in ("voronoi", "grid"):
        cov = [mean_final(alg, "short-low", n, "percent_coverage") for n in TEAMS]
        r = stats.pearsonr(TEAMS, cov).statistic
        print(f"{alg:<8} r={r:.3f}  " + "  ".join(f"n={n}:{c:.1f}%" for n, c in zip(TEAMS, cov)))
    for alg in ("ergodic", "biased-ergodic", "avoid-ergodic"):
        print(f"{alg:<15} mean revisit {mean_final(alg, 'tall-high', 10, 'mean_revisit'):.1f}s")


if __name__ == "__main__":
    main()
