"""Per-cluster loss jumps of a warm-started nu sweep at two grid spacings.

    python scripts/nu_continuity.py --start 1.0 --stop 1.5 --steps 0.05 0.1

For each spacing the sweep is clustered on its own and the largest
adjacent-grid |loss change| of every cluster is reported, together with the
median over clusters and the fold events.
"""

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from gplandscape.data import schwefel_dataset, split
from gplandscape.hyperspace import space_for
from gplandscape.landscape import BasinHoppingConfig
from gplandscape.nu_sweep import cluster_loss_jumps, cluster_minima, detect_folds, nu_grid, sweep


@dataclass
class Settings:
    n: int = 100
    seed: int = 0
    start: float = 1.0
    stop: float = 1.5
    steps: list = field(default_factory=lambda: [0.05, 0.1])


def run(s: Settings):
    train, _ = split(schwefel_dataset(3, s.n, seed=s.seed), 0.2, s.seed,
                     standardize_features=False)
    space = space_for(train)
    out = {}
    for step in s.steps:
        res = sweep(train, space, nu_grid(s.start, s.stop, step),
                    BasinHoppingConfig(seed=s.seed), warm_start=True)
        cluster_minima(res, coords=space.canonical)
        jumps = cluster_loss_jumps(res)
        out[step] = (res.counts(), jumps, detect_folds(res))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=Settings.n)
    ap.add_argument("--seed", type=int, default=Settings.seed)
    ap.add_argument("--start", type=float, default=Settings.start)
    ap.add_argument("--stop", type=float, default=Settings.stop)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.05, 0.1])
    a = ap.parse_args(argv)
    res = run(Settings(a.n, a.seed, a.start, a.stop, a.steps))
    print("step,cluster,max_abs_dloss")
    for step, (counts, jumps, folds) in res.items():
        for c, j in jumps.items():
            print(f"{step},{c},{j:.6g}")
        print(f"step {step}: counts {counts}; median {np.median(list(jumps.values())):.4f}; "
              f"{len(folds)} fold events", file=sys.stderr)


if __name__ == "__main__":
    main()
