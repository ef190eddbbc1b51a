"""Ensembles over the minima of rich 3d Schwefel landscapes.

    python scripts/ensemble_direction.py --seeds 0 1 2 3
    python scripts/ensemble_direction.py --seeds 0 --default-bounds

Wide sampling bounds and larger hops are the default here because the
standard bounds rarely give more than a handful of minima.  For every seed
the test MSE of each weighting scheme is printed next to the lowest -lml
member, normalized and not.
"""

import argparse
from dataclasses import dataclass, field

from gplandscape.data import schwefel_dataset, split
from gplandscape.ensemble import ensemble_advisor, fit_members, improvement_csv, improvement_report
from gplandscape.hyperspace import space_for
from gplandscape.landscape import BasinHoppingConfig, explore_gp

SCHEMES = ("unweighted", "nlml", "occupation", "hessian_norm")


@dataclass
class Settings:
    n: int = 100
    seeds: list = field(default_factory=lambda: [0])
    wide: bool = True


def landscape(seed: int, s: Settings):
    train, test = split(schwefel_dataset(3, s.n, seed=seed), 0.2, seed,
                        standardize_features=False)
    if s.wide:
        space = space_for(train, nu_free=True, log_amplitude_bounds=(-8.0, 8.0),
                          log_lengthscale_bounds=(-8.0, 8.0), log_noise_bounds=(-16.0, 2.0))
        cfg = BasinHoppingConfig(seed=seed, step_scale=2.0, n_initial=30, stall_n=30)
    else:
        space = space_for(train, nu_free=True)
        cfg = BasinHoppingConfig(seed=seed)
    return train, test, space, explore_gp(train, space, cfg, test=test).minima


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=Settings.n)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--default-bounds", action="store_true")
    a = ap.parse_args(argv)
    s = Settings(a.n, a.seeds, not a.default_bounds)
    for seed in s.seeds:
        train, test, space, members = landscape(seed, s)
        models = fit_members(members, train, space)
        rows = (improvement_report(members, models, test, SCHEMES, normalize=True)
                + improvement_report(members, models, test, SCHEMES, normalize=False))
        adv = ensemble_advisor(members)
        print(f"# seed {seed}: {len(members)} minima, advisor says {adv.recommendation}")
        print(improvement_csv(rows), end="")


if __name__ == "__main__":
    main()
