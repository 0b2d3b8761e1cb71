#!/usr/bin/env python3
"""Full-scale discard-count reproduction (long-running; hours).

Runs the complete protocol at N=200 with 1000 shared initial conditions
over the default eight-value tau grid and reports how many initial
conditions failed to finish for at least one tau. Discard counts are
binomial random variables, so each measured count is checked against the
two-sided 99% binomial interval around the reference rate rather than for
exact equality.

Reference discard counts per 1000 runs:

    model                             mu=-1   mu=0   mu=1
    no_self_loops, with_replacement      37     28      0
    no_self_loops, without_replacement   35     22      0
    self_loops,    with_replacement      79     49      0
    self_loops,    without_replacement   75     29      0

Default: the (no_self_loops, with_replacement, mu=-1) cell only.
Use --all-models and/or --mu to extend. Examples:

    python scripts/reproduce_discard_counts.py --threads 8
    python scripts/reproduce_discard_counts.py --all-models --mu -1 0 1 --threads 16
"""

import argparse
import sys
import time

from scipy.stats import binom

from temporal_balance.dynamics import Variant
from temporal_balance.experiments import EnsembleConfig, run_ensemble
from temporal_balance.schedulers import SchedulerKind

REFERENCE = {
    (Variant.NO_SELF_LOOPS, SchedulerKind.WITH_REPLACEMENT):
        {-1.0: 37, 0.0: 28, 1.0: 0},
    (Variant.NO_SELF_LOOPS, SchedulerKind.WITHOUT_REPLACEMENT):
        {-1.0: 35, 0.0: 22, 1.0: 0},
    (Variant.SELF_LOOPS, SchedulerKind.WITH_REPLACEMENT):
        {-1.0: 79, 0.0: 49, 1.0: 0},
    (Variant.SELF_LOOPS, SchedulerKind.WITHOUT_REPLACEMENT):
        {-1.0: 75, 0.0: 29, 1.0: 0},
}


def interval(reference_count: int, runs: int) -> tuple[int, int]:
    if reference_count == 0:
        return (0, 0)
    p = reference_count / 1000.0
    return (int(binom.ppf(0.005, runs, p)), int(binom.ppf(0.995, runs, p)))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=2)
    parser.add_argument("--runs", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=111)
    parser.add_argument("--mu", type=float, nargs="+", default=[-1.0])
    parser.add_argument("--all-models", action="store_true",
                        help="all four variant/scheduler combinations "
                             "(default: no_self_loops with replacement)")
    args = parser.parse_args()

    combos = list(REFERENCE) if args.all_models else \
        [(Variant.NO_SELF_LOOPS, SchedulerKind.WITH_REPLACEMENT)]

    failures = 0
    for variant, scheduler in combos:
        for mu in args.mu:
            ref = REFERENCE[(variant, scheduler)][mu]
            lo, hi = interval(ref, args.runs)
            cfg = EnsembleConfig(n=200, mu=mu, runs=args.runs,
                                 variant=variant, scheduler=scheduler,
                                 master_seed=args.seed)
            started = time.time()
            stats = run_ensemble(cfg, threads=args.threads)
            got = len(stats.discarded_indices)
            ok = lo <= got <= hi
            failures += 0 if ok else 1
            print(f"{variant.value}/{scheduler.value} mu={mu:+g}: "
                  f"discarded {got}/{args.runs}, reference {ref}/1000, "
                  f"99% interval [{lo}, {hi}] -> "
                  f"{'OK' if ok else 'OUTSIDE'} "
                  f"({(time.time() - started) / 3600:.2f} h)")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
