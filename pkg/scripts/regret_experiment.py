"""Needle-class regret comparison of LOLIPOP against the uniform and etc-greedy baselines.

Prints median final pseudo-regret per algorithm and the median per-seed ratio of
average regret at T versus T/16.

    python3 scripts/regret_experiment.py --c-gamma 1e-3
    python3 scripts/regret_experiment.py --c-gamma 1e-3 --c-eta 1e8 --c-zeta 1e4
"""
import argparse

import numpy as np

from lolipop.algorithm import Constants, EpochSchedule, run_lolipop
from lolipop.instances import needle_class


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--T", type=int, default=2 ** 14)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--c-gamma", type=float, default=1e-3)
    p.add_argument("--c-eta", type=float, default=1.0)
    p.add_argument("--c-zeta", type=float, default=1.0)
    p.add_argument("--schedule", choices=("doubling", "loglog"), default="doubling")
    args = p.parse_args()
    consts = Constants(c_gamma=args.c_gamma, c_eta=args.c_eta, c_zeta=args.c_zeta)
    algs = ("lolipop", "uniform", "etc-greedy")
    finals = {a: [] for a in algs}
    ratios = []
    early = args.T // 16
    for seed in range(args.seeds):
        mc = needle_class(3, 2, 2, 4, 8, 0.5, seed=seed)
        for alg in algs:
            rec = run_lolipop(mc.truth, mc, EpochSchedule(args.schedule), 0.05, args.T, consts, seed, alg)
            finals[alg].append(rec.cum_regret[-1])
            if alg == "lolipop" and rec.cum_regret_at(early) > 0:
                ratios.append((rec.cum_regret[-1] / args.T) / (rec.cum_regret_at(early) / early))
    print(f"constants {consts}")
    for alg in algs:
        print(f"{alg:>10}: median final regret {np.median(finals[alg]):9.2f}")
    lo = np.median(finals["lolipop"])
    print(f"lolipop / uniform    = {lo / np.median(finals['uniform']):.3f}")
    print(f"lolipop / etc-greedy = {lo / max(np.median(finals['etc-greedy']), 1e-300):.3f}")
    print(f"median ratio of average regret, T vs T/16: {np.median(ratios):.3f}")


if __name__ == "__main__":
    main()
