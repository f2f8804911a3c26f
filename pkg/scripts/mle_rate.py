"""Empirical decay of the MLE's single-step squared Hellinger error with sample size.

A one-parameter grid class (first-step transition probability theta); the fitted
log-log slope should be close to -1.
"""
import argparse

import numpy as np

from lolipop.cmdp import Policy, RewardFunction, TabularCMDP
from lolipop.env import RngStream, rollout
from lolipop.oracle import ModelClass, hellinger_sq, mle


def grid_class(thetas):
    R = RewardFunction.zeros(1, 2, 2, 1)
    models = []
    for th in thetas:
        P = np.full((1, 2, 2, 1, 2), 0.5)
        P[0, 0, :, 0] = [1 - th, th]
        models.append(TabularCMDP(P, R.values, R.probs))
    return ModelClass(tuple(models), int(np.argmin(np.abs(np.asarray(thetas) - 0.5))))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--grid", type=int, default=1201)
    args = p.parse_args()
    mc = grid_class(np.linspace(0.2, 0.8, args.grid))
    pol = Policy.uniform(2, 2, 1)
    ns = [2 ** k for k in range(5, 13)]
    errs = []
    for n in ns:
        vals = []
        for seed in range(args.seeds):
            rng = RngStream(seed, 90 + n)
            est = mc[mle(mc, [rollout(mc.truth, 0, pol, rng) for _ in range(n)]).model_index]
            vals.append(hellinger_sq(est.transitions[0, 0, 0, 0], mc.truth.transitions[0, 0, 0, 0]))
        errs.append(np.mean(vals))
        print(f"n={n:5d}  mean squared Hellinger {errs[-1]:.3e}")
    print(f"log-log slope {np.polyfit(np.log(ns), np.log(errs), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
