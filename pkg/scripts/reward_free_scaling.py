"""Reward-free value error of the returned model as T grows.

``--kind generated`` uses a separated random zero-reward class; ``--kind perturbed``
uses the truth plus members whose kernels are mixed with noise at weight ``--eps``,
which are much harder to tell apart.

    python3 scripts/reward_free_scaling.py --kind perturbed --eps 0.1
"""
import argparse

import numpy as np

from lolipop.algorithm import run_reward_free
from lolipop.cmdp import TabularCMDP
from lolipop.env import RngStream
from lolipop.harness import evaluation_pairs, reward_free_objective
from lolipop.instances import GenSpec, dirichlet_rows, generate_class
from lolipop.oracle import ModelClass


def perturbed_class(size: int, eps: float, seed: int) -> ModelClass:
    base, _ = generate_class(GenSpec(3, 2, 2, 2, 1, reward_mode="zero", seed=seed))
    truth = base[0]
    models = [truth]
    for i in range(1, size):
        noise = dirichlet_rows(RngStream(seed, 50 + i), truth.transitions.shape)
        P = (1 - eps) * truth.transitions + eps * noise
        models.append(TabularCMDP(P, truth.reward_values, truth.reward_probs, 0, truth.context_probs))
    return ModelClass(tuple(models), 0)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--kind", choices=("generated", "perturbed"), default="perturbed")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--exponents", type=int, nargs="+", default=[10, 12, 14])
    args = p.parse_args()
    if args.kind == "generated":
        mc, _ = generate_class(GenSpec(3, 2, 2, 2, 8, separation=0.05, reward_mode="zero", seed=8))
    else:
        mc = perturbed_class(8, args.eps, seed=8)
    pairs = evaluation_pairs(2, 2, 3, 2, 100)
    for k in args.exponents:
        worst, correct = [], 0
        for seed in range(args.seeds):
            est, rec = run_reward_free(mc.truth, mc, 2 ** k, 0.05, seed=seed)
            worst.append(reward_free_objective(mc.truth, est, pairs).max())
            correct += rec.epochs[-1].layer_indices == [mc.truth_index] * 2
        print(f"T=2^{k}: median worst-pair value error {np.median(worst):.4g}, "
              f"truth recovered in {correct}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
