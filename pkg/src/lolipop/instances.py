"""Seeded generation of CMDP instances and realizable model classes."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .cmdp import ModelError, RewardFunction, TabularCMDP
from .env import RngStream
from .oracle import ModelClass, layer_hellinger

# RNG stream reserved for instance generation (disjoint from the run streams 0-2)
GENERATOR_STREAM = 7

REWARD_MODES = ("bernoulli-step", "zero")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    S: int
    A: int
    H: int
    num_contexts: int = 1
    class_size: int = 1
    separation: float = 0.0
    reward_mode: str = "bernoulli-step"
    seed: int = 0
    max_retries: int = 200

    def __post_init__(self):
        if min(self.S, self.A, self.H, self.num_contexts, self.class_size) < 1:
            raise ValueError("S, A, H, num_contexts and class_size must all be >= 1")
        if not 0.0 <= self.separation <= 1.0:
            raise ValueError("separation is a squared Hellinger distance in [0, 1]")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


def dirichlet_rows(rng: RngStream, shape: tuple[int, ...]) -> np.ndarray:
    """Flat-Dirichlet rows over the last axis via normalized Exp(1) draws."""
    e = -np.log1p(-rng.random(shape))
    return e / e.sum(axis=-1, keepdims=True)


def random_model(rng: RngStream, S: int, A: int, H: int, C: int = 1,
                 reward_mode: str = "bernoulli-step") -> TabularCMDP:
    P = dirichlet_rows(rng, (C, H, S, A, S))
    if reward_mode == "zero":
        R = RewardFunction.zeros(C, H, S, A)
    else:
        R = RewardFunction.bernoulli(rng.random((C, H, S, A)) / H)
    return TabularCMDP(P, R.values, R.probs, 0, np.full(C, 1.0 / C))


def separation(model_a: TabularCMDP, model_b: TabularCMDP) -> float:
    """Largest observable single-step squared Hellinger distance over (c, h, s, a)."""
    return float(layer_hellinger(model_a, model_b).max())


def min_separation(model_class: ModelClass) -> float:
    ms = model_class.models
    if len(ms) < 2:
        return float("inf")
    return min(separation(ms[i], ms[j]) for i in range(len(ms)) for j in range(i + 1, len(ms)))


def generate_class(spec: GenSpec) -> tuple[ModelClass, GenSpec]:
    """Draw ``class_size`` models, rejecting candidates closer than ``spec.separation``
    to an already accepted member; the truth index is uniform over the class."""
    rng = RngStream(spec.seed, GENERATOR_STREAM)
    models: list[TabularCMDP] = []
    while len(models) < spec.class_size:
        for _ in range(spec.max_retries):
            cand = random_model(rng, spec.S, spec.A, spec.H, spec.num_contexts, spec.reward_mode)
            if all(separation(cand, m) >= spec.separation for m in models):
                models.append(cand)
                break
        else:
            raise GenerationError(
                f"could not place model {len(models) + 1} at separation {spec.separation} "
                f"within {spec.max_retries} draws")
    truth = rng.uniform_int(spec.class_size)
    return ModelClass(tuple(models), truth), spec


def class_json(model_class: ModelClass, spec: GenSpec | None = None) -> str:
    doc = model_class.to_dict()
    if spec is not None:
        doc["spec"] = spec.to_dict()
    return json.dumps(doc, sort_keys=True)


def _needle_model(base: TabularCMDP, cell: tuple[int, int, int, int], gap: float) -> TabularCMDP:
    C, H, S, A = base.dims
    means = base.mean_rewards.copy()
    means[cell] += gap
    if means[cell] > 1.0 / H + 1e-15:
        raise ModelError("needle mean exceeds the per-step reward bound 1/H")
    R = RewardFunction.bernoulli(np.minimum(means, 1.0 / H))
    return TabularCMDP(base.transitions, R.values, R.probs, base.start_state, base.context_probs)


def _base_model(S: int, A: int, H: int, C: int, seed: int) -> TabularCMDP:
    rng = RngStream(seed, GENERATOR_STREAM)
    P = dirichlet_rows(rng, (C, H, S, A, S))
    R = RewardFunction.zeros(C, H, S, A)
    return TabularCMDP(P, R.values, R.probs, 0, np.full(C, 1.0 / C))


def hard_pair(S: int, A: int, H: int, gap: float, cell: tuple[int, int, int, int] | None = None,
              num_contexts: int = 1, seed: int = 0) -> ModelClass:
    """A zero-reward model and a copy whose mean reward at one (c, h, s, a) is raised by ``gap``.

    Both share seeded random transitions. The default cell is (0, H-1, S-1, A-1).
    The truth is the model carrying the needle.
    """
    if not 0.0 < gap <= 1.0 / H:
        raise ValueError(f"gap must lie in (0, 1/H], got {gap}")
    base = _base_model(S, A, H, num_contexts, seed)
    cell = cell or (0, H - 1, S - 1, A - 1)
    return ModelClass((base, _needle_model(base, cell, gap)), truth_index=1)


def needle_class(S: int, A: int, H: int, num_contexts: int, class_size: int, gap: float,
                 seed: int = 0) -> ModelClass:
    """Shared random transitions; member 0 has zero rewards, members 1.. each carry one
    needle of height ``gap`` at a distinct random reachable (c, h, s, a). The truth is a
    random needle."""
    if class_size < 2:
        raise ValueError("a needle class needs at least two members")
    # first-layer cells other than the start state are never visited
    cells = [(c, h, s, a) for c in range(num_contexts) for h in range(H) for s in range(S)
             for a in range(A) if h > 0 or s == 0]
    if class_size - 1 > len(cells):
        raise ValueError("more needles than reachable cells")
    if not 0.0 < gap <= 1.0 / H:
        raise ValueError(f"gap must lie in (0, 1/H], got {gap}")
    base = _base_model(S, A, H, num_contexts, seed)
    rng = RngStream(seed, GENERATOR_STREAM + 1)
    picks = rng.generator.permutation(len(cells))[: class_size - 1]
    models = (base,) + tuple(_needle_model(base, cells[i], gap) for i in picks)
    truth = 1 + rng.uniform_int(class_size - 1)
    return ModelClass(models, truth)
