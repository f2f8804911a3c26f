"""Interaction protocol: i.i.d. contexts, trajectory rollouts, seeded RNG streams."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cmdp import ModelError, Policy, TabularCMDP, _check_simplex

# Stream ids used by the algorithms; one stream per logical consumer.
CONTEXT_STREAM = 0
ROLLOUT_STREAM = 1
POLICY_STREAM = 2


class RngStream:
    """A PCG64 generator keyed by ``(seed, stream)`` through numpy's SeedSequence.

    PCG64 and SeedSequence are specified bit-for-bit by numpy and do not depend on
    the platform; the reference outputs are pinned in ``tests/test_env.py``.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def random(self, size=None):
        return self.generator.random(size)

    def uniform_int(self, n: int) -> int:
        return int(self.generator.integers(n))

    def categorical(self, probs: np.ndarray) -> int:
        """Inverse-CDF draw from a probability vector."""
        u = self.generator.random()
        cdf = np.cumsum(probs)
        return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def sample_context(rng: RngStream, context_probs: np.ndarray) -> int:
    probs = np.asarray(context_probs, float)
    _check_simplex(probs, "context distribution")
    return rng.categorical(probs)


@dataclass(frozen=True)
class Trajectory:
    context: int
    policy_id: object
    states: tuple[int, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return list(zip(self.states, self.actions, self.rewards))

    @property
    def horizon(self) -> int:
        return len(self.states)


class _Sampler:
    """Cumulative tables of a model for fast inverse-CDF rollouts."""

    def __init__(self, model: TabularCMDP):
        self.model = model
        self.cum_p = np.cumsum(model.transitions, axis=-1)
        self.cum_r = np.cumsum(model.reward_probs, axis=-1)

    def rollout(self, context: int, policy: Policy, rng: RngStream, policy_id=None,
                observe_rewards: bool = True) -> Trajectory:
        m = self.model
        H = m.horizon
        u = rng.random(3 * H)
        cum_pi = np.cumsum(policy.probs, axis=-1)
        s = m.start_state
        states, actions, rewards = [], [], []
        for h in range(H):
            a = _inv(cum_pi[h, s], u[3 * h])
            k = _inv(self.cum_r[context, h, s, a], u[3 * h + 1])
            states.append(s)
            actions.append(a)
            rewards.append(float(m.reward_values[context, h, s, a, k]) if observe_rewards else 0.0)
            s = _inv(self.cum_p[context, h, s, a], u[3 * h + 2])
        return Trajectory(context, policy_id, tuple(states), tuple(actions), tuple(rewards))


def _inv(cdf: np.ndarray, u: float) -> int:
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(cdf) - 1)


def rollout(model: TabularCMDP, context: int, policy: Policy, rng: RngStream,
            policy_id=None, observe_rewards: bool = True) -> Trajectory:
    """Draw a^h ~ pi^h(s^h), r^h ~ R^h(s^h,a^h;c), s^{h+1} ~ P^h(.|s^h,a^h;c) for h = 1..H.

    Each round consumes exactly ``3H`` uniforms from ``rng``, so the number of draws is
    independent of the sampled path.
    """
    c = model.check_context(context)
    if policy.probs.shape != (model.horizon, model.num_states, model.num_actions):
        raise ModelError("policy shape does not match model")
    return _Sampler(model).rollout(c, policy, rng, policy_id, observe_rewards)


@dataclass(frozen=True)
class TrajectoryBatch:
    """Column view of a list of trajectories, used for vectorized likelihoods."""

    contexts: np.ndarray  # [n]
    states: np.ndarray  # [n, H]
    actions: np.ndarray  # [n, H]
    rewards: np.ndarray  # [n, H]

    def __len__(self):
        return len(self.contexts)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], horizon: int | None = None) -> "TrajectoryBatch":
        if not trajs:
            H = horizon or 0
            return cls(np.zeros(0, int), np.zeros((0, H), int), np.zeros((0, H), int), np.zeros((0, H)))
        return cls(
            np.array([t.context for t in trajs], dtype=int),
            np.array([t.states for t in trajs], dtype=int),
            np.array([t.actions for t in trajs], dtype=int),
            np.array([t.rewards for t in trajs], dtype=float),
        )


def trajectory_header(H: int) -> list[str]:
    cols = ["seed", "t", "epoch", "segment", "context"]
    for h in range(1, H + 1):
        cols += [f"s{h}", f"a{h}", f"r{h}"]
    return cols


def write_trajectory_log(path, H: int, rows: Iterable[tuple[int, int, int, int, Trajectory]]) -> None:
    """One CSV row per round: seed, t, epoch, segment, context, s1, a1, r1, ..., sH, aH, rH."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(H))
        for seed, t, epoch, segment, traj in rows:
            row = [seed, t, epoch, segment, traj.context]
            for s, a, r in traj.steps:
                row += [s, a, repr(float(r))]
            w.writerow(row)
