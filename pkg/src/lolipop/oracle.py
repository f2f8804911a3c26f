"""Offline density estimation by exact maximum likelihood over a finite model class."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .cmdp import ModelError, TabularCMDP, reward_hellinger_sq, transition_hellinger_sq
from .env import Trajectory, TrajectoryBatch


@dataclass(frozen=True, eq=False)
class ModelClass:
    models: tuple[TabularCMDP, ...]
    truth_index: int | None = None

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ModelError("model class must be nonempty")
        first = models[0]
        for m in models[1:]:
            if not first.same_shape(m):
                raise ModelError("all models in a class must share (C, H, S, A, start_state)")
        if self.truth_index is not None and not 0 <= self.truth_index < len(models):
            raise ModelError(f"truth_index {self.truth_index} out of range")
        object.__setattr__(self, "models", models)

    def __len__(self):
        return len(self.models)

    def __getitem__(self, i) -> TabularCMDP:
        return self.models[i]

    @property
    def truth(self) -> TabularCMDP | None:
        return None if self.truth_index is None else self.models[self.truth_index]

    @cached_property
    def _log_tables(self):
        # log P [M, C, H, S, A, S]; reward values/log-probs [M, C, H, S, A, K]
        K = max(m.reward_values.shape[-1] for m in self.models)
        with np.errstate(divide="ignore"):
            logp = np.stack([np.log(m.transitions) for m in self.models])
        vals = np.zeros((len(self),) + self.models[0].dims + (K,))
        probs = np.zeros_like(vals)
        for i, m in enumerate(self.models):
            k = m.reward_values.shape[-1]
            vals[i, ..., :k] = m.reward_values
            probs[i, ..., :k] = m.reward_probs
        return logp, vals, probs

    def to_dict(self) -> dict:
        return {"models": [m.to_dict() for m in self.models], "truth_index": self.truth_index}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc) -> "ModelClass":
        # accepts either {"models": [...], "truth_index": i} or a bare array of models
        if isinstance(doc, list):
            return cls(tuple(TabularCMDP.from_dict(d) for d in doc))
        return cls(tuple(TabularCMDP.from_dict(d) for d in doc["models"]), doc.get("truth_index"))

    @classmethod
    def from_json(cls, text: str) -> "ModelClass":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "ModelClass":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class OracleEstimate:
    model_index: int
    log_likelihood: float
    call_id: int


def log_likelihood(model: TabularCMDP, trajectory: Trajectory) -> float:
    """Sum of log transition and log reward probabilities along one trajectory.

    Policy factors are omitted: they are shared by every model and cancel in the argmax.
    """
    c = model.check_context(trajectory.context)
    H = model.horizon
    if trajectory.horizon != H:
        raise ModelError("trajectory horizon does not match model")
    total = 0.0
    for h, (s, a, r) in enumerate(trajectory.steps):
        pr = float(model.reward_probs[c, h, s, a][model.reward_values[c, h, s, a] == r].sum())
        if h + 1 < H:
            pr *= float(model.transitions[c, h, s, a, trajectory.states[h + 1]])
        if pr <= 0.0:
            return -math.inf
        total += math.log(pr)
    return total


def batch_log_likelihoods(model_class: ModelClass, batch: TrajectoryBatch) -> np.ndarray:
    """[M, n] per-model, per-trajectory log-likelihoods."""
    logp, vals, probs = model_class._log_tables
    M = len(model_class)
    n = len(batch)
    out = np.zeros((M, n))
    if n == 0:
        return out
    c, S_, A_, R_ = batch.contexts, batch.states, batch.actions, batch.rewards
    H = S_.shape[1]
    for h in range(H):
        s, a = S_[:, h], A_[:, h]
        v = vals[:, c, h, s, a]  # [M, n, K]
        p = probs[:, c, h, s, a]
        pr = (p * (v == R_[None, :, h, None])).sum(axis=-1)
        with np.errstate(divide="ignore"):
            out += np.log(pr)
        if h + 1 < H:
            out += logp[:, c, h, s, a, S_[:, h + 1]]
    return out


def mle(model_class: ModelClass, trajectories: Sequence[Trajectory] | TrajectoryBatch,
        call_id: int = 0) -> OracleEstimate:
    """Index of the class member maximizing total log-likelihood (ties to the smallest index).

    An empty dataset returns index 0 with log-likelihood 0.
    """
    batch = trajectories if isinstance(trajectories, TrajectoryBatch) else \
        TrajectoryBatch.from_trajectories(list(trajectories))
    if len(batch) == 0:
        return OracleEstimate(0, 0.0, call_id)
    totals = batch_log_likelihoods(model_class, batch).sum(axis=1)
    best = int(np.argmax(totals))  # first maximal index; all -inf also lands on 0
    return OracleEstimate(best, float(totals[best]), call_id)


class MLEOracle:
    """Stateful wrapper counting oracle invocations."""

    def __init__(self, model_class: ModelClass):
        self.model_class = model_class
        self.calls = 0

    def __call__(self, trajectories) -> OracleEstimate:
        self.calls += 1
        return mle(self.model_class, trajectories, call_id=self.calls)


def hellinger_sq(p, q) -> float:
    """Squared Hellinger distance ``1 - sum sqrt(p q)`` between finite distributions.

    ``p`` and ``q`` are either probability vectors on a common index set or mappings
    from support points to probabilities.
    """
    if isinstance(p, dict) or isinstance(q, dict):
        p, q = dict(p), dict(q)
        for name, dist in (("p", p), ("q", q)):
            vals = np.array(list(dist.values()), float)
            _validate(vals, name)
        bc = sum(math.sqrt(p[k] * q[k]) for k in p.keys() & q.keys())
    else:
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        if p.shape != q.shape:
            raise ValueError("distributions must share a support")
        _validate(p, "p")
        _validate(q, "q")
        bc = float(np.sqrt(p * q).sum())
    return min(1.0, max(0.0, 1.0 - bc))


def _validate(v: np.ndarray, name: str) -> None:
    if np.any(~np.isfinite(v)) or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} is not a probability distribution")


def oracle_error_budget(class_size: int, delta: float, n: int, c_e: float = 1.0) -> float:
    """``min(1, c_e * log(class_size / delta) / max(n, 1))``; n = 0 gives 1."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if class_size < 1 or n < 0:
        raise ValueError("class_size must be >= 1 and n >= 0")
    if n == 0:
        return 1.0
    return min(1.0, c_e * math.log(class_size / delta) / max(n, 1))


def layer_hellinger(model_a: TabularCMDP, model_b: TabularCMDP) -> np.ndarray:
    """[C, H, S, A] per-step squared Hellinger, max of transition and reward parts.

    Last-layer transitions are never observed in a trajectory and are excluded.
    """
    tp = transition_hellinger_sq(model_a, model_b)
    tp[:, -1] = 0.0
    return np.maximum(tp, reward_hellinger_sq(model_a, model_b))


def trajectory_distribution(model: TabularCMDP, context: int, policy_probs: np.ndarray) -> dict:
    """Exact distribution over observable trajectories (states, actions, rewards).

    Exponential in H; meant for tiny instances in tests.
    """
    _, H, S, A = model.dims
    out = {}

    def walk(h, s, prefix, prob):
        if prob == 0.0:
            return
        for a in range(A):
            pa = policy_probs[h, s, a]
            if pa == 0.0:
                continue
            for v, pr in zip(model.reward_values[context, h, s, a], model.reward_probs[context, h, s, a]):
                if pr == 0.0:
                    continue
                step = prefix + ((s, a, float(v)),)
                if h + 1 == H:
                    out[step] = out.get(step, 0.0) + prob * pa * pr
                else:
                    for s2 in range(S):
                        walk(h + 1, s2, step, prob * pa * pr * model.transitions[context, h, s, a, s2])

    walk(0, model.start_state, (), 1.0)
    return out
