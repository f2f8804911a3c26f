"""Tabular contextual MDPs: domain types, exact dynamic programming, JSON I/O.

Array layout used throughout the package (0-based indices):

    transitions     [C, H, S, A, S]   P^h(s' | s, a; c)
    reward_values   [C, H, S, A, K]   support points of R^h(s, a; c)
    reward_probs    [C, H, S, A, K]   matching probabilities (zero-padded)
    policy          [H, S, A]         pi^h(a | s)
    occupancy       [H, S, A]         d^h(s, a)
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12
VALUE_TOL = 1e-10


class ModelError(ValueError):
    """Raised for malformed models, policies, or out-of-range indices."""


def _check_simplex(probs: np.ndarray, what: str, tol: float = PROB_TOL) -> None:
    if not np.all(np.isfinite(probs)):
        raise ModelError(f"{what}: non-finite probabilities")
    if np.any(probs < 0):
        raise ModelError(f"{what}: negative probability")
    err = np.abs(probs.sum(axis=-1) - 1.0)
    if err.size and err.max() > tol:
        raise ModelError(f"{what}: rows sum to 1 only within {err.max():.3g}")


@dataclass(frozen=True, eq=False)
class TabularCMDP:
    transitions: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    start_state: int = 0
    context_probs: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        vals = np.asarray(self.reward_values, dtype=float)
        probs = np.asarray(self.reward_probs, dtype=float)
        if P.ndim != 5 or P.shape[2] != P.shape[4]:
            raise ModelError(f"transitions must have shape [C,H,S,A,S], got {P.shape}")
        if vals.shape != probs.shape or vals.shape[:4] != P.shape[:4]:
            raise ModelError("reward arrays must have shape [C,H,S,A,K] matching transitions")
        C, H, S = P.shape[0], P.shape[1], P.shape[2]
        _check_simplex(P, "transition row")
        _check_simplex(probs, "reward distribution")
        live = probs > 0
        if np.any(vals[live] < 0) or np.any(vals[live] > 1.0 / H + 1e-15):
            raise ModelError(f"reward support must lie in [0, 1/H] = [0, {1.0 / H}]")
        if not 0 <= int(self.start_state) < S:
            raise ModelError(f"start_state {self.start_state} out of range")
        cp = np.full(C, 1.0 / C) if self.context_probs is None else np.asarray(self.context_probs, float)
        if cp.shape != (C,):
            raise ModelError(f"context_probs must have length {C}")
        _check_simplex(cp, "context distribution")
        for arr in (P, vals, probs, cp):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "reward_values", vals)
        object.__setattr__(self, "reward_probs", probs)
        object.__setattr__(self, "context_probs", cp)
        object.__setattr__(self, "start_state", int(self.start_state))

    @property
    def num_contexts(self) -> int:
        return self.transitions.shape[0]

    @property
    def horizon(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[2]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.transitions.shape[:4]

    @cached_property
    def mean_rewards(self) -> np.ndarray:
        """[C, H, S, A] expected step reward."""
        out = (self.reward_values * self.reward_probs).sum(axis=-1)
        out.setflags(write=False)
        return out

    def check_context(self, context: int) -> int:
        if not 0 <= int(context) < self.num_contexts:
            raise ModelError(f"context {context} out of range [0, {self.num_contexts})")
        return int(context)

    def with_rewards(self, rewards: "RewardFunction") -> "TabularCMDP":
        """The same dynamics with the reward part replaced."""
        if rewards.values.shape[:4] != self.dims:
            raise ModelError("reward function shape does not match model")
        return TabularCMDP(self.transitions, rewards.values, rewards.probs, self.start_state, self.context_probs)

    def same_shape(self, other: "TabularCMDP") -> bool:
        return self.dims == other.dims and self.start_state == other.start_state

    def to_dict(self) -> dict:
        C, H, S, A = self.dims
        rewards = [
            [[[[{"value": float(v), "prob": float(p)}
                for v, p in zip(self.reward_values[c, h, s, a], self.reward_probs[c, h, s, a])]
               for a in range(A)] for s in range(S)] for h in range(H)] for c in range(C)
        ]
        return {
            "num_contexts": C,
            "horizon": H,
            "num_states": S,
            "num_actions": A,
            "start_state": self.start_state,
            "context_probs": self.context_probs.tolist(),
            "transitions": self.transitions.tolist(),
            "rewards": rewards,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularCMDP":
        try:
            C, H, S, A = (int(doc[k]) for k in ("num_contexts", "horizon", "num_states", "num_actions"))
            P = np.array(doc["transitions"], dtype=float).reshape(C, H, S, A, S)
            cells = doc["rewards"]
            K = max(len(cells[c][h][s][a]) for c in range(C) for h in range(H)
                    for s in range(S) for a in range(A))
            vals = np.zeros((C, H, S, A, K))
            probs = np.zeros((C, H, S, A, K))
            for c in range(C):
                for h in range(H):
                    for s in range(S):
                        for a in range(A):
                            for k, pair in enumerate(cells[c][h][s][a]):
                                vals[c, h, s, a, k] = pair["value"]
                                probs[c, h, s, a, k] = pair["prob"]
            return cls(P, vals, probs, int(doc["start_state"]), doc.get("context_probs"))
        except (KeyError, IndexError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularCMDP":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class RewardFunction:
    """A replaceable reward part: finite-support distributions with support in [0, 1/H]."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        probs = np.asarray(self.probs, float)
        if vals.shape != probs.shape or vals.ndim != 5:
            raise ModelError("reward function arrays must both be [C,H,S,A,K]")
        _check_simplex(probs, "reward distribution")
        H = vals.shape[1]
        live = probs > 0
        if np.any(vals[live] < 0) or np.any(vals[live] > 1.0 / H + 1e-15):
            raise ModelError("reward support must lie in [0, 1/H]")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def zeros(cls, C: int, H: int, S: int, A: int) -> "RewardFunction":
        return cls(np.zeros((C, H, S, A, 1)), np.ones((C, H, S, A, 1)))

    @classmethod
    def bernoulli(cls, means: np.ndarray) -> "RewardFunction":
        """Two-point rewards on {0, 1/H} with the given [C,H,S,A] means."""
        means = np.asarray(means, float)
        H = means.shape[1]
        p = means * H
        vals = np.stack([np.zeros_like(means), np.full_like(means, 1.0 / H)], axis=-1)
        probs = np.stack([1.0 - p, p], axis=-1)
        return cls(vals, probs)


@dataclass(frozen=True, eq=False)
class Policy:
    """Randomized non-stationary policy, ``probs[h, s, a] = pi^h(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, float)
        if p.ndim != 3:
            raise ModelError(f"policy table must be [H,S,A], got {p.shape}")
        _check_simplex(p, "policy row", tol=1e-9)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @classmethod
    def deterministic(cls, actions: np.ndarray, A: int) -> "Policy":
        actions = np.asarray(actions, int)
        return cls(np.eye(A)[actions])

    @cached_property
    def key(self) -> bytes:
        """Hashable identity used to deduplicate policies."""
        return np.round(self.probs, 12).tobytes()

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0) | (self.probs == 1)))

    def __eq__(self, other):
        return isinstance(other, Policy) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    values: np.ndarray

    @property
    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=-1)

    def layer_mass(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2))


@dataclass(frozen=True, eq=False)
class ValueTable:
    q: np.ndarray
    v: np.ndarray  # [H+1, S], last layer identically zero
    start_state: int = 0

    @property
    def initial(self) -> float:
        return float(self.v[0, self.start_state])


def _check_policy(model: TabularCMDP, policy: Policy) -> None:
    _, H, S, A = model.dims
    if policy.probs.shape != (H, S, A):
        raise ModelError(f"policy shape {policy.probs.shape} does not match model ({H},{S},{A})")


def evaluate_policy(model: TabularCMDP, context: int, policy: Policy) -> ValueTable:
    """Exact backward induction for Q^h(s,a; pi, c) and V^h(s; pi, c)."""
    c = model.check_context(context)
    _check_policy(model, policy)
    _, H, S, A = model.dims
    P, r = model.transitions[c], model.mean_rewards[c]
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        q[h] = r[h] + P[h] @ v[h + 1]
        v[h] = (policy.probs[h] * q[h]).sum(axis=-1)
    return ValueTable(q, v, model.start_state)


def optimal_values(model: TabularCMDP, context: int) -> tuple[ValueTable, Policy]:
    """Optimal values and the greedy deterministic policy (ties to the smallest action)."""
    c = model.check_context(context)
    _, H, S, A = model.dims
    P, r = model.transitions[c], model.mean_rewards[c]
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    greedy = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        q[h] = r[h] + P[h] @ v[h + 1]
        greedy[h] = q[h].argmax(axis=-1)
        v[h] = q[h].max(axis=-1)
    return ValueTable(q, v, model.start_state), Policy.deterministic(greedy, A)


def regret_of(model: TabularCMDP, context: int, policy: Policy) -> float:
    opt, _ = optimal_values(model, context)
    val = evaluate_policy(model, context, policy)
    return max(0.0, opt.initial - val.initial)


def occupancy_of(model: TabularCMDP, context: int, policy: Policy) -> OccupancyTable:
    """Forward recursion for d^h(s, a; pi, c) under the model's own transitions."""
    c = model.check_context(context)
    _check_policy(model, policy)
    _, H, S, A = model.dims
    P = model.transitions[c]
    d = np.zeros((H, S, A))
    state = np.zeros(S)
    state[model.start_state] = 1.0
    for h in range(H):
        d[h] = state[:, None] * policy.probs[h]
        if h + 1 < H:
            state = np.einsum("sa,sat->t", d[h], P[h])
    return OccupancyTable(d)


def _hellinger_rows(v1, p1, v2, p2) -> np.ndarray:
    """Squared Hellinger between finite-support distributions, batched over leading axes."""
    # Bhattacharyya coefficient: sum over matching support points of sqrt(p*q);
    # duplicate support values within a row are merged first.
    lead = p1.shape[:-1]
    out = np.empty(lead)
    for idx in np.ndindex(*lead):
        a, b = {}, {}
        for v, p in zip(v1[idx], p1[idx]):
            a[v] = a.get(v, 0.0) + p
        for v, p in zip(v2[idx], p2[idx]):
            b[v] = b.get(v, 0.0) + p
        bc = sum(np.sqrt(a[k] * b[k]) for k in a.keys() & b.keys())
        out[idx] = min(1.0, max(0.0, 1.0 - bc))
    return out


def transition_hellinger_sq(m1: TabularCMDP, m2: TabularCMDP) -> np.ndarray:
    """[C, H, S, A] squared Hellinger between next-state distributions."""
    bc = np.sqrt(m1.transitions * m2.transitions).sum(axis=-1)
    return np.clip(1.0 - bc, 0.0, 1.0)


def reward_hellinger_sq(m1: TabularCMDP, m2: TabularCMDP) -> np.ndarray:
    """[C, H, S, A] squared Hellinger between reward distributions."""
    return _hellinger_rows(m1.reward_values, m1.reward_probs, m2.reward_values, m2.reward_probs)


def simulation_gap_bound(m1: TabularCMDP, m2: TabularCMDP, context: int, policy: Policy) -> tuple[float, float]:
    """Value gap between two models against its occupancy-weighted Hellinger bound.

    Returns ``(lhs, rhs)`` with ``lhs = |V1(pi) - V2(pi)|`` and ``rhs`` the sum over
    (h, s, a) of ``d2^h(s, a) * (D(P1, P2) + D(R1, R2))``. ``D`` here is the
    unnormalized Hellinger distance ``sqrt(2 * hellinger_sq)``; with the 1/2-normalized
    distance the inequality fails (Bernoulli 0.5 vs 0.9 at H=1: gap 0.4 > 0.325).
    """
    if not m1.same_shape(m2):
        raise ModelError("models differ in shape or start state")
    c = m1.check_context(context)
    lhs = abs(evaluate_policy(m1, c, policy).initial - evaluate_policy(m2, c, policy).initial)
    d2 = occupancy_of(m2, c, policy).values
    dp = np.sqrt(2.0 * transition_hellinger_sq(m1, m2)[c])
    dr = np.sqrt(2.0 * reward_hellinger_sq(m1, m2)[c])
    # last-layer transitions never influence values
    dp[-1] = 0.0
    rhs = float((d2 * (dp + dr)).sum())
    return lhs, rhs


def load_model(path: str | Path) -> TabularCMDP:
    return TabularCMDP.from_json(Path(path).read_text())


def save_model(model: TabularCMDP, path: str | Path) -> None:
    Path(path).write_text(model.to_json())
