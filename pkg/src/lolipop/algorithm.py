"""The epoch/segment outer loop, its baselines, and the reward-free variant."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .cmdp import ModelError, Policy, RewardFunction, TabularCMDP, evaluate_policy, optimal_values
from .cover import EpochCovers, EpochParams
from .env import CONTEXT_STREAM, POLICY_STREAM, ROLLOUT_STREAM, RngStream, Trajectory, _Sampler
from .oracle import MLEOracle, ModelClass, oracle_error_budget

log = logging.getLogger(__name__)

ALGORITHMS = ("lolipop", "uniform", "etc-greedy", "oracle-optimal")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    c_E: float = 1.0
    c_gamma: float = 1.0
    c_eta: float = 1.0
    c_zeta: float = 1.0


@dataclass(frozen=True)
class EpochSchedule:
    """``doubling``: tau_m = 2^m; ``loglog``: tau_m = ceil(2 (T/H)^(1 - 2^-m));
    ``explicit``: the given taus. All are capped at T/H."""

    kind: str = "doubling"
    taus_explicit: tuple[int, ...] | None = None

    def taus(self, T: int, H: int) -> list[int]:
        if T < H:
            raise ScheduleError(f"T={T} is smaller than the horizon H={H}")
        total = T // H
        if self.kind == "explicit":
            taus = [0] + [int(x) for x in (self.taus_explicit or ())]
            if taus[-1] != total or any(b <= a for a, b in zip(taus, taus[1:])):
                raise ScheduleError(f"explicit schedule must increase strictly to T/H={total}: {taus}")
            return taus
        taus = [0]
        m = 1
        while taus[-1] < total:
            if self.kind == "doubling":
                raw = 2 ** m
            elif self.kind == "loglog":
                raw = math.ceil(2.0 * total ** (1.0 - 2.0 ** (-m)))
            else:
                raise ScheduleError(f"unknown schedule kind {self.kind!r}")
            if m == 1 and raw > total:
                raise ScheduleError(f"T={T} < H * tau_1 = {H * raw}: the first epoch does not fit")
            tau = min(raw, total)
            if tau > taus[-1]:
                taus.append(tau)
            m += 1
        return taus

    def confidence_epochs(self, m: int, N: int) -> int:
        """Epoch count used in the delta / (2 N^2) split (running proxy for doubling)."""
        return m if self.kind == "doubling" else N


def epoch_parameters(m: int, taus: list[int], class_size: int, delta: float, H: int, S: int, A: int,
                     constants: Constants = Constants(), n_conf: int | None = None) -> EpochParams:
    """Budget, gamma, eta, zeta for epoch ``m >= 1``.

    The budget uses the per-segment sample count of the previous epoch,
    tau_{m-1} - tau_{m-2} (with tau_{-1} = tau_0 = 0), so epoch 1 gets budget 1.
    """
    if m < 1:
        raise ValueError("epochs are numbered from 1")
    n_conf = n_conf or (len(taus) - 1)
    tau = lambda i: taus[i] if i >= 0 else 0  # noqa: E731
    n = tau(m - 1) - tau(m - 2)
    budget = oracle_error_budget(class_size, delta / (2.0 * n_conf ** 2), n, constants.c_E)
    return params_from_budget(m, budget, H, S, A, constants)


def params_from_budget(m: int, budget: float, H: int, S: int, A: int,
                       constants: Constants = Constants()) -> EpochParams:
    """gamma, eta and zeta implied by an error budget in (0, 1]."""
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must lie in (0, 1], got {budget}")
    gamma = constants.c_gamma * math.sqrt(H ** 6 * S ** 4 * A ** 3 / budget)
    eta = constants.c_eta * gamma / (720.0 * math.e * H ** 5 * S ** 3 * A ** 2)
    zeta = constants.c_zeta * gamma / (8.0 * math.e * H * (H + 1) ** 2)
    return EpochParams(m, budget, gamma, eta, zeta)


def initial_estimate(template: TabularCMDP) -> TabularCMDP:
    """Uniform transitions and identically-zero rewards."""
    C, H, S, A = template.dims
    return TabularCMDP(np.full((C, H, S, A, S), 1.0 / S), np.zeros((C, H, S, A, 1)),
                       np.ones((C, H, S, A, 1)), template.start_state, template.context_probs)


def compose_layers(models: list[TabularCMDP]) -> TabularCMDP:
    """Model whose layer h (transitions and rewards) is taken from ``models[h]``."""
    H = len(models)
    K = max(m.reward_values.shape[-1] for m in models)
    C, _, S, A = models[0].dims
    P = np.stack([m.transitions[:, h] for h, m in enumerate(models)], axis=1)
    vals = np.zeros((C, H, S, A, K))
    probs = np.zeros((C, H, S, A, K))
    for h, m in enumerate(models):
        k = m.reward_values.shape[-1]
        vals[:, h, ..., :k] = m.reward_values[:, h]
        probs[:, h, ..., :k] = m.reward_probs[:, h]
    return TabularCMDP(P, vals, probs, models[0].start_state, models[0].context_probs)


@dataclass
class EpochSnapshot:
    params: EpochParams
    tau_start: int
    tau_end: int
    layer_indices: list[int] = field(default_factory=list)
    covers: EpochCovers | None = None
    prev_model: TabularCMDP | None = None


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    t: np.ndarray
    epoch: np.ndarray
    segment: np.ndarray
    context: np.ndarray
    exp_regret: np.ndarray
    cum_regret: np.ndarray
    oracle_calls: np.ndarray
    epochs: list[EpochSnapshot]
    final_estimate: TabularCMDP | None = None
    trajectories: list[Trajectory] | None = None

    COLUMNS = ("t", "epoch", "segment", "context", "exp_regret", "cum_regret", "oracle_calls")

    @property
    def total_oracle_calls(self) -> int:
        return int(self.oracle_calls[-1]) if len(self.oracle_calls) else 0

    def cum_regret_at(self, t: int) -> float:
        return float(self.cum_regret[t - 1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.t, self.epoch, self.segment, self.context, self.exp_regret,
                           self.cum_regret, self.oracle_calls):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), int(row[3]),
                            repr(float(row[4])), repr(float(row[5])), int(row[6])])

    def parameter_table(self) -> list[dict]:
        return [dict(asdict(e.params), tau_start=e.tau_start, tau_end=e.tau_end,
                     layer_indices=list(e.layer_indices)) for e in self.epochs]


class _TruthRegret:
    """Memoized exact regret of policies under the true model."""

    def __init__(self, truth: TabularCMDP):
        self.truth = truth
        self.opt = [optimal_values(truth, c) for c in range(truth.num_contexts)]
        self._cache: dict = {}

    def __call__(self, c: int, policy: Policy) -> float:
        key = (c, policy.key)
        if key not in self._cache:
            v = evaluate_policy(self.truth, c, policy).initial
            self._cache[key] = max(0.0, self.opt[c][0].initial - v)
        return self._cache[key]

    def optimal_policy(self, c: int) -> Policy:
        return self.opt[c][1]


def run_lolipop(truth: TabularCMDP, model_class: ModelClass, schedule: EpochSchedule, delta: float,
                T: int, constants: Constants = Constants(), seed: int = 0, algorithm: str = "lolipop",
                normalization: str = "bisection", observe_rewards: bool = True,
                keep_trajectories: bool = False, keep_covers: bool = False) -> RunRecord:
    """Run the layerwise cover / inverse-gap-weighting loop (or a baseline) for T rounds.

    Each epoch m is split into H segments of tau_m - tau_{m-1} rounds. In segment h the
    learner samples from a fixed per-context kernel; at the end of the segment the MLE
    oracle is fit on that segment's trajectories and only its layer h is kept. The
    per-round regret column is the exact conditional pseudo-regret given the context.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if not truth.same_shape(model_class[0]):
        raise ModelError("truth and model class differ in shape")
    if model_class.truth_index is None and not any(m is truth for m in model_class.models):
        log.warning("truth is not marked as a member of the model class (non-realizable run)")
    C, H, S, A = truth.dims
    taus = schedule.taus(T, H)
    N = len(taus) - 1
    ctx_rng = RngStream(seed, CONTEXT_STREAM)
    roll_rng = RngStream(seed, ROLLOUT_STREAM)
    pol_rng = RngStream(seed, POLICY_STREAM)
    sampler = _Sampler(truth)
    oracle = MLEOracle(model_class)
    regret = _TruthRegret(truth)
    uses_oracle = algorithm in ("lolipop", "etc-greedy")
    uniform = Policy.uniform(H, S, A)

    n_rounds = H * taus[-1]
    cols = {k: np.zeros(n_rounds, dtype=int) for k in ("t", "epoch", "segment", "context", "oracle_calls")}
    exp_reg = np.zeros(n_rounds)
    trajs = [] if keep_trajectories else None
    epochs: list[EpochSnapshot] = []
    prev = initial_estimate(truth)
    t = 0
    for m in range(1, N + 1):
        params = epoch_parameters(m, taus, len(model_class), delta, H, S, A, constants,
                                  schedule.confidence_epochs(m, N))
        covers = EpochCovers(params, prev, normalization) if algorithm == "lolipop" else None
        snap = EpochSnapshot(params, taus[m - 1], taus[m], covers=covers if keep_covers else None,
                             prev_model=prev if keep_covers else None)
        greedy_cache: dict[int, Policy] = {}
        layer_models = []
        for h in range(H):
            kernels: dict[int, tuple] = {}
            segment = []
            for _ in range(taus[m] - taus[m - 1]):
                c = ctx_rng.categorical(truth.context_probs)
                if c not in kernels:
                    if algorithm == "lolipop":
                        cov, igw = covers.cover(c, h)
                        pols, w = cov.policies, igw.weights
                    elif algorithm == "etc-greedy":
                        if c not in greedy_cache:
                            greedy_cache[c] = optimal_values(prev, c)[1]
                        pols, w = (greedy_cache[c],), np.ones(1)
                    elif algorithm == "uniform":
                        pols, w = (uniform,), np.ones(1)
                    else:
                        pols, w = (regret.optimal_policy(c),), np.ones(1)
                    er = float(sum(wi * regret(c, p) for wi, p in zip(w, pols)))
                    kernels[c] = (pols, w, er)
                pols, w, er = kernels[c]
                k = pol_rng.categorical(w)
                traj = sampler.rollout(c, pols[k], roll_rng, policy_id=(m, h, k),
                                       observe_rewards=observe_rewards)
                segment.append(traj)
                if trajs is not None:
                    trajs.append(traj)
                cols["t"][t] = t + 1
                cols["epoch"][t] = m
                cols["segment"][t] = h + 1
                cols["context"][t] = c
                cols["oracle_calls"][t] = oracle.calls
                exp_reg[t] = er
                t += 1
            if uses_oracle:
                est = oracle(segment)
                layer_models.append(model_class[est.model_index])
                snap.layer_indices.append(est.model_index)
                if covers is not None:
                    covers.set_layer_estimate(h, model_class[est.model_index])
                cols["oracle_calls"][t - 1] = oracle.calls
        if uses_oracle:
            prev = compose_layers(layer_models)
        epochs.append(snap)
    return RunRecord(algorithm, seed, cols["t"], cols["epoch"], cols["segment"], cols["context"],
                     exp_reg, np.cumsum(exp_reg), cols["oracle_calls"], epochs,
                     prev if uses_oracle else None, trajs)


def run_reward_free(truth: TabularCMDP, model_class: ModelClass, T: int, delta: float,
                    constants: Constants = Constants(), seed: int = 0,
                    keep_covers: bool = False) -> tuple[TabularCMDP, RunRecord]:
    """Two epochs with tau_1 = T/(2H), tau_2 = T/H and no reward observations.

    Returns the estimate assembled from the second epoch's layer outputs.
    """
    for m in model_class.models:
        if np.any(m.mean_rewards != 0):
            raise ModelError("reward-free exploration requires a model class with zero rewards")
    H = truth.horizon
    if T % (2 * H):
        raise ScheduleError(f"T={T} must be a multiple of 2H={2 * H}")
    sched = EpochSchedule("explicit", (T // (2 * H), T // H))
    rec = run_lolipop(truth, model_class, sched, delta, T, constants, seed,
                      observe_rewards=False, keep_covers=keep_covers)
    return rec.final_estimate, rec


def reward_free_error(truth: TabularCMDP, estimate: TabularCMDP, rewards: RewardFunction,
                      policies: list[Policy]) -> float:
    """E_c |V_truth(pi_c, c, R) - V_estimate(pi_c, c, R)| under the truth's context law."""
    mt, me = truth.with_rewards(rewards), estimate.with_rewards(rewards)
    gaps = [abs(evaluate_policy(mt, c, policies[c]).initial - evaluate_policy(me, c, policies[c]).initial)
            for c in range(truth.num_contexts)]
    return float(np.dot(truth.context_probs, gaps))


def random_reward_function(rng: RngStream, C: int, H: int, S: int, A: int) -> RewardFunction:
    return RewardFunction.bernoulli(rng.random((C, H, S, A)) / H)


def random_policy(rng: RngStream, H: int, S: int, A: int) -> Policy:
    w = -np.log(1.0 - rng.random((H, S, A)))
    return Policy(w / w.sum(axis=-1, keepdims=True))
