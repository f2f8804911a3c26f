"""Experiment configuration, multi-seed runners, result files and the invariant battery."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np

from .algorithm import (ALGORITHMS, Constants, EpochSchedule, RunRecord, random_policy,
                        random_reward_function, reward_free_error, run_lolipop, run_reward_free)
from .cmdp import (ModelError, Policy, TabularCMDP, evaluate_policy, occupancy_of, optimal_values,
                   simulation_gap_bound)
from .env import RngStream, rollout
from .instances import GenSpec, generate_class, hard_pair, needle_class
from .oracle import ModelClass, log_likelihood, mle

log = logging.getLogger(__name__)

# RNG stream for the reward-free evaluation pairs (shared across seeds and T)
EVAL_STREAM = 11
INSTANCE_KINDS = ("gen", "file", "needle", "hard-pair")


class ConfigError(ValueError):
    pass


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return f"line {i}: "
    return ""


@dataclass
class ExperimentConfig:
    instance: dict
    algorithms: list[str] = field(default_factory=lambda: ["lolipop"])
    schedule: str = "doubling"
    T: int = 1024
    delta: float = 0.05
    constants: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    normalization: str = "bisection"
    workers: int = 1
    eval_pairs: int = 100

    def validate(self, text: str | None = None) -> "ExperimentConfig":
        def fail(key, msg):
            raise ConfigError(f"{_line_of(text, key)}{key}: {msg}")

        kind = self.instance.get("kind") if isinstance(self.instance, dict) else None
        if kind not in INSTANCE_KINDS:
            fail("instance", f"kind must be one of {INSTANCE_KINDS}")
        if isinstance(self.algorithms, str):
            self.algorithms = [self.algorithms]
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            fail("algorithms", f"unknown {bad}; expected a nonempty subset of {ALGORITHMS}")
        if self.schedule not in ("doubling", "loglog"):
            fail("schedule", "must be 'doubling' or 'loglog'")
        if not isinstance(self.T, int) or self.T < 1:
            fail("T", "must be a positive integer")
        if not 0.0 < float(self.delta) < 0.5:
            fail("delta", "must lie in (0, 1/2)")
        unknown = set(self.constants) - {f.name for f in fields(Constants)}
        if unknown:
            fail("constants", f"unknown keys {sorted(unknown)}")
        if any(float(v) <= 0 for v in self.constants.values()):
            fail("constants", "must be positive")
        if not self.seeds:
            fail("seeds", "must be nonempty")
        if self.normalization not in ("bisection", "falcon"):
            fail("normalization", "must be 'bisection' or 'falcon'")
        try:
            H = self.model_class(self.seeds[0]).models[0].horizon
        except (OSError, ValueError, KeyError, TypeError) as e:
            fail("instance", str(e))
        if self.T < H:
            fail("T", f"must be at least H={H}")
        return self

    @property
    def constants_obj(self) -> Constants:
        return Constants(**{k: float(v) for k, v in self.constants.items()})

    def model_class(self, seed: int) -> ModelClass:
        """The instance for ``seed``; generated kinds use ``seed`` unless the instance pins one."""
        spec = dict(self.instance)
        kind = spec.pop("kind")
        if kind == "file":
            return ModelClass.load(spec["path"])
        spec.setdefault("seed", seed)
        if kind == "gen":
            return generate_class(GenSpec(**spec))[0]
        if kind == "needle":
            return needle_class(**spec)
        return hard_pair(**{**spec, "cell": tuple(spec["cell"]) if spec.get("cell") else None})

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"line {e.lineno}: invalid JSON ({e.msg})") from None
        if not isinstance(doc, dict):
            raise ConfigError("line 1: config must be a JSON object")
        names = {f.name for f in fields(cls)}
        for k in doc:
            if k not in names:
                raise ConfigError(f"{_line_of(text, k)}{k}: unknown field")
        if "instance" not in doc:
            raise ConfigError("instance: required field missing")
        return cls(**doc).validate(text)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return asdict(self)


def _run_one(args) -> tuple[str, int, RunRecord, float]:
    cfg, alg, seed = args
    mc = cfg.model_class(seed)
    if mc.truth is None:
        raise ConfigError("instance: model class has no truth_index")
    t0 = time.perf_counter()
    rec = run_lolipop(mc.truth, mc, EpochSchedule(cfg.schedule), cfg.delta, cfg.T, cfg.constants_obj,
                      seed, alg, cfg.normalization)
    return alg, seed, rec, time.perf_counter() - t0


def _pool_map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Write ``regret_<algorithm>_seed<k>.csv`` per run and ``summary.json``; return the summary."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, a, s) for a in cfg.algorithms for s in cfg.seeds]
    results = _pool_map(_run_one, jobs, cfg.workers)
    summary = {"config": cfg.to_dict(), "algorithms": {}}
    for alg in cfg.algorithms:
        runs = [r for r in results if r[0] == alg]
        finals = [float(r[2].cum_regret[-1]) for r in runs]
        for _, seed, rec, _ in runs:
            rec.write_csv(out / f"regret_{alg}_seed{seed}.csv")
        summary["algorithms"][alg] = {
            "seeds": [r[1] for r in runs],
            "final_cum_regret": finals,
            "mean_final_cum_regret": float(np.mean(finals)),
            "median_final_cum_regret": float(np.median(finals)),
            "oracle_calls_per_run": [r[2].total_oracle_calls for r in runs],
            "total_oracle_calls": int(sum(r[2].total_oracle_calls for r in runs)),
            "wall_time_s": float(sum(r[3] for r in runs)),
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def evaluation_pairs(C: int, H: int, S: int, A: int, n: int, seed: int = 0):
    """``n`` random (reward function, per-context policies) pairs from a fixed stream."""
    rng = RngStream(seed, EVAL_STREAM)
    return [(random_reward_function(rng, C, H, S, A), [random_policy(rng, H, S, A) for _ in range(C)])
            for _ in range(n)]


def reward_free_objective(truth: TabularCMDP, estimate: TabularCMDP, pairs) -> np.ndarray:
    """Per-pair context-averaged absolute value error."""
    return np.array([reward_free_error(truth, estimate, R, pols) for R, pols in pairs])


def _run_rf(args):
    cfg, seed, pairs = args
    mc = cfg.model_class(seed)
    est, rec = run_reward_free(mc.truth, mc, cfg.T, cfg.delta, cfg.constants_obj, seed)
    errs = reward_free_objective(mc.truth, est, pairs)
    return seed, rec, errs


def run_reward_free_experiment(cfg: ExperimentConfig) -> dict:
    """Per seed: run CSV plus the objective over ``cfg.eval_pairs`` evaluation pairs; the
    per-seed score is the worst pair. Writes ``summary.json``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    C, H, S, A = cfg.model_class(cfg.seeds[0]).models[0].dims
    pairs = evaluation_pairs(C, H, S, A, cfg.eval_pairs)
    results = _pool_map(_run_rf, [(cfg, s, pairs) for s in cfg.seeds], cfg.workers)
    worst = []
    for seed, rec, errs in results:
        rec.write_csv(out / f"reward_free_seed{seed}.csv")
        np.savetxt(out / f"value_error_seed{seed}.csv", errs, fmt="%.17g", header="value_error",
                   comments="")
        worst.append(float(errs.max()))
    summary = {"config": cfg.to_dict(), "seeds": list(cfg.seeds), "max_value_error": worst,
               "median_max_value_error": float(np.median(worst)),
               "oracle_calls_per_run": [r[1].total_oracle_calls for r in results]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def check_instance(model_class: ModelClass, seed: int = 0, n_policies: int = 20) -> list[CheckResult]:
    """Invariant battery on every model of a class (and the class as a whole)."""
    out: list[CheckResult] = []
    rng = RngStream(seed, EVAL_STREAM)

    def record(name, ok, detail=""):
        out.append(CheckResult(name, bool(ok), detail))

    for i, m in enumerate(model_class.models):
        C, H, S, A = m.dims
        pols = [Policy.uniform(H, S, A)] + [random_policy(rng, H, S, A) for _ in range(n_policies)]
        worst_v = worst_opt = worst_mass = worst_sim = 0.0
        for c in range(C):
            vstar, pistar = optimal_values(m, c)
            worst_opt = max(worst_opt, abs(evaluate_policy(m, c, pistar).initial - vstar.initial))
            for p in pols:
                d = occupancy_of(m, c, p).values
                v = evaluate_policy(m, c, p).initial
                worst_v = max(worst_v, abs(float((d * m.mean_rewards[c]).sum()) - v))
                worst_mass = max(worst_mass, float(np.abs(d.sum(axis=(1, 2)) - 1).max()))
                worst_opt = max(worst_opt, v - vstar.initial)
                for other in model_class.models[:3]:
                    lhs, rhs = simulation_gap_bound(m, other, c, p)
                    worst_sim = max(worst_sim, lhs - rhs)
        record(f"model {i}: value equals occupancy-weighted reward", worst_v <= 1e-10, f"{worst_v:.2e}")
        record(f"model {i}: occupancy layers sum to one", worst_mass <= 1e-10, f"{worst_mass:.2e}")
        record(f"model {i}: greedy policy is optimal", worst_opt <= 1e-10, f"{worst_opt:.2e}")
        record(f"model {i}: simulation gap bound holds", worst_sim <= 1e-10, f"{worst_sim:.2e}")
    if model_class.truth is not None:
        truth = model_class.truth
        C, H, S, A = truth.dims
        trajs = [rollout(truth, rng.uniform_int(C), Policy.uniform(H, S, A), rng) for _ in range(2000)]
        est = mle(model_class, trajs)
        own = mle(model_class, trajs[:0])
        record("MLE on empty data returns index 0", own.model_index == 0)
        ll_truth = sum(log_likelihood(truth, t) for t in trajs)
        record("MLE likelihood dominates the truth's", est.log_likelihood >= ll_truth - 1e-9,
               f"index {est.model_index} vs truth {model_class.truth_index}")
    return out


def load_instance(path: str | Path) -> ModelClass:
    """A model-class file, or a single-model file wrapped as a singleton class."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"unreadable instance file {path}: {e}") from None
    try:
        if isinstance(doc, dict) and "transitions" in doc:
            return ModelClass((TabularCMDP.from_dict(doc),), 0)
        return ModelClass.from_dict(doc)
    except (KeyError, TypeError, ModelError) as e:
        raise ConfigError(f"invalid instance file {path}: {e}") from None
