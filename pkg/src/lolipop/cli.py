"""Command-line front end: ``python3 -m lolipop {gen,run,reward-free,check}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .algorithm import ALGORITHMS, ScheduleError
from .cmdp import ModelError
from .cover import CoverError
from .harness import (ConfigError, ExperimentConfig, check_instance, load_instance,
                      run_experiment, run_reward_free_experiment)
from .instances import GenerationError, GenSpec, class_json, generate_class, hard_pair, needle_class
from .lp import LPError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lolipop", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a model class and write it as JSON")
    g.add_argument("--kind", choices=("random", "needle", "hard-pair"), default="random")
    g.add_argument("--S", type=int, default=3)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--H", type=int, default=2)
    g.add_argument("--contexts", type=int, default=1)
    g.add_argument("--class-size", type=int, default=8)
    g.add_argument("--separation", type=float, default=0.0)
    g.add_argument("--reward-mode", choices=("bernoulli-step", "zero"), default="bernoulli-step")
    g.add_argument("--gap", type=float, default=None, help="needle height (needle, hard-pair)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="JSON file with GenSpec fields")
    g.add_argument("--out", required=True)

    for name, hlp in (("run", "regret experiment"), ("reward-free", "reward-free experiment")):
        r = sub.add_parser(name, help=hlp)
        r.add_argument("--config", help="JSON experiment config; flags override its fields")
        r.add_argument("--instance", help="model-class JSON file (overrides the config instance)")
        if name == "run":
            r.add_argument("--algorithm", action="append", choices=ALGORITHMS)
            r.add_argument("--schedule", choices=("doubling", "loglog"))
        r.add_argument("--T", type=int)
        r.add_argument("--delta", type=float)
        r.add_argument("--c-E", type=float)
        r.add_argument("--c-gamma", type=float)
        r.add_argument("--c-eta", type=float)
        r.add_argument("--c-zeta", type=float)
        r.add_argument("--seed", type=int, action="append", help="repeatable")
        r.add_argument("--workers", type=int)
        r.add_argument("--out")

    c = sub.add_parser("check", help="run the invariant battery on an instance file")
    c.add_argument("instance")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="optional JSON report path")
    return p


def _gen(args) -> int:
    if args.config:
        spec = GenSpec(**json.loads(Path(args.config).read_text()))
        text = class_json(generate_class(spec)[0], spec)
    elif args.kind == "random":
        spec = GenSpec(args.S, args.A, args.H, args.contexts, args.class_size, args.separation,
                       args.reward_mode, args.seed)
        text = class_json(generate_class(spec)[0], spec)
    else:
        gap = args.gap if args.gap is not None else 1.0 / args.H
        if args.kind == "needle":
            mc = needle_class(args.S, args.A, args.H, args.contexts, args.class_size, gap, args.seed)
        else:
            mc = hard_pair(args.S, args.A, args.H, gap, num_contexts=args.contexts, seed=args.seed)
        text = class_json(mc)
    Path(args.out).write_text(text)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    doc: dict = {}
    text = None
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        base = ExperimentConfig.from_json(text)
        doc = base.to_dict()
    if args.instance:
        doc["instance"] = {"kind": "file", "path": args.instance}
    consts = dict(doc.get("constants", {}))
    for flag, key in (("c_E", "c_E"), ("c_gamma", "c_gamma"), ("c_eta", "c_eta"), ("c_zeta", "c_zeta")):
        if getattr(args, flag) is not None:
            consts[key] = getattr(args, flag)
    doc["constants"] = consts
    for key in ("T", "delta", "workers", "out"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if getattr(args, "schedule", None):
        doc["schedule"] = args.schedule
    if getattr(args, "algorithm", None):
        doc["algorithms"] = args.algorithm
    if args.seed:
        doc["seeds"] = args.seed
    if "instance" not in doc:
        raise ConfigError("instance: give --config or --instance")
    return ExperimentConfig(**doc).validate(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "gen":
            return _gen(args)
        if args.cmd == "check":
            results = check_instance(load_instance(args.instance), args.seed)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}")
            if args.out:
                Path(args.out).write_text(json.dumps([r.__dict__ for r in results], indent=2))
            return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC
        cfg = _experiment_config(args)
        if args.cmd == "run":
            summary = run_experiment(cfg)
            for alg, s in summary["algorithms"].items():
                print(f"{alg}: median final cum regret {s['median_final_cum_regret']:.6g}, "
                      f"oracle calls {s['oracle_calls_per_run']}")
        else:
            summary = run_reward_free_experiment(cfg)
            print(f"median worst-pair value error {summary['median_max_value_error']:.6g}, "
                  f"oracle calls {summary['oracle_calls_per_run']}")
        return EXIT_OK
    except (ConfigError, ScheduleError, GenerationError, ModelError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (LPError, CoverError, FloatingPointError, ArithmeticError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
