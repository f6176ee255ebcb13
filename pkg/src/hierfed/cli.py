"""Command-line interface for dataset generation, training, and reporting.

Exit codes: 0 success, 2 configuration error, 3 numerical failure. The
HIERFED_SEED environment variable overrides every other seed source.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .errors import ConfigError, NumericsError
from .runner import (
    ExperimentConfig,
    cmd_evaluate,
    cmd_export_embeddings,
    cmd_generate,
    cmd_grid,
    cmd_report,
    cmd_train,
    load_config,
    load_gen_config,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--strategy", metavar="NAME",
                   help="strategy name, e.g. sc2-P-AT-B")
    p.add_argument("--task", choices=["kt", "op"])
    p.add_argument("--demographic", choices=["gender", "continent", "age"])
    p.add_argument("--include-unspecified", action="store_true", default=None,
                   help="keep students with the variable missing as their own "
                        "subgroup")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, default=1, metavar="N",
                   help="parallel (fold, repetition) workers; results do not "
                        "depend on this")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierfed",
        description="Personalized federated learning simulations over "
                    "hierarchical student data")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in [
        ("generate", "synthesize a dataset into --out"),
        ("train", "train one strategy over folds x repetitions"),
        ("evaluate", "re-score saved checkpoints against their report"),
        ("grid", "grid-search hyperparameters by validation AUC"),
        ("export-embeddings", "write per-student activity embeddings (OP)"),
        ("report", "merge train reports into tables and heatmaps"),
    ]:
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "report":
            p.add_argument("run_dirs", nargs="+", metavar="RUN_DIR",
                           help="directories containing report.json")
    return parser


def _env_seed() -> int | None:
    raw = os.environ.get("HIERFED_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"HIERFED_SEED must be an integer, got {raw!r}") from None


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides: dict = {}
    if args.strategy:
        overrides["strategy"] = args.strategy
    if args.task:
        overrides["task"] = args.task.upper()
    if args.demographic:
        overrides["demographic"] = args.demographic
    if args.include_unspecified is not None:
        overrides["include_unspecified"] = True
    if args.seed is not None:
        overrides["seed"] = args.seed
    env = _env_seed()
    if env is not None:
        overrides["seed"] = env
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _require_out(args) -> str:
    if not args.out:
        raise ConfigError(f"{args.command} needs --out")
    return args.out


def _summary_line(report: dict) -> dict:
    return {
        "config_hash": report["config_hash"],
        "groups": len(report["groups"]),
        "runs": len(report["runs"]),
        "overall_mean": report["summary"]["overall_mean"],
        "overall_std": report["summary"]["overall_std"],
    }


def _dispatch(args) -> dict:
    if args.command == "generate":
        if not args.config:
            raise ConfigError("generate needs --config with a generation "
                              "config or {\"preset\": name}")
        path = args.config
        try:
            doc = json.loads(open(path).read())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        seed = args.seed
        env = _env_seed()
        if env is not None:
            seed = env
        return cmd_generate(load_gen_config(doc, seed=seed), _require_out(args))

    if args.command == "train":
        report = cmd_train(_experiment_config(args), out=args.out,
                           workers=args.workers)
        return _summary_line(report)

    if args.command == "evaluate":
        config = _experiment_config(args) if args.config else None
        doc = cmd_evaluate(_require_out(args), config=config)
        return {"config_hash": doc["config_hash"], "runs": len(doc["runs"]),
                "all_match": doc["all_match"]}

    if args.command == "grid":
        doc = cmd_grid(_experiment_config(args), out=args.out,
                       workers=args.workers)
        return {"cells": len(doc["cells"]), "winner": doc["winner"]}

    if args.command == "export-embeddings":
        return cmd_export_embeddings(_experiment_config(args),
                                     _require_out(args), workers=args.workers)

    # report
    return cmd_report(args.run_dirs, _require_out(args))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        doc = _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(doc, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
