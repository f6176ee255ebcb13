"""Experiment orchestration: configs, training runs, and result artifacts.

A run report is a pure function of (config, seed): wall-clock times go to a
sidecar file and worker parallelism never changes results, so reports can be
compared bitwise. All artifacts embed the config hash and the master seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data.grouping import group_by_demographic
from .data.ingest import ingest
from .data.partition import make_folds
from .data.sequences import build_sequences, build_vocab
from .errors import ConfigError
from .fed.checkpoint import load_checkpoint, save_checkpoint
from .fed.clients import build_client_data
from .fed.engine import (
    EngineContext,
    EvalContext,
    TrainedBundle,
    adapted_params,
    evaluate_adapted,
    train_strategy,
)
from .fed.strategy import StrategyConfig, parse_strategy
from .keys import DEMOGRAPHIC_VARIABLES, GroupKey
from .metrics import ACTIVITY_TYPES, activity_heatmap, summarize
from .models import ModelSpec, extract_embedding, kt_init, op_init
from .seeding import substream
from .synth.archetypes import GenConfig
from .synth.generate import PRESETS, generate, preset

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TASKS = ("KT", "OP")
HEATMAP_BINS = 50

# hyperparameters forwarded from the config onto the parsed strategy
_STRATEGY_FIELDS = ("eta", "beta", "eps", "rounds", "local_iters", "epochs",
                    "batch_size", "per_group", "attention_mode", "clip")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: dataset x task x strategy x folds x repetitions.

    Hyperparameters left as None fall back to the strategy defaults.
    """
    dataset: str = "balanced-small"
    task: str = "KT"
    strategy: str = "sc1-G"
    demographic: str | None = None
    include_unspecified: bool = False
    hidden_dim: int = 48
    eta: float | None = None
    beta: float | None = None
    eps: float | None = None
    rounds: int | None = None
    local_iters: int | None = None
    epochs: int | None = None
    batch_size: int | None = None
    per_group: int | None = None
    attention_mode: str | None = None
    clip: float | None = None
    folds: tuple = (0, 1, 2, 3, 4)
    repetitions: int = 5
    seed: int = 0
    grid: dict = field(default_factory=dict)


_CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = dict(doc)
    schema = doc.pop("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r}")
    unknown = sorted(set(doc) - set(_CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    if "task" in doc and isinstance(doc["task"], str):
        doc["task"] = doc["task"].upper()
    if "folds" in doc:
        try:
            doc["folds"] = tuple(sorted({int(f) for f in doc["folds"]}))
        except (TypeError, ValueError):
            raise ConfigError(f"folds must be a list of integers, got {doc['folds']!r}") from None
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return config_from_dict(doc)


def config_snapshot(config: ExperimentConfig) -> dict:
    doc = {"schema": SCHEMA_VERSION}
    for name in _CONFIG_FIELDS:
        value = getattr(config, name)
        if isinstance(value, tuple):
            value = list(value)
        doc[name] = value
    return doc


def config_hash(config: ExperimentConfig) -> str:
    text = json.dumps(config_snapshot(config), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_strategy(config: ExperimentConfig) -> StrategyConfig:
    base = parse_strategy(config.strategy)
    overrides = {name: getattr(config, name) for name in _STRATEGY_FIELDS}
    try:
        return base.with_overrides(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def validate_config(config: ExperimentConfig) -> StrategyConfig:
    strategy = build_strategy(config)
    if config.task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {config.task!r}")
    if config.demographic is not None and config.demographic not in DEMOGRAPHIC_VARIABLES:
        raise ConfigError(f"demographic must be one of {DEMOGRAPHIC_VARIABLES}, "
                          f"got {config.demographic!r}")
    if strategy.scenario == "sc2" and config.demographic is None:
        raise ConfigError(f"strategy {config.strategy!r} needs --demographic")
    if not config.folds or any(f < 0 or f > 4 for f in config.folds):
        raise ConfigError(f"folds must be within 0..4, got {list(config.folds)}")
    if config.repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if config.hidden_dim < 1:
        raise ConfigError("hidden_dim must be >= 1")
    if config.seed < 0:
        raise ConfigError("seed must be nonnegative")
    return strategy


# ---------------------------------------------------------------------------
# Dataset resolution
# ---------------------------------------------------------------------------

def _find_table(dirp: Path, stem: str) -> Path:
    for ext in (".csv", ".jsonl"):
        p = dirp / f"{stem}{ext}"
        if p.is_file():
            return p
    raise ConfigError(f"{dirp} has no {stem}.csv or {stem}.jsonl")


def resolve_dataset(name: str):
    """A preset name generates in memory; a directory path is ingested."""
    if name in PRESETS:
        return generate(preset(name))
    p = Path(name)
    if p.is_dir():
        return ingest(_find_table(p, "events"), _find_table(p, "students"))
    raise ConfigError(f"dataset {name!r} is neither a preset "
                      f"({', '.join(sorted(PRESETS))}) nor a directory")


def dataset_hash(ds) -> str:
    h = hashlib.sha256()
    for sid in sorted(ds.students):
        s = ds.students[sid]
        h.update(json.dumps([s.student_id, s.course_id, s.gender, s.continent,
                             s.birth_year, s.outcome]).encode())
        for ev in ds.events_by_student.get(sid, []):
            h.update(json.dumps([ev.kind, ev.video_id, ev.response,
                                 ev.forum_action, ev.timestamp]).encode())
    return h.hexdigest()


def load_gen_config(doc: dict, seed: int | None = None) -> GenConfig:
    """A generation config document: {"preset": name} or full field set."""
    if not isinstance(doc, dict):
        raise ConfigError("generation config must be a JSON object")
    if "preset" in doc:
        unknown = sorted(set(doc) - {"preset", "seed"})
        if unknown:
            raise ConfigError(f"unknown preset config fields: {', '.join(unknown)}")
        cfg = preset(doc["preset"])
        if "seed" in doc:
            cfg = replace(cfg, seed=int(doc["seed"]))
    else:
        fields = {f.name for f in dataclasses.fields(GenConfig)}
        unknown = sorted(set(doc) - fields)
        if unknown:
            raise ConfigError(f"unknown generation config fields: {', '.join(unknown)}")
        doc = dict(doc)
        for name in ("courses", "subgroup_labels", "subgroup_shares"):
            if name in doc:
                doc[name] = tuple(doc[name])
        try:
            cfg = GenConfig(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


# ---------------------------------------------------------------------------
# One (fold, repetition) training run
# ---------------------------------------------------------------------------

@dataclass
class _RunSetup:
    strategy: StrategyConfig
    vocab: object
    seqs: dict
    ctx: EngineContext
    val_ectx: EvalContext
    test_ectx: EvalContext


def _group_split(config, strategy, ds, by_course: dict) -> dict:
    """GroupKey -> student ids at the strategy's evaluation granularity."""
    if strategy.scenario == "sc1":
        return {GroupKey(c): set(ids) for c, ids in by_course.items() if ids}
    ids = set()
    for part in by_course.values():
        ids |= set(part)
    return group_by_demographic(ds, config.demographic,
                                config.include_unspecified, student_ids=ids)


def _client_map(task, vocab, seqs, groups, require_nonempty: bool):
    out = {}
    for key in sorted(groups, key=lambda k: k.sort_key()):
        data = build_client_data(task, vocab, seqs, groups[key])
        if data.size == 0 and require_nonempty:
            logger.warning("group %s has no usable training students; excluded", key)
            continue
        out[key] = data
    return out


def _quiz_triplets(ds, ids) -> list:
    out = []
    for sid in sorted(ids):
        for ev in ds.events_by_student.get(sid, []):
            if ev.kind == "quiz_response":
                out.append((sid, ev.video_id, ev.response))
    return out


def _prepare(config: ExperimentConfig, ds, parts, fold: int, rep: int) -> _RunSetup:
    strategy = validate_config(config)
    part = parts[fold]
    vocab = build_vocab(ds, part.train_ids())
    seqs = build_sequences(ds, config.task, vocab)
    if config.task == "KT":
        spec = ModelSpec.kt(vocab, config.hidden_dim)
        init = kt_init(spec, substream(config.seed, "init", "kt", str(rep), str(fold)))
    else:
        spec = ModelSpec.op(vocab, config.hidden_dim)
        init = op_init(spec, substream(config.seed, "init", "op", str(rep), str(fold)))

    centralized = strategy.architecture == "G" and strategy.aggregation == "none"
    if centralized:
        clients = {GroupKey("__pool__"):
                   build_client_data(config.task, vocab, seqs, part.train_ids())}
    else:
        train_groups = _group_split(config, strategy, ds, part.train)
        clients = _client_map(config.task, vocab, seqs, train_groups,
                              require_nonempty=True)
    if not clients or all(c.size == 0 for c in clients.values()):
        raise ConfigError(f"fold {fold}: no usable training data for task {config.task}")

    course_pools: dict = {}
    subgroup_ids: dict = {}
    irt_responses: dict = {}
    if strategy.scenario == "sc2" and strategy.is_federated:
        for c, ids in sorted(part.train.items()):
            pool = build_client_data(config.task, vocab, seqs, ids)
            if pool.size:
                course_pools[c] = pool
        subgroup_ids = {key: list(data.ids) for key, data in clients.items()}
        if strategy.aggregation == "IRT":
            irt_responses = {key: _quiz_triplets(ds, train_groups[key])
                             for key in clients}

    ctx = EngineContext(task=config.task, strategy=strategy,
                        master_seed=config.seed, rep=rep, fold=fold,
                        init_params=init, clients=clients,
                        course_pools=course_pools, subgroup_ids=subgroup_ids,
                        irt_responses=irt_responses)

    eval_adapt = {} if centralized else clients

    def eval_ctx(by_course):
        groups = _group_split(config, strategy, ds, by_course)
        test = _client_map(config.task, vocab, seqs, groups,
                           require_nonempty=False)
        return EvalContext(task=config.task, strategy=strategy,
                           master_seed=config.seed, rep=rep, fold=fold,
                           groups=sorted(groups, key=lambda k: k.sort_key()),
                           test=test, adapt=eval_adapt,
                           course_pools=course_pools,
                           subgroup_ids=subgroup_ids)

    return _RunSetup(strategy=strategy, vocab=vocab, seqs=seqs, ctx=ctx,
                     val_ectx=eval_ctx(part.val), test_ectx=eval_ctx(part.test))


class _Selection:
    """Tracks the best validation snapshot across rounds/epochs.

    Local-only strategies select per model; everything else selects one
    round for the whole bundle. Undefined validation AUC scores as -1 so
    any defined value beats it and ties keep the earliest snapshot.
    """

    def __init__(self, strategy: StrategyConfig, val_ectx: EvalContext):
        self.strategy = strategy
        self.ectx = val_ectx
        self.per_model = strategy.architecture == "L"
        self.best: tuple | None = None
        self.best_groups: dict = {}

    def observe(self, round_idx: int, bundle: TrainedBundle):
        res = evaluate_adapted(bundle, self.ectx, tag=("val", round_idx))
        if self.per_model:
            stored = (bundle.course_params if self.strategy.scenario == "sc1"
                      else bundle.subgroup_params)
            for key, params in stored.items():
                value = res.get(key)
                score = -1.0 if value is None else value
                cur = self.best_groups.get(key)
                # a group with no validation signal keeps its final model
                if cur is None or score > cur[0] or score == cur[0] == -1.0:
                    self.best_groups[key] = (score, round_idx, params)
        else:
            defined = [v for v in res.values() if v is not None]
            score = float(np.mean(defined)) if defined else -1.0
            if (self.best is None or score > self.best[0]
                    or score == self.best[0] == -1.0):
                self.best = (score, round_idx, bundle)

    def result(self):
        """(best bundle, selected round per model, mean validation AUC)."""
        if self.per_model:
            models = {key: entry[2] for key, entry in self.best_groups.items()}
            if self.strategy.scenario == "sc1":
                bundle = TrainedBundle(strategy=self.strategy.name,
                                       course_params=models)
            else:
                bundle = TrainedBundle(strategy=self.strategy.name,
                                       subgroup_params=models)
            selected = {key.label(): entry[1]
                        for key, entry in sorted(self.best_groups.items(),
                                                 key=lambda kv: kv[0].sort_key())}
            defined = [entry[0] for entry in self.best_groups.values()
                       if entry[0] >= 0.0]
            val = float(np.mean(defined)) if defined else None
            return bundle, selected, val
        score, round_idx, bundle = self.best
        return bundle, {"*": round_idx}, (score if score >= 0.0 else None)


def run_one(config: ExperimentConfig, ds, parts, fold: int, rep: int):
    """Train one (fold, repetition); returns (result row, checkpoint models)."""
    setup = _prepare(config, ds, parts, fold, rep)
    tracker = _Selection(setup.strategy, setup.val_ectx)
    final = train_strategy(setup.ctx, callback=tracker.observe)
    best, selected, val_auc = tracker.result()
    test = evaluate_adapted(best, setup.test_ectx, tag=("test",))
    result = {
        "fold": fold,
        "rep": rep,
        "selected": selected,
        "val_auc": val_auc,
        "test_auc": {key.label(): value for key, value in test.items()},
        "train_loss": [h["loss"] for h in final.history],
    }
    return result, _models_payload(best)


def _models_payload(bundle: TrainedBundle) -> dict:
    out = {}
    if bundle.global_params is not None:
        out["global"] = bundle.global_params
    for key, ps in bundle.course_params.items():
        out[f"course:{key.label()}"] = ps
    for key, ps in bundle.subgroup_params.items():
        out[f"subgroup:{key.label()}"] = ps
    return out


def _bundle_from_models(models: dict, strategy_name: str) -> TrainedBundle:
    bundle = TrainedBundle(strategy=strategy_name)
    for name, ps in models.items():
        if name == "global":
            bundle.global_params = ps
        elif name.startswith("course:"):
            bundle.course_params[GroupKey.from_label(name[len("course:"):])] = ps
        elif name.startswith("subgroup:"):
            bundle.subgroup_params[GroupKey.from_label(name[len("subgroup:"):])] = ps
        else:
            raise ConfigError(f"unknown model entry {name!r} in checkpoint")
    return bundle


# ---------------------------------------------------------------------------
# Worker pool (results are order-preserving, hence worker-count invariant)
# ---------------------------------------------------------------------------

_POOL: dict = {}


def _pool_init(config, ds):
    _POOL["config"] = config
    _POOL["ds"] = ds
    _POOL["parts"] = make_folds(ds, config.seed)


def _pool_run(pair):
    fold, rep = pair
    return run_one(_POOL["config"], _POOL["ds"], _POOL["parts"], fold, rep)


def _run_all(config: ExperimentConfig, ds, parts, workers: int):
    pairs = [(fold, rep) for fold in config.folds
             for rep in range(config.repetitions)]
    if workers > 1 and len(pairs) > 1:
        methods = mp.get_all_start_methods()
        ctx = mp.get_context("fork" if "fork" in methods else None)
        with ProcessPoolExecutor(max_workers=min(workers, len(pairs)),
                                 mp_context=ctx,
                                 initializer=_pool_init,
                                 initargs=(config, ds)) as ex:
            return list(ex.map(_pool_run, pairs))
    return [run_one(config, ds, parts, fold, rep) for fold, rep in pairs]


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def write_json(path, doc):
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else
                              (repr(v) if isinstance(v, float) else str(v))
                              for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _summary_doc(summary) -> dict:
    per_group = {}
    for key, stat in summary.per_group.items():
        per_group[key.label()] = {"mean": stat.mean, "std": stat.std,
                                  "n_runs": stat.n_runs}
    return {
        "per_group": per_group,
        "overall_mean": summary.overall_mean,
        "overall_std": summary.overall_std,
        "flagged": sorted(key.label() for key in summary.flagged),
    }


def _checkpoint_path(out_dir: Path, fold: int, rep: int) -> Path:
    return out_dir / f"checkpoint_f{fold}_r{rep}.json"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(gen_config: GenConfig, out) -> dict:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = generate(gen_config, out_dir=out_dir)
    doc = {"students": len(ds.students),
           "events": sum(len(v) for v in ds.events_by_student.values()),
           "courses": list(ds.course_ids),
           "out": str(out_dir)}
    logger.info("generated %d students / %d events into %s",
                doc["students"], doc["events"], out_dir)
    return doc


def cmd_train(config: ExperimentConfig, out=None, workers: int = 1) -> dict:
    validate_config(config)
    ds = resolve_dataset(config.dataset)
    parts = make_folds(ds, config.seed)
    started = time.monotonic()
    outputs = _run_all(config, ds, parts, workers)
    elapsed = time.monotonic() - started

    runs = [result for result, _ in outputs]
    keyed = [{GroupKey.from_label(label): value
              for label, value in run["test_auc"].items()} for run in runs]
    summary = summarize(keyed)
    chash = config_hash(config)
    report = {
        "schema": SCHEMA_VERSION,
        "kind": "train-report",
        "config": config_snapshot(config),
        "config_hash": chash,
        "dataset_hash": dataset_hash(ds),
        "master_seed": config.seed,
        "groups": sorted({label for run in runs for label in run["test_auc"]}),
        "runs": runs,
        "summary": _summary_doc(summary),
    }
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "report.json", report)
        for result, models in outputs:
            save_checkpoint(_checkpoint_path(out_dir, result["fold"], result["rep"]),
                            models, chash,
                            extra={"fold": result["fold"], "rep": result["rep"],
                                   "master_seed": config.seed,
                                   "selected": result["selected"],
                                   "strategy": config.strategy,
                                   "task": config.task})
        write_json(out_dir / "timing.json",
                   {"config_hash": chash, "train_seconds": elapsed,
                    "workers": workers})
    return report


def cmd_evaluate(out, config: ExperimentConfig | None = None) -> dict:
    """Re-score saved checkpoints on the test folds and compare to the report."""
    out_dir = Path(out)
    report_path = out_dir / "report.json"
    if not report_path.is_file():
        raise ConfigError(f"no report.json under {out_dir}; run train first")
    report = json.loads(report_path.read_text())
    stored = config_from_dict(report["config"])
    if config is not None and config_hash(config) != report["config_hash"]:
        raise ConfigError("given config does not match the trained report")
    ds = resolve_dataset(stored.dataset)
    if dataset_hash(ds) != report["dataset_hash"]:
        raise ConfigError("dataset contents changed since training; refusing")
    parts = make_folds(ds, stored.seed)
    rows = []
    all_match = True
    for run in report["runs"]:
        fold, rep = run["fold"], run["rep"]
        path = _checkpoint_path(out_dir, fold, rep)
        if not path.is_file():
            raise ConfigError(f"missing checkpoint {path}")
        models, chash, _ = load_checkpoint(path)
        if chash != report["config_hash"]:
            raise ConfigError(f"{path} belongs to a different config")
        bundle = _bundle_from_models(models, stored.strategy)
        setup = _prepare(stored, ds, parts, fold, rep)
        test = evaluate_adapted(bundle, setup.test_ectx, tag=("test",))
        test_auc = {key.label(): value for key, value in test.items()}
        match = test_auc == run["test_auc"]
        all_match = all_match and match
        rows.append({"fold": fold, "rep": rep, "test_auc": test_auc,
                     "matches_report": match})
    doc = {
        "schema": SCHEMA_VERSION,
        "kind": "evaluation",
        "config_hash": report["config_hash"],
        "dataset_hash": report["dataset_hash"],
        "master_seed": stored.seed,
        "runs": rows,
        "all_match": all_match,
    }
    write_json(out_dir / "evaluation.json", doc)
    return doc


def cmd_grid(config: ExperimentConfig, out=None, workers: int = 1) -> dict:
    if not config.grid:
        raise ConfigError("grid search needs a non-empty 'grid' mapping")
    names = sorted(config.grid)
    allowed = set(_STRATEGY_FIELDS) | {"hidden_dim"}
    unknown = sorted(set(names) - allowed)
    if unknown:
        raise ConfigError(f"grid over unknown hyperparameters: {', '.join(unknown)}")
    for name in names:
        if not isinstance(config.grid[name], (list, tuple)) or not config.grid[name]:
            raise ConfigError(f"grid values for {name!r} must be a non-empty list")

    cells = []
    best_idx, best_score = None, None
    for values in itertools.product(*(config.grid[name] for name in names)):
        sub = replace(config, grid={}, **dict(zip(names, values)))
        report = cmd_train(sub, out=None, workers=workers)
        defined = [r["val_auc"] for r in report["runs"] if r["val_auc"] is not None]
        mean_val = float(np.mean(defined)) if defined else None
        cells.append({
            "params": dict(zip(names, values)),
            "mean_val_auc": mean_val,
            "test_overall_mean": report["summary"]["overall_mean"],
            "config_hash": report["config_hash"],
        })
        score = -1.0 if mean_val is None else mean_val
        if best_score is None or score > best_score:
            best_idx, best_score = len(cells) - 1, score

    doc = {
        "schema": SCHEMA_VERSION,
        "kind": "grid",
        "config": config_snapshot(config),
        "master_seed": config.seed,
        "cells": cells,
        "winner": cells[best_idx],
    }
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "grid.json", doc)
        header = names + ["mean_val_auc", "test_overall_mean"]
        rows = [[cell["params"][n] for n in names]
                + [cell["mean_val_auc"], cell["test_overall_mean"]]
                for cell in cells]
        _write_csv(out_dir / "grid.csv", header, rows)
    return doc


def cmd_export_embeddings(config: ExperimentConfig, out, workers: int = 1) -> dict:
    """Write one activity-embedding row per test student (outcome task only)."""
    if config.task != "OP":
        raise ConfigError("export-embeddings needs task OP; the interaction "
                          "model has no per-student pooled representation")
    validate_config(config)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    report_path = out_dir / "report.json"
    have = (report_path.is_file()
            and json.loads(report_path.read_text())["config_hash"] == chash
            and all(_checkpoint_path(out_dir, f, 0).is_file()
                    for f in config.folds))
    if not have:
        cmd_train(config, out=out_dir, workers=workers)

    ds = resolve_dataset(config.dataset)
    parts = make_folds(ds, config.seed)
    rows = []
    for fold in config.folds:
        models, _, _ = load_checkpoint(_checkpoint_path(out_dir, fold, 0))
        bundle = _bundle_from_models(models, config.strategy)
        setup = _prepare(config, ds, parts, fold, rep=0)
        pmap = adapted_params(bundle, setup.test_ectx, tag=("embed",))
        for key in setup.test_ectx.groups:
            params = pmap.get(key)
            if params is None:
                logger.warning("no model for %s; embeddings skipped", key)
                continue
            data = setup.test_ectx.test[key]
            variable = key.variable or "none"
            subgroup = key.subgroup or "all"
            for sid in data.ids:
                h = extract_embedding(setup.seqs[sid], params, setup.vocab)
                rows.append([sid, key.course, variable, subgroup]
                            + [float(v) for v in h])
    rows.sort(key=lambda r: r[0])
    k = config.hidden_dim
    header = (["student_id", "course", "demographic_variable", "subgroup"]
              + [f"dim_{i}" for i in range(k)])
    path = out_dir / "embeddings.csv"
    _write_csv(path, header, rows)
    return {"rows": len(rows), "out": str(path), "config_hash": chash}


def cmd_report(run_dirs, out) -> dict:
    """Merge train reports into comparison tables plus activity heatmaps."""
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    reports = []
    for d in run_dirs:
        path = Path(d) / "report.json"
        if not path.is_file():
            raise ConfigError(f"no report.json under {d}")
        reports.append(json.loads(path.read_text()))
    hashes = {r["dataset_hash"] for r in reports}
    if len(hashes) > 1:
        raise ConfigError("reports come from different datasets; refusing to merge")

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    columns: dict = {}
    for report in reports:
        cfg = report["config"]
        name = base = f"{cfg['task'].lower()}/{cfg['strategy']}"
        serial = 2
        while name in columns:
            name = f"{base}#{serial}"
            serial += 1
        cells = columns.setdefault(name, {})
        for label, stat in sorted(report["summary"]["per_group"].items()):
            course, variable, subgroup = label.split("|")
            rows.append([course, variable, subgroup, cfg["task"],
                         cfg["strategy"], stat["mean"], stat["std"],
                         stat["n_runs"]])
            cells[label] = stat
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    _write_csv(out_dir / "summary.csv",
               ["course", "demographic", "subgroup", "task", "strategy",
                "mean_auc", "std_auc", "n_runs"], rows)

    names = sorted(columns)
    labels = sorted({label for cells in columns.values() for label in cells})
    lines = ["# Strategy comparison", "",
             "Mean AUC (population std over runs) per evaluation group.", "",
             "| group | " + " | ".join(names) + " |",
             "|" + "---|" * (len(names) + 1)]
    for label in labels:
        cells = []
        for name in names:
            stat = columns[name].get(label)
            if stat is None or stat["mean"] is None:
                cells.append("-")
            else:
                cells.append(f"{stat['mean']:.4f} ({stat['std']:.4f})")
        lines.append("| " + label + " | " + " | ".join(cells) + " |")

    ds = resolve_dataset(reports[0]["config"]["dataset"])
    variables = sorted({r["config"]["demographic"] for r in reports
                       if r["config"]["demographic"]})
    include = {v: any(r["config"]["include_unspecified"] for r in reports
                      if r["config"]["demographic"] == v) for v in variables}
    heatmap_files = []
    for variable in variables:
        groups = group_by_demographic(ds, variable, include[variable])
        for course in ds.course_ids:
            keys = sorted((k for k in groups if k.course == course),
                          key=lambda k: k.sort_key())
            for a, b in itertools.combinations(keys, 2):
                grid = activity_heatmap(ds, groups[a], groups[b],
                                        t_bins=HEATMAP_BINS)
                fname = f"heatmap_{course}_{variable}_{a.subgroup}_vs_{b.subgroup}.csv"
                text = "\n".join(",".join(repr(float(v)) for v in row)
                                 for row in grid) + "\n"
                (out_dir / fname).write_text(text)
                heatmap_files.append({"file": fname, "course": course,
                                      "variable": variable,
                                      "group_a": a.subgroup,
                                      "group_b": b.subgroup})
    write_json(out_dir / "heatmaps.json",
               {"row_order": list(ACTIVITY_TYPES), "t_bins": HEATMAP_BINS,
                "files": heatmap_files})
    if heatmap_files:
        lines += ["", "Activity heatmaps (|engagement difference|, rows in "
                  "heatmaps.json order):", ""]
        lines += [f"- {entry['file']}" for entry in heatmap_files]
    (out_dir / "comparison.md").write_text("\n".join(lines) + "\n")
    return {"strategies": names, "groups": labels,
            "heatmaps": len(heatmap_files), "out": str(out_dir)}
