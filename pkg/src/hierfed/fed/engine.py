"""Training orchestration for every strategy, plus evaluation-time adaptation.

All engines are pure functions of (context, master seed): every random draw
comes from a named substream keyed by repetition, fold, the client's data
fingerprint, and the round index. Keying client streams by data fingerprint
(not group identity) makes a degenerate two-level hierarchy reproduce the
one-level run bitwise, and makes results independent of worker scheduling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data.sampling import stratified_batch
from ..errors import NumericsError
from ..keys import GroupKey
from ..metrics import auc
from ..nn.params import ParamSet, axpy_params, clip_grad_norm
from ..seeding import substream
from .aggregate import aggregate_attention, aggregate_average
from .clients import (
    ClientData,
    ClientState,
    local_sgd_epoch,
    local_sgd_steps,
    meta_update,
)
from .irt import irt_confidence, irt_interpolate
from .strategy import StrategyConfig

logger = logging.getLogger(__name__)


@dataclass
class TrainedBundle:
    """Models produced by one training run, per hierarchy level."""
    strategy: str
    global_params: ParamSet | None = None
    course_params: dict = field(default_factory=dict)    # course key -> params
    subgroup_params: dict = field(default_factory=dict)  # subgroup key -> params
    history: list = field(default_factory=list)


@dataclass
class EngineContext:
    """Everything a training engine needs for one (fold, repetition) run."""
    task: str
    strategy: StrategyConfig
    master_seed: int
    rep: int
    fold: int
    init_params: ParamSet
    clients: dict = field(default_factory=dict)       # GroupKey -> ClientData
    course_pools: dict = field(default_factory=dict)  # course id -> ClientData
    subgroup_ids: dict = field(default_factory=dict)  # GroupKey -> usable ids
    irt_responses: dict = field(default_factory=dict) # GroupKey -> triplets


def _client_rng(ctx: EngineContext, fingerprint: str, round_idx: int):
    return substream(ctx.master_seed, "client", str(ctx.rep), str(ctx.fold),
                     fingerprint, str(round_idx))


def _check_finite(params: ParamSet, where: str):
    bad = params.first_nonfinite_layer()
    if bad is not None:
        raise NumericsError(f"non-finite parameters in layer {bad!r} {where}")


def _update_client(ctx: EngineContext, key: GroupKey, start: ParamSet,
                   round_idx: int, stats: dict) -> ParamSet:
    data = ctx.clients[key]
    rng = _client_rng(ctx, data.fingerprint, round_idx)
    s = ctx.strategy
    try:
        if s.architecture == "P":
            params = start
            for _ in range(s.local_iters):
                client = ClientState(key, params, data)
                params = meta_update(client, s.eta, s.inner_step, rng,
                                     s.batch_size, s.clip, stats=stats)
        else:
            client = ClientState(key, start, data)
            params = local_sgd_steps(client, s.eta, s.batch_size, rng,
                                     s.local_iters, s.clip, stats=stats)
    except NumericsError as exc:
        raise NumericsError(f"round {round_idx}, client {key}: {exc}") from None
    _check_finite(params, f"after round {round_idx} on client {key}")
    return params


def _aggregate(server: ParamSet, states, s: StrategyConfig) -> ParamSet:
    if s.aggregation == "AV":
        return aggregate_average(states)
    return aggregate_attention(server, states, s.eps, s.attention_mode)


def run_scenario1(ctx: EngineContext, callback=None) -> TrainedBundle:
    """One-level federation over courses (Algorithm for scenario I)."""
    s = ctx.strategy
    theta_g = ctx.init_params
    keys = sorted(ctx.clients, key=lambda k: k.sort_key())
    history: list = []
    bundle = TrainedBundle(strategy=s.name)
    for k in range(s.rounds):
        stats: dict = {}
        updated = {}
        for key in keys:
            updated[key] = _update_client(ctx, key, theta_g, k, stats)
        states = [ClientState(key, updated[key], ctx.clients[key])
                  for key in keys]
        theta_g = _aggregate(theta_g, states, s)
        _check_finite(theta_g, f"after aggregation in round {k}")
        history.append({"round": k, "loss": stats.get("loss", 0.0),
                        "steps": stats.get("steps", 0)})
        bundle = TrainedBundle(strategy=s.name, global_params=theta_g,
                               course_params=dict(updated),
                               history=list(history))
        if callback is not None:
            callback(k, bundle)
    return bundle


def run_scenario2(ctx: EngineContext, callback=None) -> TrainedBundle:
    """Two-level federation: subgroups -> courses -> global (Algorithm for
    scenario II), with the course-adaptation step for personalized runs.

    Levels with a single member collapse by construction: one course means
    the global is the course aggregate (no second server pull), and a
    course with one subgroup skips the stratified adaptation step.
    """
    s = ctx.strategy
    keys = sorted(ctx.clients, key=lambda k: k.sort_key())
    courses = sorted({key.course for key in keys})
    subs_by_course = {c: [key for key in keys if key.course == c]
                      for c in courses}
    theta_g = ctx.init_params
    course_model = {c: ctx.init_params for c in courses}
    history: list = []
    bundle = TrainedBundle(strategy=s.name)

    for k in range(s.rounds):
        stats: dict = {}
        updated = {}
        course_agg = {}
        for c in courses:
            for key in subs_by_course[c]:
                updated[key] = _update_client(ctx, key, course_model[c], k, stats)
            states = [ClientState(key, updated[key], ctx.clients[key])
                      for key in subs_by_course[c]]
            course_agg[c] = _aggregate(course_model[c], states, s)
            _check_finite(course_agg[c], f"after course {c} aggregation, round {k}")

        if len(courses) == 1:
            theta_g = course_agg[courses[0]]
        else:
            course_states = [ClientState(GroupKey(c), course_agg[c],
                                         ctx.course_pools[c])
                             for c in courses]
            theta_g = _aggregate(theta_g, course_states, s)
        _check_finite(theta_g, f"after global aggregation in round {k}")

        for c in courses:
            subs = subs_by_course[c]
            if s.architecture == "P" and len(subs) >= 2:
                course_model[c] = _course_adapt(ctx, c, subs, theta_g, k, stats)
            else:
                course_model[c] = theta_g

        history.append({"round": k, "loss": stats.get("loss", 0.0),
                        "steps": stats.get("steps", 0)})
        bundle = TrainedBundle(
            strategy=s.name, global_params=theta_g,
            course_params={GroupKey(c): course_agg[c] for c in courses},
            subgroup_params=dict(updated), history=list(history))
        if callback is not None:
            callback(k, bundle)
    return bundle


def _course_adapt(ctx: EngineContext, course: str, subs, theta_g: ParamSet,
                  round_idx: int, stats: dict) -> ParamSet:
    """One plain gradient step on a stratified cross-subgroup batch."""
    s = ctx.strategy
    rng = substream(ctx.master_seed, "course-adapt", str(ctx.rep),
                    str(ctx.fold), course, str(round_idx))
    groups = {key: ctx.subgroup_ids[key] for key in subs}
    batch = stratified_batch(groups, s.per_group, rng)
    try:
        loss, grads = ctx.course_pools[course].loss_grad(batch, theta_g)
    except NumericsError as exc:
        raise NumericsError(
            f"round {round_idx}, course adaptation {course}: {exc}") from None
    stats["loss"] = stats.get("loss", 0.0) + loss
    adapted = axpy_params(-s.eta, clip_grad_norm(grads, s.clip), theta_g)
    _check_finite(adapted, f"after course adaptation of {course}, round {round_idx}")
    return adapted


def run_fedirt(ctx: EngineContext, callback=None) -> TrainedBundle:
    """Interpolated local training with IRT-confidence aggregation.

    Subgroup confidences are fit once per course from training quiz
    responses; each round every subgroup restarts from a cosine blend of
    its previous local model and the course global, trains E plain SGD
    iterations, and the course global becomes the confidence-weighted sum.
    Course globals are size-averaged into a reporting global.
    """
    s = ctx.strategy
    keys = sorted(ctx.clients, key=lambda k: k.sort_key())
    courses = sorted({key.course for key in keys})
    subs_by_course = {c: [key for key in keys if key.course == c]
                      for c in courses}
    confidence = {}
    for c in courses:
        confidence.update(irt_confidence(
            {key: ctx.irt_responses.get(key, []) for key in subs_by_course[c]}))

    course_model = {c: ctx.init_params for c in courses}
    local_prev = {key: ctx.init_params for key in keys}
    history: list = []
    bundle = TrainedBundle(strategy=s.name)
    for k in range(s.rounds):
        stats: dict = {}
        for c in courses:
            for key in subs_by_course[c]:
                start = irt_interpolate(local_prev[key], course_model[c])
                data = ctx.clients[key]
                rng = _client_rng(ctx, data.fingerprint, k)
                try:
                    local_prev[key] = local_sgd_steps(
                        ClientState(key, start, data), s.eta, s.batch_size,
                        rng, s.local_iters, s.clip, stats=stats)
                except NumericsError as exc:
                    raise NumericsError(
                        f"round {k}, client {key}: {exc}") from None
                _check_finite(local_prev[key], f"after round {k} on client {key}")
            course_model[c] = _weighted_sum(
                [(confidence[key], local_prev[key])
                 for key in subs_by_course[c]])
            _check_finite(course_model[c], f"after course {c} blend, round {k}")

        sizes = [(ctx.course_pools[c].size, course_model[c]) for c in courses]
        total = float(sum(n for n, _ in sizes))
        theta_g = _weighted_sum([(n / total, p) for n, p in sizes])
        history.append({"round": k, "loss": stats.get("loss", 0.0),
                        "steps": stats.get("steps", 0)})
        bundle = TrainedBundle(
            strategy=s.name, global_params=theta_g,
            course_params={GroupKey(c): course_model[c] for c in courses},
            subgroup_params=dict(local_prev), history=list(history))
        if callback is not None:
            callback(k, bundle)
    bundle.history[-1] = dict(bundle.history[-1], confidence={
        key.label(): confidence[key] for key in keys})
    return bundle


def _weighted_sum(weighted) -> ParamSet:
    acc = None
    for w, params in weighted:
        if acc is None:
            acc = {name: w * arr for name, arr in params}
        else:
            for name, arr in params:
                acc[name] = acc[name] + w * arr
    out = ParamSet.__new__(ParamSet)
    out.layers = acc
    return out


def run_centralized(ctx: EngineContext, callback=None) -> TrainedBundle:
    """Plain epochs of SGD over the pooled training data."""
    s = ctx.strategy
    (key, data), = ctx.clients.items()
    params = ctx.init_params
    history: list = []
    bundle = TrainedBundle(strategy=s.name)
    for e in range(s.epochs):
        stats: dict = {}
        rng = _client_rng(ctx, data.fingerprint, e)
        try:
            params = local_sgd_epoch(ClientState(key, params, data), s.eta,
                                     s.batch_size, rng, s.clip, stats=stats)
        except NumericsError as exc:
            raise NumericsError(f"epoch {e}: {exc}") from None
        _check_finite(params, f"after epoch {e}")
        history.append({"round": e, "loss": stats.get("loss", 0.0),
                        "steps": stats.get("steps", 0)})
        bundle = TrainedBundle(strategy=s.name, global_params=params,
                               history=list(history))
        if callback is not None:
            callback(e, bundle)
    return bundle


def run_local(ctx: EngineContext, callback=None) -> TrainedBundle:
    """Independent per-group models, no aggregation at all."""
    s = ctx.strategy
    keys = sorted(ctx.clients, key=lambda k: k.sort_key())
    models = {key: ctx.init_params for key in keys}
    history: list = []
    bundle = TrainedBundle(strategy=s.name)
    for e in range(s.epochs):
        stats: dict = {}
        for key in keys:
            data = ctx.clients[key]
            rng = _client_rng(ctx, data.fingerprint, e)
            try:
                models[key] = local_sgd_epoch(
                    ClientState(key, models[key], data), s.eta, s.batch_size,
                    rng, s.clip, stats=stats)
            except NumericsError as exc:
                raise NumericsError(f"epoch {e}, client {key}: {exc}") from None
            _check_finite(models[key], f"after epoch {e} on client {key}")
        history.append({"round": e, "loss": stats.get("loss", 0.0),
                        "steps": stats.get("steps", 0)})
        if ctx.strategy.scenario == "sc1":
            bundle = TrainedBundle(strategy=s.name, course_params=dict(models),
                                   history=list(history))
        else:
            bundle = TrainedBundle(strategy=s.name, subgroup_params=dict(models),
                                   history=list(history))
        if callback is not None:
            callback(e, bundle)
    return bundle


def train_strategy(ctx: EngineContext, callback=None) -> TrainedBundle:
    """Dispatch to the engine matching the parsed strategy."""
    s = ctx.strategy
    if s.architecture == "L":
        return run_local(ctx, callback)
    if s.aggregation == "none":
        return run_centralized(ctx, callback)
    if s.aggregation == "IRT":
        return run_fedirt(ctx, callback)
    if s.scenario == "sc1":
        return run_scenario1(ctx, callback)
    return run_scenario2(ctx, callback)


# ---------------------------------------------------------------------------
# Evaluation-time adaptation and scoring
# ---------------------------------------------------------------------------

@dataclass
class EvalContext:
    """Evaluation data at the run's granularity (courses or subgroups)."""
    task: str
    strategy: StrategyConfig
    master_seed: int
    rep: int
    fold: int
    groups: list = field(default_factory=list)        # eval GroupKeys
    test: dict = field(default_factory=dict)          # key -> ClientData
    adapt: dict = field(default_factory=dict)         # key -> train ClientData
    course_pools: dict = field(default_factory=dict)  # course -> ClientData
    subgroup_ids: dict = field(default_factory=dict)  # key -> usable train ids


def _eval_rng(ectx: EvalContext, tag, *parts):
    return substream(ectx.master_seed, "eval", *tag, str(ectx.rep),
                     str(ectx.fold), *parts)


def _score(data: ClientData | None, params: ParamSet, key: GroupKey):
    if data is None or data.size == 0:
        logger.warning("no test students for %s; skipped", key)
        return None
    scores, labels = data.predict(params)
    return auc(scores, labels)


def _adapt_courses_sc2(bundle: TrainedBundle, ectx: EvalContext, tag) -> dict:
    """One stratified meta-update from the global to each course model."""
    s = ectx.strategy
    out = {}
    for course in sorted(ectx.course_pools):
        pool = ectx.course_pools[course]
        groups = {key: ectx.subgroup_ids[key]
                  for key in ectx.subgroup_ids if key.course == course}
        groups = {key: ids for key, ids in groups.items() if ids}
        if pool.size == 0 or not groups:
            out[course] = bundle.global_params
            continue
        rng = _eval_rng(ectx, tag, "course", course)
        d = stratified_batch(groups, s.per_group, rng)
        d_prime = stratified_batch(groups, s.per_group, rng)
        client = ClientState(GroupKey(course), bundle.global_params, pool)
        out[course] = meta_update(client, s.eta, s.inner_step,
                                  batch_size=s.batch_size, clip=s.clip,
                                  batches=(d, d_prime))
    return out


def adapted_params(bundle: TrainedBundle, ectx: EvalContext,
                   tag=("test",)) -> dict:
    """The parameters each evaluation group would be scored with.

    sc1 personalized: one local epoch from the global per course. sc2
    personalized: one stratified meta-update forms course models; bottom
    level adds one local epoch per subgroup. Non-personalized strategies
    return their stored models. Groups with no usable model map to None.
    """
    s = ectx.strategy
    tag = tuple(str(t) for t in tag)
    out: dict[GroupKey, ParamSet | None] = {}

    if s.aggregation == "IRT":
        for key in ectx.groups:
            out[key] = bundle.subgroup_params.get(key)
        return out

    if s.architecture == "L":
        stored = bundle.course_params if s.scenario == "sc1" else bundle.subgroup_params
        for key in ectx.groups:
            out[key] = stored.get(key)
        return out

    if s.architecture == "G":
        for key in ectx.groups:
            if s.hierarchy == "M":
                out[key] = bundle.course_params.get(key.course_key(),
                                                    bundle.global_params)
            else:
                out[key] = bundle.global_params
        return out

    if s.scenario == "sc1":
        for key in ectx.groups:
            data = ectx.adapt.get(key)
            params = bundle.global_params
            if data is not None and data.size > 0:
                rng = _eval_rng(ectx, tag, "adapt", data.fingerprint)
                params = local_sgd_epoch(ClientState(key, params, data),
                                         s.eta, s.batch_size, rng, s.clip)
            out[key] = params
        return out

    course_models = _adapt_courses_sc2(bundle, ectx, tag)
    for key in ectx.groups:
        params = course_models.get(key.course, bundle.global_params)
        if s.hierarchy == "B":
            data = ectx.adapt.get(key)
            if data is not None and data.size > 0:
                rng = _eval_rng(ectx, tag, "adapt", data.fingerprint)
                params = local_sgd_epoch(ClientState(key, params, data),
                                         s.eta, s.batch_size, rng, s.clip)
        out[key] = params
    return out


def evaluate_adapted(bundle: TrainedBundle, ectx: EvalContext,
                     tag=("test",)) -> dict:
    """Per-group test AUC after the strategy's evaluation-time adaptation.

    Undefined AUCs (single-class or empty test sets, or a group with no
    trained model) surface as None rather than a placeholder number.
    """
    params_map = adapted_params(bundle, ectx, tag)
    out: dict[GroupKey, float | None] = {}
    for key in ectx.groups:
        params = params_map.get(key)
        if params is None:
            logger.warning("no trained model for %s; skipped", key)
            out[key] = None
            continue
        out[key] = _score(ectx.test.get(key), params, key)
    return out
