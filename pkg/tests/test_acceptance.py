"""End-to-end acceptance checks for the training and analysis pipeline.

One test per released guarantee, in order: analytic gradients, the ranking
metric, aggregation algebra, meta-update reductions, hierarchy collapse,
parallel determinism, the two personalization gains on heterogeneous data,
data-quality weighting, activity divergence, and artifact hygiene. Heavy
tests also pin their runtime budgets.
"""

import json
import logging
import time
from dataclasses import dataclass

import numpy as np
import pytest

from hierfed.cli import main
from hierfed.data.ingest import ingest
from hierfed.data.grouping import group_by_demographic
from hierfed.data.partition import make_folds
from hierfed.data.records import Dataset, StudentRecord
from hierfed.fed.aggregate import (
    aggregate_attention,
    aggregate_average,
    attention_weights,
)
from hierfed.fed.checkpoint import load_checkpoint, save_checkpoint
from hierfed.fed.clients import ClientState, build_client_data, meta_step, meta_update
from hierfed.fed.engine import EngineContext, run_scenario1, run_scenario2
from hierfed.fed.irt import irt_confidence, irt_interpolate
from hierfed.fed.strategy import parse_strategy
from hierfed.keys import GroupKey
from hierfed.metrics import activity_heatmap, auc
from hierfed.models.encoding import (
    ActivitySeq,
    ForumStep,
    InteractionSeq,
    ModelSpec,
    VideoStep,
    Vocab,
)
from hierfed.models.kt import kt_init, kt_loss_grad
from hierfed.models.op import op_init, op_loss_grad
from hierfed.nn.gradcheck import finite_diff_grad, grad_rel_error
from hierfed.nn.params import GradSet, ParamSet, axpy_params, clip_grad_norm
from hierfed.runner import ExperimentConfig, cmd_train
from hierfed.synth.archetypes import GenConfig
from hierfed.synth.generate import PRESETS, generate, preset

VOCAB = Vocab(("c0", "c1"), ("v0", "v1", "v2", "v3"))


def kt_client_data(rng, n_students, prefix="s"):
    seqs = {}
    for i in range(n_students):
        L = int(rng.integers(3, 8))
        items = [(int(rng.integers(2)), int(rng.integers(5))) for _ in range(L)]
        sid = f"{prefix}{i:02d}"
        seqs[sid] = InteractionSeq(sid, items,
                                   [int(rng.integers(2)) for _ in range(L)])
    return build_client_data("KT", VOCAB, seqs, sorted(seqs))


def op_client_data(rng, n_students, prefix="s"):
    seqs = {}
    for i in range(n_students):
        L = int(rng.integers(2, 9))
        steps = []
        for _ in range(L):
            if rng.random() < 0.7:
                resp = int(rng.integers(2)) if rng.random() < 0.5 else None
                steps.append(VideoStep(int(rng.integers(2)),
                                       int(rng.integers(5)), resp))
            else:
                steps.append(ForumStep(int(rng.integers(2)),
                                       int(rng.integers(3))))
        sid = f"{prefix}{i:02d}"
        seqs[sid] = ActivitySeq(sid, steps, int(rng.integers(2)))
    return build_client_data("OP", VOCAB, seqs, sorted(seqs))


def test_analytic_gradients_match_finite_differences():
    started = time.monotonic()
    worst = {"KT": 0.0, "OP": 0.0}
    for seed in range(20):
        rng = np.random.default_rng(seed)
        data = kt_client_data(rng, 2)
        params = kt_init(ModelSpec.kt(VOCAB, hidden_dim=8), rng)
        x, lengths, targets = data.batch(data.ids)
        _, analytic, _ = kt_loss_grad(x, lengths, targets, params)
        numeric = finite_diff_grad(
            lambda p: kt_loss_grad(x, lengths, targets, p)[0], params)
        worst["KT"] = max(worst["KT"], grad_rel_error(analytic, numeric))

        rng = np.random.default_rng(1000 + seed)
        data = op_client_data(rng, 2)
        params = op_init(ModelSpec.op(VOCAB, hidden_dim=8), rng)
        x, lengths, labels = data.batch(data.ids)
        _, analytic, _ = op_loss_grad(x, lengths, labels, params)
        numeric = finite_diff_grad(
            lambda p: op_loss_grad(x, lengths, labels, p)[0], params)
        worst["OP"] = max(worst["OP"], grad_rel_error(analytic, numeric))
    elapsed = time.monotonic() - started
    assert worst["KT"] <= 1e-4, f"interaction model gradients off: {worst['KT']:.3e}"
    assert worst["OP"] <= 1e-4, f"outcome model gradients off: {worst['OP']:.3e}"
    assert elapsed < 30.0, f"gradient checks took {elapsed:.1f}s"


def pair_count_auc(scores, labels):
    wins = 0.0
    pairs = 0
    for sp, lp in zip(scores, labels):
        if lp != 1:
            continue
        for sn, ln in zip(scores, labels):
            if ln != 0:
                continue
            pairs += 1
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / pairs if pairs else None


def test_auc_equals_pairwise_brute_force_exactly():
    started = time.monotonic()
    checked = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        # a coarse integer grid forces score ties on most draws
        scores = rng.integers(0, 7, size=n).astype(float)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        expect = pair_count_auc(scores, labels)
        assert auc(scores, labels) == expect
        checked += 1
    elapsed = time.monotonic() - started
    assert checked == 200
    assert elapsed < 5.0, f"ranking checks took {elapsed:.1f}s"


@dataclass
class FakeClient:
    key: GroupKey
    params: ParamSet
    size: int


def test_aggregation_algebra_identities():
    rng = np.random.default_rng(17)
    shapes = {"a.W": (4, 3), "a.b": (3,), "out.W": (3, 2)}

    def random_params():
        return ParamSet({k: rng.normal(size=s) for k, s in shapes.items()})

    clients = [FakeClient(GroupKey(f"c{i}"), random_params(), 10)
               for i in range(4)]
    mean = aggregate_average(clients)
    for name in shapes:
        stack = np.stack([c.params[name] for c in clients])
        assert np.abs(mean[name] - stack.mean(axis=0)).max() <= 1e-12

    server = random_params()
    copies = [FakeClient(GroupKey(f"c{i}"), server.copy(), 5) for i in range(3)]
    for mode in ("layerwise", "scalar"):
        fixed = aggregate_attention(server, copies, eps=0.7, mode=mode)
        assert all(np.array_equal(fixed[n], server[n]) for n in shapes)

    spread = [FakeClient(GroupKey(f"c{i}"), random_params(), 5) for i in range(5)]
    scalar = attention_weights(server, spread, mode="scalar")
    assert abs(scalar.sum() - 1.0) <= 1e-12
    layerwise = attention_weights(server, spread, mode="layerwise")
    for name in shapes:
        assert abs(layerwise[name].sum() - 1.0) <= 1e-12

    same = random_params()
    blended = irt_interpolate(same, same)
    assert all(np.array_equal(blended[n], same[n]) for n in shapes)


def test_meta_update_reduces_to_sgd_and_the_quadratic_value():
    # f(w) = w^2/2: adapting w=1 by 0.5 then stepping by 0.1 on the adapted
    # gradient lands exactly on 1 - 0.1 * 0.5 = 0.95 in double precision
    params = ParamSet({"w": np.array([1.0])})
    grad = lambda p: GradSet({"w": p["w"].copy()})
    out = meta_step(params, grad, grad, eta=0.1, beta=0.5)
    assert out["w"][0] == 0.95

    rng = np.random.default_rng(5)
    data = kt_client_data(rng, 10)
    init = kt_init(ModelSpec.kt(VOCAB, hidden_dim=6), rng)
    client = ClientState(GroupKey("c0"), init, data)
    d, d_prime = data.ids[:4], data.ids[4:8]
    meta = meta_update(client, eta=0.3, beta=0.0, clip=5.0,
                       batches=(d, d_prime))
    _, grads = data.loss_grad(d_prime, init)
    sgd = axpy_params(-0.3, clip_grad_norm(grads, 5.0), init)
    assert all(np.array_equal(arr, sgd[name]) for name, arr in meta)


def test_degenerate_hierarchy_collapses_to_one_level():
    rng = np.random.default_rng(42)
    data = kt_client_data(rng, 12)
    init = kt_init(ModelSpec.kt(VOCAB, hidden_dim=8), rng)
    rounds = []

    def keep(k, bundle):
        rounds.append(bundle.global_params)

    one = parse_strategy("sc1-P-AT").with_overrides(rounds=10, batch_size=4)
    run_scenario1(EngineContext(task="KT", strategy=one, master_seed=7, rep=0,
                                fold=0, init_params=init,
                                clients={GroupKey("c0"): data}),
                  callback=keep)
    flat = list(rounds)
    rounds.clear()

    key = GroupKey("c0", "gender", "F")
    two = parse_strategy("sc2-P-AT-B").with_overrides(rounds=10, batch_size=4)
    run_scenario2(EngineContext(task="KT", strategy=two, master_seed=7, rep=0,
                                fold=0, init_params=init, clients={key: data},
                                course_pools={"c0": data},
                                subgroup_ids={key: list(data.ids)}),
                  callback=keep)

    assert len(flat) == len(rounds) == 10
    for k, (p1, p2) in enumerate(zip(flat, rounds)):
        gap = max(np.abs(arr - p2[name]).max() for name, arr in p1)
        assert gap <= 1e-10, f"round {k} diverged by {gap:.2e}"


def test_parallel_training_is_bitwise_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv("HIERFED_SEED", raising=False)
    cfg = {"dataset": "balanced-small", "task": "kt", "strategy": "sc2-P-AT-B",
           "demographic": "gender", "folds": [0, 1], "repetitions": 4,
           "seed": 7}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    started = time.monotonic()
    for workers in ("1", "8"):
        rc = main(["train", "--config", str(cfg_path), "--workers", workers,
                   "--out", str(tmp_path / f"w{workers}")])
        assert rc == 0
    elapsed = time.monotonic() - started
    report_1 = (tmp_path / "w1" / "report.json").read_bytes()
    report_8 = (tmp_path / "w8" / "report.json").read_bytes()
    assert report_1 == report_8
    for fold in (0, 1):
        for rep in range(4):
            name = f"checkpoint_f{fold}_r{rep}.json"
            assert ((tmp_path / "w1" / name).read_bytes()
                    == (tmp_path / "w8" / name).read_bytes())
    assert elapsed < 120.0, f"determinism runs took {elapsed:.1f}s"


def _auc_stats(task: str, strategy: str, demographic):
    config = ExperimentConfig(dataset="heterogeneous-3course", task=task,
                              strategy=strategy, demographic=demographic,
                              folds=(0,), repetitions=5, seed=101)
    report = cmd_train(config, workers=5)
    means, stds = [], []
    for run in report["runs"]:
        vals = [v for v in run["test_auc"].values() if v is not None]
        means.append(float(np.mean(vals)))
        stds.append(float(np.std(vals)))
    return float(np.mean(means)), float(np.mean(stds))


def test_subgroup_personalization_raises_and_evens_auc():
    started = time.monotonic()
    problems = []
    for task in ("KT", "OP"):
        p_mean, p_std = _auc_stats(task, "sc2-P-AT-B", "age")
        g_mean, g_std = _auc_stats(task, "sc2-G-AT-T", "age")
        line = (f"{task}: personalized {p_mean:.4f}±{p_std:.4f} vs "
                f"global {g_mean:.4f}±{g_std:.4f} (gap {p_mean - g_mean:+.4f})")
        if p_mean - g_mean < 0.05:
            problems.append(f"{line}; mean gap below 0.05")
        if p_std > g_std + 0.02:
            problems.append(f"{line}; std not within +0.02 of global")
    elapsed = time.monotonic() - started
    assert elapsed <= 900.0, f"personalization runs took {elapsed:.1f}s"
    assert not problems, "; ".join(problems)


def test_course_personalization_beats_global_models():
    problems = []
    for task in ("KT", "OP"):
        p_mean, _ = _auc_stats(task, "sc1-P-AT", None)
        g_mean, _ = _auc_stats(task, "sc1-G-AT", None)
        if p_mean - g_mean < 0.03:
            problems.append(f"{task}: personalized {p_mean:.4f} vs global "
                            f"{g_mean:.4f} (gap {p_mean - g_mean:+.4f}, "
                            f"need >= 0.03)")
    assert not problems, "; ".join(problems)


def rasch_triplets(rng, n_students, n_items, flip, tag):
    abilities = rng.normal(0.0, 1.0, n_students)
    difficulties = np.linspace(-1.5, 1.5, n_items)
    out = []
    for i in range(n_students):
        for j in range(n_items):
            p = 1.0 / (1.0 + np.exp(-(abilities[i] - difficulties[j])))
            r = int(rng.random() < p)
            if rng.random() < flip:
                r = 1 - r
            out.append((f"{tag}{i:02d}", f"q{j}", r))
    return out


def test_confidence_weights_favor_the_low_noise_subgroup():
    low = GroupKey("c0", "gender", "F")
    high = GroupKey("c0", "gender", "M")
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        conf = irt_confidence({
            low: rasch_triplets(rng, 30, 10, flip=0.05, tag="f"),
            high: rasch_triplets(rng, 30, 10, flip=0.40, tag="m"),
        })
        assert abs(sum(conf.values()) - 1.0) <= 1e-12
        if conf[low] > conf[high]:
            wins += 1
    assert wins >= 9, f"low-noise subgroup won only {wins}/10 seeds"


def test_cross_subgroup_divergence_dominates_sampling_noise():
    order = ("~80", "80~90", "90~")
    cross_means, within_means = [], []
    for trial in range(10):
        cfg = GenConfig(name="heat", courses=("c0",), students_per_course=1800,
                        videos_per_course=16, shared_videos=0,
                        demographic="age", subgroup_labels=order,
                        subgroup_shares=(0.34, 0.33, 0.33), tau=0.8,
                        undisclosed_fraction=0.0, label_noise=0.02,
                        seed=7000 + trial)
        ds = generate(cfg)
        groups = group_by_demographic(ds, "age", False)
        by_sub = {k.subgroup: sorted(groups[k]) for k in groups}
        for i in range(3):
            for j in range(i + 1, 3):
                grid = activity_heatmap(ds, by_sub[order[i]], by_sub[order[j]],
                                        t_bins=50)
                cross_means.append(grid.mean())
        rng = np.random.default_rng(trial)
        for lab in order:
            ids = by_sub[lab]
            perm = rng.permutation(len(ids))
            half = len(ids) // 2
            grid = activity_heatmap(ds, [ids[x] for x in perm[:half]],
                                    [ids[x] for x in perm[half:]], t_bins=50)
            within_means.append(grid.mean())
    ratio = np.mean(cross_means) / np.mean(within_means)
    assert ratio >= 2.0, (
        f"cross-subgroup divergence {np.mean(cross_means):.4f} is only "
        f"{ratio:.2f}x the split noise {np.mean(within_means):.4f}")


def test_pipeline_hygiene_round_trips(tmp_path, caplog):
    # every preset must survive its own export/ingest cycle silently
    for name in sorted(PRESETS):
        out = tmp_path / name
        generate(preset(name), out_dir=out)
        with caplog.at_level(logging.WARNING, logger="hierfed"):
            ds = ingest(out / "events.csv", out / "students.csv")
        assert not caplog.records, [r.message for r in caplog.records]
        assert len(ds.students) > 0

    for trial in range(50):
        rng = np.random.default_rng(5000 + trial)
        students = {}
        for c in range(int(rng.integers(1, 4))):
            for i in range(int(rng.integers(5, 31))):
                sid = f"c{c}-s{i:03d}"
                students[sid] = StudentRecord(sid, f"c{c}")
        ds = Dataset(students, {sid: [] for sid in students})
        folds = make_folds(ds, seed=trial)
        assert len(folds) == 5
        for course, ids in ds.students_by_course().items():
            everyone = set(ids)
            tests = [folds[i].test[course] for i in range(5)]
            assert set.union(*tests) == everyone
            assert sum(len(t) for t in tests) == len(everyone)
            for f in folds:
                train, val, test = f.train[course], f.val[course], f.test[course]
                assert train | val | test == everyone
                assert not (train & val or train & test or val & test)
                assert len(val) == len(everyone - test) // 5

    rng = np.random.default_rng(99)
    models = {
        "global": kt_init(ModelSpec.kt(VOCAB, hidden_dim=5), rng),
        "course:c0|none|all": ParamSet({"w": rng.normal(size=(3, 4))[::2].copy(),
                                        "b": rng.normal(size=4)}),
    }
    path = tmp_path / "ck.json"
    save_checkpoint(path, models, "a" * 64, extra={"fold": 1, "rep": 2})
    loaded, chash, extra = load_checkpoint(path)
    assert chash == "a" * 64 and extra == {"fold": 1, "rep": 2}
    for name, params in models.items():
        assert loaded[name].names() == params.names()
        for lname, arr in params:
            assert np.array_equal(loaded[name][lname], arr)
