"""Acceptance criteria, one test per criterion, in order.

Each test prints one PASS line with its measured quantities; stated wall
clock budgets are asserted.  Criterion 8 runs the full desk-scale
experiment grid once (several minutes); criterion 9 repeats it and
compares bytes.
"""

import itertools
import json
import math
import os
import time

import numpy as np
import pytest

from seqlab.corpus import (
    DatasetSplit,
    Sentence,
    dedup,
    downsample,
    generate_synthetic,
    load_conll,
    make_dataset,
    stats,
)
from seqlab.decoder import BeamConfig, beam_decode, exhaustive_decode, greedy_decode, step_distribution
from seqlab.distill import DistillConfig, SilverExample, distill_loss, _batch_loss
from seqlab.formats import (
    TagSet,
    encode_input,
    encode_target,
    make_pair,
    parse_output,
    valid_next_tags,
)
from seqlab.harness import ExperimentConfig, run_experiment
from seqlab.metrics import micro_f1
from seqlab.nn.gradcheck import check_gradients
from seqlab.nn.tensor import cross_entropy, kl_divergence
from seqlab.scorer import TableScorer
from seqlab.student import StudentConfig, StudentModel, StudentOutput
from seqlab.teacher import TeacherTrainConfig, build_teacher, train_teacher, _batched_loss

HERE = os.path.dirname(__file__)
CONFIG_PATH = os.path.join(HERE, "..", "configs", "experiment_small.json")


def report(criterion, text):
    print(f"\n[criterion {criterion:>2}] PASS  {text}")


def valid_sbio(tags):
    for i, t in enumerate(tags):
        if t == "I" and (i == 0 or tags[i - 1] == "O"):
            return False
    return True


# -- 1: hallucination-freeness ------------------------------------------------

def test_criterion_1_hallucination_freeness():
    budget = 30.0
    start = time.time()
    rng = np.random.default_rng(2024)
    trials = 1000
    for trial in range(trials):
        n_labels = int(rng.integers(1, 11))
        tag_set = TagSet([f"L{i}" for i in range(n_labels)])
        length = int(rng.integers(1, 13))
        tokens = [f"w{rng.integers(200)}" for _ in range(length)]
        table = TableScorer(default_score=float(rng.normal(0, 50)))
        # adversarial entries: random huge scores on random candidate
        # strings, including malformed ones the decoder must never emit
        s_in = encode_input(tokens)
        for _ in range(int(rng.integers(0, 12))):
            junk = " ".join(
                str(rng.choice(["<extra_id_0>", "XXX", "I", "O", "L0", "wq"]))
                for _ in range(int(rng.integers(1, 8)))
            )
            table.set(s_in, junk, float(rng.normal(0, 100)))
        k = int(rng.choice([1, 4]))
        result = beam_decode(table, tokens, tag_set, BeamConfig(k=k))
        for text in result.texts:
            parsed = parse_output(text, length, tag_set)
            assert len(parsed) == length
            assert valid_sbio(parsed)
    elapsed = time.time() - start
    assert elapsed < budget, f"fuzz took {elapsed:.1f}s, budget {budget}s"
    report(1, f"{trials} fuzz decodes all parsed to valid sequences "
              f"({elapsed:.1f}s < {budget:.0f}s)")


# -- 2: beam exactness ---------------------------------------------------------

def test_criterion_2_beam_exactness():
    budget = 10.0
    start = time.time()
    rng = np.random.default_rng(7)
    trials = 0
    for trial in range(50):
        n_labels = int(rng.integers(1, 3))
        length = int(rng.integers(1, 4))
        tag_set = TagSet([f"L{i}" for i in range(n_labels)])
        tokens = [f"t{j}" for j in range(length)]
        s_in = encode_input(tokens)
        table = TableScorer(default_score=-1000.0)
        for n in range(1, length + 1):
            for combo in itertools.product(tag_set.full, repeat=n):
                if valid_sbio(combo):
                    parts = ["<extra_id_0>"]
                    for k, t in enumerate(combo, start=1):
                        parts += [t, f"<extra_id_{k}>"]
                    table.set(s_in, " ".join(parts), float(rng.normal()))
        k_full = tag_set.size ** length
        result = beam_decode(table, tokens, tag_set, BeamConfig(k=k_full))
        oracle_tags, oracle_score = exhaustive_decode(table, tokens, tag_set)
        assert result.sequences[0] == oracle_tags
        assert result.final_scores[0] == oracle_score
        trials += 1
    elapsed = time.time() - start
    assert elapsed < budget
    report(2, f"{trials} unpruned beams matched the exhaustive oracle exactly "
              f"({elapsed:.1f}s < {budget:.0f}s)")


# -- 3: score bookkeeping ------------------------------------------------------

def test_criterion_3_score_bookkeeping():
    budget = 30.0
    start = time.time()
    ds = generate_synthetic(11, (40, 10, 100), 3, lexicon_size=12)
    pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
    dev_pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.dev]
    cfg = TeacherTrainConfig(
        epochs=3, patience=3, embedding_dim=16, encoder_hidden=12,
        decoder_hidden=12, batch_size=8, seed=5, n_sentinels=20,
        unk_dropout=0.0,
    )
    teacher, _ = train_teacher(pairs, dev_pairs, ds.tag_set, cfg)
    scheme = teacher.scheme
    checked_rows = 0
    for sent in ds.test.sentences[:100]:
        s_in = encode_input(sent.tokens, scheme)
        tags, matrix = greedy_decode(teacher, sent.tokens, ds.tag_set, scheme)
        prefix_parts = [scheme.sentinel(0)]
        for i, tag in enumerate(tags):
            mask = valid_next_tags(tags[:i], ds.tag_set)
            # independent stepwise conditionals: p(t, s_{i+1} | prefix)
            row = np.full(ds.tag_set.size, -np.inf)
            lp1 = teacher.next_token_logprobs(s_in, prefix_parts)
            for ti, t in enumerate(ds.tag_set.full):
                if not mask[ti]:
                    continue
                lp2 = teacher.next_token_logprobs(s_in, prefix_parts + [t])
                row[ti] = float(lp1[teacher.token_id(t)]) + float(
                    lp2[teacher.token_id(scheme.sentinel(i + 1))]
                )
            stored = step_distribution(matrix[i])
            stepwise = step_distribution(row)
            assert np.abs(stored - stepwise).max() < 1e-9
            finite = np.where(np.isfinite(matrix[i]), matrix[i], -np.inf)
            assert ds.tag_set.full[int(np.argmax(finite))] == tag
            checked_rows += 1
            prefix_parts += [tag, scheme.sentinel(i + 1)]
    elapsed = time.time() - start
    assert elapsed < budget
    report(3, f"{checked_rows} stored rows softmax to the stepwise conditionals "
              f"within 1e-9, pseudo-labels are row argmaxes ({elapsed:.1f}s < {budget:.0f}s)")


# -- 4: gradient correctness ---------------------------------------------------

def test_criterion_4_gradient_checks():
    budget = 120.0
    start = time.time()
    rng = np.random.default_rng(3)

    ds = generate_synthetic(4, (8, 2, 2), 2, lexicon_size=5, max_filler_len=2)
    pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
    cfg = TeacherTrainConfig(
        epochs=1, patience=1, embedding_dim=6, encoder_hidden=4,
        decoder_hidden=4, batch_size=4, seed=1, n_sentinels=12,
    )
    teacher = build_teacher(pairs, ds.tag_set, cfg)
    teacher_params = dict(teacher.params.items())
    n_checked = 0
    for rep in range(3):
        chosen = [pairs[int(i)] for i in rng.choice(len(pairs), size=2, replace=False)]
        short = [p for p in chosen]
        enc = [np.asarray(teacher.token_ids(p.input), dtype=np.intp) for p in short]
        dec = [np.asarray(teacher.token_ids(p.target), dtype=np.intp) for p in short]
        n = min(len(e) for e in enc)
        m = min(len(d) for d in dec)
        enc_ids = np.stack([e[:n] for e in enc])
        dec_ids = np.stack([d[:m] for d in dec])
        errors = check_gradients(
            lambda: _batched_loss(teacher, enc_ids, dec_ids),
            teacher_params, epsilon=1e-5, rtol=1e-4,
        )
        assert set(errors) == set(teacher.params.names())
        n_checked += 1

    tag_set = TagSet(["A"])
    scfg = StudentConfig(
        word_emb_dim=5, char_emb_dim=3, char_hidden=2, word_hidden=4,
        epochs=1, patience=1, seed=2,
    )
    student = StudentModel(["aa", "bo", "ci", "dd"], list("abocid"), tag_set, scfg)
    student_params = dict(student.params.items())
    words = ["aa", "bo", "ci", "dd", "zz"]
    for rep in range(3):
        length = int(rng.integers(1, 4))
        tokens = tuple(str(rng.choice(words)) for _ in range(length))
        hard = rng.integers(0, tag_set.size, size=length)
        soft = rng.random((length, tag_set.size))
        soft /= soft.sum(axis=1, keepdims=True)
        items = [(tokens, hard, None), (tokens, hard, soft)]
        errors = check_gradients(
            lambda: _batch_loss(student, items, DistillConfig(lambda_kl=1.0, tau=3.0),
                                tag_set.size),
            student_params, epsilon=1e-5, rtol=1e-4,
        )
        assert set(errors) == set(student.params.names())
        n_checked += 1
    elapsed = time.time() - start
    assert elapsed < budget
    n_tensors = len(teacher_params) + len(student_params)
    report(4, f"{n_tensors} parameter tensors passed central differences on "
              f"{n_checked} mini-inputs (rel err <= 1e-4, {elapsed:.1f}s < {budget:.0f}s)")


# -- 5: loss algebra -----------------------------------------------------------

def test_criterion_5_loss_algebra():
    tau = 10.0
    tag_set = TagSet([])
    example = SilverExample(
        id="fx", tokens=("w",), pseudo_tags=(tag_set.full[0],),
        score_rows=np.array([[tau * math.log(0.8), tau * math.log(0.2)]]),
        tag_order=tag_set.full,
    )
    output = StudentOutput(np.array([[math.log(0.6), math.log(0.4)]]))
    loss = distill_loss(example, output, DistillConfig(lambda_kl=1.0, tau=tau), tag_set)
    want = -math.log(0.6) + 0.8 * math.log(0.8 / 0.6) + 0.2 * math.log(0.2 / 0.4)
    assert abs(loss - 0.6023) <= 1e-4 and abs(loss - want) < 1e-12

    # lambda = 0 reduces exactly to the pseudo-label cross-entropy
    rng = np.random.default_rng(0)
    for _ in range(20):
        logits = rng.normal(size=(3, 2))
        rows = rng.normal(size=(3, 2))
        hard = rows.argmax(axis=1)
        ex = SilverExample(
            id="r", tokens=("a", "b", "c"),
            pseudo_tags=tuple(tag_set.full[i] for i in hard),
            score_rows=rows, tag_order=tag_set.full,
        )
        out = StudentOutput(logits)
        l0 = distill_loss(ex, out, DistillConfig(lambda_kl=0.0, tau=tau), tag_set)
        log_q = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        pure_ce = float(-log_q[np.arange(3), hard].sum())
        assert abs(l0 - pure_ce) < 1e-12

        # KL(p||p) = 0
        p = np.exp(rows[0] - rows[0].max())
        p /= p.sum()
        assert abs(kl_divergence(p, p)) < 1e-12
        assert cross_entropy([1.0, 0.0], [1.0, 0.0]) == 0.0

        # constant row shifts leave the loss unchanged
        shifted = SilverExample(
            id="s", tokens=ex.tokens, pseudo_tags=ex.pseudo_tags,
            score_rows=rows + 321.0, tag_order=tag_set.full,
        )
        l1a = distill_loss(ex, out, DistillConfig(lambda_kl=1.0, tau=tau), tag_set)
        l1b = distill_loss(shifted, out, DistillConfig(lambda_kl=1.0, tau=tau), tag_set)
        assert abs(l1a - l1b) < 1e-9
    report(5, "numeric fixture 0.6023 reproduced; lambda=0 equals pure CE to 1e-12; "
              "KL(p||p)=0; loss invariant to row shifts to 1e-9")


# -- 6: metric oracle ----------------------------------------------------------

def brute_force_counts(gold, pred):
    tp = fp = fn = 0
    for sid in gold:
        left = [(s.label, s.start, s.end) for s in gold[sid]]
        for span in pred[sid]:
            triple = (span.label, span.start, span.end)
            if triple in left:
                left.remove(triple)
                tp += 1
            else:
                fp += 1
        fn += len(left)
    return tp, fp, fn


def test_criterion_6_metric_oracle():
    from seqlab.formats import Span, sbio_to_spans

    gold = {"s": [Span("TRACK", 1, 1), Span("ARTIST", 3, 4)]}
    pred = {"s": [Span("TRACK", 1, 1), Span("ARTIST", 3, 3)]}
    rep = micro_f1(gold, pred)
    assert (rep.true_positives, rep.false_positives, rep.false_negatives) == (1, 1, 1)
    assert rep.f1 == pytest.approx(0.5)

    rng = np.random.default_rng(99)
    tag_set = TagSet(["A", "B", "C"])

    def random_tags(length):
        tags = []
        for _ in range(length):
            mask = valid_next_tags(tags, tag_set)
            allowed = [t for t, ok in zip(tag_set.full, mask) if ok]
            tags.append(allowed[rng.integers(len(allowed))])
        return tags

    for _ in range(200):
        gold, pred = {}, {}
        for i in range(int(rng.integers(1, 9))):
            length = int(rng.integers(1, 11))
            gold[str(i)] = sbio_to_spans(random_tags(length))
            pred[str(i)] = sbio_to_spans(random_tags(length))
        rep = micro_f1(gold, pred)
        assert (rep.true_positives, rep.false_positives, rep.false_negatives) == (
            brute_force_counts(gold, pred)
        )
    report(6, "exact count agreement with the brute-force matcher on 200 random "
              "corpora; hand fixture TP=FP=FN=1 -> F1=0.5")


# -- 7: format fidelity --------------------------------------------------------

def test_criterion_7_format_fidelity():
    tokens = ["play", "wow", "by", "jon", "theodore"]
    tags = ["O", "TRACK", "O", "ARTIST", "I"]
    tag_set = TagSet(["TRACK", "ARTIST"])
    want_in = ("<extra_id_0> play <extra_id_1> wow <extra_id_2> by "
               "<extra_id_3> jon <extra_id_4> theodore <extra_id_5>")
    want_out = ("<extra_id_0> O <extra_id_1> TRACK <extra_id_2> O "
                "<extra_id_3> ARTIST <extra_id_4> I <extra_id_5>")
    assert encode_input(tokens, variant="closed") == want_in
    assert encode_target(tags) == want_out
    assert parse_output(want_out, 5, tag_set) == tags
    report(7, "reference strings reproduced byte-exactly and inverted by the parser")


# -- 8 and 9: the end-to-end grid ------------------------------------------------


@pytest.fixture(scope="module")
def grid_run(tmp_path_factory):
    with open(CONFIG_PATH, encoding="utf-8") as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    out = str(tmp_path_factory.mktemp("grid"))
    start = time.time()
    records = run_experiment(config, out)
    elapsed = time.time() - start
    return config, out, records, elapsed


def test_criterion_8_distillation_effect(grid_run):
    budget = 15 * 60.0
    config, _, records, elapsed = grid_run
    by_cell = {(r.silver_size, r.lambda_kl): r for r in records}
    gold_only = by_cell[(0, 0.0)]
    l0 = by_cell[(500, 0.0)]
    l1 = by_cell[(500, 1.0)]
    for rec in (gold_only, l0, l1):
        assert len(rec.per_seed) == 5
    kd_gap = l1.mean_f1 - l0.mean_f1
    assert kd_gap >= -0.005, f"KD regression: gap {kd_gap:.4f}"
    assert l0.mean_f1 >= gold_only.mean_f1 + 0.02
    assert l1.mean_f1 >= gold_only.mean_f1 + 0.02
    assert elapsed < budget
    report(8, f"gold-only {gold_only.mean_f1:.4f}, pseudo-labels {l0.mean_f1:.4f}, "
              f"KD {l1.mean_f1:.4f}; signed KD gap {kd_gap:+.4f}; "
              f"both distilled cells beat gold-only by >= 0.02 "
              f"({elapsed/60:.1f}min < {budget/60:.0f}min)")


def test_criterion_9_bitwise_determinism(grid_run, tmp_path_factory):
    config, out1, _, _ = grid_run
    out2 = str(tmp_path_factory.mktemp("grid_again"))
    run_experiment(config, out2)
    names = sorted(os.listdir(os.path.join(out1, "runs")))
    assert names == sorted(os.listdir(os.path.join(out2, "runs")))
    compared = 0
    for name in names:
        with open(os.path.join(out1, "runs", name), "rb") as fh:
            a = fh.read()
        with open(os.path.join(out2, "runs", name), "rb") as fh:
            b = fh.read()
        assert a == b, f"RunRecord {name} differs between identical runs"
        compared += 1
    report(9, f"{compared} RunRecords byte-identical across an independent rerun")


# -- 10: dataset handling --------------------------------------------------------

def test_criterion_10_dataset_properties():
    rng = np.random.default_rng(17)
    # downsample partitions
    for trial in range(20):
        size = int(rng.integers(1, 60))
        n = int(rng.integers(0, size + 1))
        sents = tuple(
            Sentence(id=f"s:{i}", tokens=(f"w{i}",), gold_tags=("O",))
            for i in range(size)
        )
        split = DatasetSplit("train", sents)
        gold, rest = downsample(split, n, seed=int(rng.integers(1 << 30)))
        assert len(gold) == n and len(rest) == size - n
        gold_ids = {s.id for s in gold}
        rest_ids = {s.id for s in rest}
        assert not gold_ids & rest_ids
        assert gold_ids | rest_ids == {s.id for s in split}

    # dedup idempotence on corpora with injected duplicates
    for trial in range(20):
        def sent(prefix, i, word):
            return Sentence(id=f"{prefix}:{i}", tokens=(word,), gold_tags=("O",))

        words = [f"w{rng.integers(6)}" for _ in range(18)]
        ds = make_dataset(
            DatasetSplit("train", tuple(sent("tr", i, w) for i, w in enumerate(words[:8]))),
            DatasetSplit("dev", tuple(sent("d", i, w) for i, w in enumerate(words[8:13]))),
            DatasetSplit("test", tuple(sent("te", i, w) for i, w in enumerate(words[13:]))),
        )
        once = dedup(ds)
        twice = dedup(once)
        for a, b in zip(once.splits(), twice.splits()):
            assert a.sentences == b.sentences
        keys = [s.key() for split in once.splits() for s in split]
        assert len(keys) == len(set(keys))

    data_dir = os.environ.get("SEQLAB_DATA_DIR")
    stats_note = "published-corpus stats skipped (SEQLAB_DATA_DIR unset)"
    if data_dir:
        table = {
            "atis": {"train": 4478, "dev": 500, "test": 893, "tags": 83},
            "snips": {"train": 13084, "dev": 700, "test": 700, "tags": 39},
        }
        checked = []
        for name, want in table.items():
            root = os.path.join(data_dir, name)
            if not os.path.isdir(root):
                continue
            got = stats(make_dataset(
                load_conll(os.path.join(root, "train.conll"), "train"),
                load_conll(os.path.join(root, "dev.conll"), "dev"),
                load_conll(os.path.join(root, "test.conll"), "test"),
            ))
            assert got == want, f"{name}: {got} != {want}"
            checked.append(name)
        stats_note = f"published-corpus stats exact for {checked}" if checked else stats_note
    report(10, f"downsample partitions and dedup idempotence hold; {stats_note}")
