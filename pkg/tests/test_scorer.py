import json
import socket

import numpy as np
import pytest

from seqlab.corpus import generate_synthetic
from seqlab.errors import ConfigError, ProtocolError, TransportError
from seqlab.formats import TagSet, encode_target, make_pair
from seqlab.scorer import ExternalScorer, TableScorer, loopback_scorer, serve_tcp
from seqlab.teacher import (
    BOS,
    UNK,
    TeacherTrainConfig,
    ToyTeacher,
    build_teacher,
    train_teacher,
)

SMALL = TeacherTrainConfig(
    epochs=4, patience=4, embedding_dim=12, encoder_hidden=10, decoder_hidden=10,
    batch_size=8, seed=3, unk_dropout=0.0, n_sentinels=16,
)


def tiny_teacher(seed=3):
    ds = generate_synthetic(1, (12, 4, 4), 2, lexicon_size=8)
    pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
    cfg = TeacherTrainConfig(**{**SMALL.__dict__, "seed": seed})
    return build_teacher(pairs, ds.tag_set, cfg), ds, pairs


class TestTableScorer:
    def test_lookup(self):
        s = TableScorer({("in", "cand"): -1.5})
        assert s.score("in", "cand") == -1.5

    def test_miss_returns_default(self):
        s = TableScorer(default_score=-7.0)
        assert s.score("anything", "else") == -7.0

    def test_batch_equals_map(self):
        s = TableScorer({("i", "a"): -1.0, ("i", "b"): -2.0})
        cands = ["a", "b", "zzz"]
        assert s.score_batch("i", cands) == [s.score("i", c) for c in cands]


class TestWireProtocol:
    def test_two_candidates_two_scores(self):
        client = loopback_scorer(TableScorer({("x", "a"): -1.0, ("x", "b"): -2.5}))
        with client:
            assert client.score_batch("x", ["a", "b"]) == [-1.0, -2.5]

    def test_loopback_equivalence(self):
        rng = np.random.default_rng(0)
        table = TableScorer(
            {("inp", f"c{i}"): float(rng.normal()) for i in range(30)},
            default_score=-9.0,
        )
        with loopback_scorer(table) as client:
            for i in range(30):
                assert client.score("inp", f"c{i}") == table.score("inp", f"c{i}")
            batch = [f"c{i}" for i in range(10)] + ["miss"]
            assert client.score_batch("inp", batch) == table.score_batch("inp", batch)

    def test_wrong_length_response(self):
        a, b = socket.socketpair()

        def bad_peer():
            with b, b.makefile("rb") as r, b.makefile("wb") as w:
                req = json.loads(r.readline())
                w.write(json.dumps({"id": req["id"], "scores": [1.0]}).encode())
                w.write(b"\n")
                w.flush()

        import threading

        threading.Thread(target=bad_peer, daemon=True).start()
        reader, writer = a.makefile("rb"), a.makefile("wb")
        client = ExternalScorer(reader, writer, owns=(reader, writer, a))
        with client, pytest.raises(ProtocolError):
            client.score_batch("x", ["one", "two"])

    def test_malformed_json_response(self):
        a, b = socket.socketpair()

        def bad_peer():
            with b, b.makefile("rb") as r, b.makefile("wb") as w:
                r.readline()
                w.write(b"this is not json\n")
                w.flush()

        import threading

        threading.Thread(target=bad_peer, daemon=True).start()
        reader, writer = a.makefile("rb"), a.makefile("wb")
        client = ExternalScorer(reader, writer, owns=(reader, writer, a))
        with client, pytest.raises(ProtocolError):
            client.score("x", "y")

    def test_closed_connection(self):
        a, b = socket.socketpair()
        b.close()
        reader, writer = a.makefile("rb"), a.makefile("wb")
        client = ExternalScorer(reader, writer, owns=(reader, writer, a))
        with client, pytest.raises(TransportError):
            client.score("x", "y")

    def test_tcp_round_trip(self):
        port, stop = serve_tcp(TableScorer({("i", "c"): -3.0}))
        try:
            with ExternalScorer.connect("127.0.0.1", port) as client:
                assert client.score("i", "c") == -3.0
        finally:
            stop()


class TestToyTeacher:
    def test_vocab_contains_markers(self):
        teacher, ds, _ = tiny_teacher()
        assert BOS in teacher.vocab_index and UNK in teacher.vocab_index
        for tag in ds.tag_set.full:
            assert tag in teacher.vocab_index

    def test_normalization(self):
        teacher, ds, _ = tiny_teacher()
        s_in = make_pair(ds.train.sentences[0].tokens, ds.train.sentences[0].gold_tags).input
        for prefix in ([], ["<extra_id_0>"], ["<extra_id_0>", "O"]):
            logp = teacher.next_token_logprobs(s_in, prefix)
            assert abs(np.exp(logp).sum() - 1.0) < 1e-9

    def test_score_is_sum_of_stepwise(self):
        teacher, ds, _ = tiny_teacher()
        sent = ds.train.sentences[0]
        pair = make_pair(sent.tokens, sent.gold_tags)
        tokens = pair.target.split()[:4]
        candidate = " ".join(tokens)
        total = 0.0
        for j, tok in enumerate(tokens):
            logp = teacher.next_token_logprobs(pair.input, tokens[:j])
            total += float(logp[teacher.token_id(tok)])
        assert teacher.score(pair.input, candidate) == pytest.approx(total, abs=1e-12)

    def test_prefix_monotonicity(self):
        teacher, ds, _ = tiny_teacher()
        sent = ds.train.sentences[1]
        pair = make_pair(sent.tokens, sent.gold_tags)
        pieces = pair.target.split()
        scores = [
            teacher.score(pair.input, " ".join(pieces[: j + 1]))
            for j in range(len(pieces))
        ]
        assert all(b <= a + 1e-12 for a, b in zip(scores, scores[1:]))

    def test_cache_replay_is_bitwise(self):
        teacher, ds, _ = tiny_teacher()
        sent = ds.train.sentences[2]
        pair = make_pair(sent.tokens, sent.gold_tags)
        warm = teacher.score(pair.input, pair.target)
        again = teacher.score(pair.input, pair.target)
        teacher.clear_cache()
        cold = teacher.score(pair.input, pair.target)
        assert warm == again == cold

    def test_score_batch_equals_map(self):
        teacher, ds, _ = tiny_teacher()
        sent = ds.train.sentences[0]
        pair = make_pair(sent.tokens, sent.gold_tags)
        pieces = pair.target.split()
        cands = [" ".join(pieces[: j + 1]) for j in range(len(pieces))]
        teacher.clear_cache()
        batched = teacher.score_batch(pair.input, cands)
        teacher.clear_cache()
        single = [teacher.score(pair.input, c) for c in cands]
        assert batched == single

    def test_same_seed_identical_params(self):
        a, _, _ = tiny_teacher(seed=9)
        b, _, _ = tiny_teacher(seed=9)
        for name in a.params.names():
            assert (a.params[name].data == b.params[name].data).all()

    def test_unknown_words_fall_back(self):
        teacher, ds, _ = tiny_teacher()
        assert teacher.token_id("zzzneverseen") == teacher.unk_id


class TestTrainTeacher:
    def test_empty_training_set_rejected(self):
        ds = generate_synthetic(1, (4, 2, 2), 2)
        with pytest.raises(ConfigError):
            train_teacher([], [], ds.tag_set, SMALL)

    def test_loss_drops_after_first_epoch(self):
        ds = generate_synthetic(5, (24, 6, 6), 2, lexicon_size=8)
        train = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
        dev = [make_pair(s.tokens, s.gold_tags) for s in ds.dev]
        cfg = TeacherTrainConfig(**{**SMALL.__dict__, "epochs": 2})
        _, report = train_teacher(train, dev, ds.tag_set, cfg)
        assert report.epoch_losses[0] < report.initial_loss

    def test_overfit_single_sentence(self):
        ds = generate_synthetic(8, (1, 1, 1), 2, lexicon_size=4)
        sent = ds.train.sentences[0]
        pair = make_pair(sent.tokens, sent.gold_tags)
        cfg = TeacherTrainConfig(
            epochs=60, patience=60, embedding_dim=12, encoder_hidden=10,
            decoder_hidden=10, batch_size=1, seed=0, unk_dropout=0.0,
            n_sentinels=16, learning_rate=5e-3, weight_decay=0.0,
        )
        teacher, _ = train_teacher([pair], [pair], ds.tag_set, cfg)
        gold_score = teacher.score(pair.input, pair.target)
        rng = np.random.default_rng(0)
        length = len(sent.tokens)
        for _ in range(20):
            tags = []
            for i in range(length):
                choices = [t for t in ds.tag_set.full
                           if not (t == "I" and (not tags or tags[-1] == "O"))]
                tags.append(choices[rng.integers(len(choices))])
            if tuple(tags) == sent.gold_tags:
                continue
            assert teacher.score(pair.input, encode_target(tags)) < gold_score

    def test_determinism_same_seed(self):
        ds = generate_synthetic(5, (16, 4, 4), 2, lexicon_size=8)
        train = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
        dev = [make_pair(s.tokens, s.gold_tags) for s in ds.dev]
        cfg = TeacherTrainConfig(**{**SMALL.__dict__, "epochs": 3, "unk_dropout": 0.1})
        t1, r1 = train_teacher(train, dev, ds.tag_set, cfg)
        t2, r2 = train_teacher(train, dev, ds.tag_set, cfg)
        assert r1.epoch_losses == r2.epoch_losses
        assert r1.dev_f1 == r2.dev_f1
        for name in t1.params.names():
            assert (t1.params[name].data == t2.params[name].data).all()

    def test_save_load_round_trip(self, tmp_path):
        teacher, ds, pairs = tiny_teacher()
        prefix = str(tmp_path / "teacher")
        teacher.save(prefix)
        back = ToyTeacher.load(prefix)
        pair = pairs[0]
        assert back.score(pair.input, pair.target) == teacher.score(
            pair.input, pair.target
        )
        assert back.labels == list(ds.tag_set.labels)
