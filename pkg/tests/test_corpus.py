import os
from collections import Counter

import pytest

from seqlab.corpus import (
    Dataset,
    DatasetSplit,
    Sentence,
    dedup,
    downsample,
    generate_synthetic,
    load_conll,
    make_dataset,
    save_conll,
    stats,
)
from seqlab.errors import ConllParseError, SizeError, ValidationError
from seqlab.formats import TagSet, validate_sbio


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConll:
    def test_two_sentences(self, tmp_path):
        path = write(tmp_path, "train.conll", "a\tO\nb\tO\n\nc\tX\nd\tI\n")
        split = load_conll(path)
        assert split.name == "train"
        assert len(split) == 2
        assert split.sentences[0].id == "train.conll:0"
        assert split.sentences[1].gold_tags == ("X", "I")

    def test_bio_autodetected(self, tmp_path):
        path = write(tmp_path, "dev.txt", "a\tB-X\nb\tI-X\nc\tO\n")
        split = load_conll(path)
        assert split.name == "dev"
        assert split.sentences[0].gold_tags == ("X", "I", "O")

    def test_space_separated(self, tmp_path):
        path = write(tmp_path, "t.conll", "a O\nb O\n")
        assert load_conll(path, "test").sentences[0].tokens == ("a", "b")

    def test_malformed_line(self, tmp_path):
        path = write(tmp_path, "bad.conll", "a\tO\nb\n")
        with pytest.raises(ConllParseError) as err:
            load_conll(path)
        assert err.value.line == 2

    def test_ragged_bio_names_sentence(self, tmp_path):
        path = write(tmp_path, "bad.conll", "wow\tB-TRACK\ntheodore\tI-ARTIST\n")
        with pytest.raises(ValidationError) as err:
            load_conll(path)
        assert "bad.conll:0" in str(err.value)

    def test_save_load_identity(self, tmp_path):
        dataset = generate_synthetic(3, (20, 5, 5), 3)
        path = tmp_path / "round.conll"
        save_conll(dataset.train, path)
        back = load_conll(path, "train")
        assert [s.tokens for s in back] == [s.tokens for s in dataset.train]
        assert [s.gold_tags for s in back] == [s.gold_tags for s in dataset.train]


class TestDownsample:
    @pytest.fixture
    def split(self):
        sents = tuple(
            Sentence(id=f"s:{i}", tokens=(f"w{i}",), gold_tags=("O",)) for i in range(40)
        )
        return DatasetSplit("train", sents)

    def test_sizes(self, split):
        gold, rest = downsample(split, 15, seed=5)
        assert len(gold) == 15 and len(rest) == 25

    def test_table_sized_counts(self):
        sents = tuple(
            Sentence(id=f"s:{i}", tokens=("w",), gold_tags=("O",)) for i in range(4478)
        )
        gold, rest = downsample(DatasetSplit("train", sents), 100, seed=1)
        assert (len(gold), len(rest)) == (100, 4378)

    def test_partition_property(self, split):
        gold, rest = downsample(split, 17, seed=9)
        combined = Counter(s.id for s in gold) + Counter(s.id for s in rest)
        assert combined == Counter(s.id for s in split)
        assert not set(s.id for s in gold) & set(s.id for s in rest)

    def test_full_take_is_identity(self, split):
        gold, rest = downsample(split, len(split), seed=0)
        assert gold.sentences == split.sentences
        assert len(rest) == 0

    def test_deterministic(self, split):
        a, _ = downsample(split, 10, seed=42)
        b, _ = downsample(split, 10, seed=42)
        assert [s.id for s in a] == [s.id for s in b]

    def test_oversample_rejected(self, split):
        with pytest.raises(SizeError):
            downsample(split, 41, seed=0)

    def test_original_order_preserved(self, split):
        gold, rest = downsample(split, 20, seed=3)
        ids = [s.id for s in split]
        assert [s.id for s in gold] == [i for i in ids if i in {s.id for s in gold}]
        assert [s.id for s in rest] == [i for i in ids if i in {s.id for s in rest}]


def sent(sid, tokens, tags):
    return Sentence(id=sid, tokens=tuple(tokens), gold_tags=tuple(tags))


def tiny_dataset(train, dev, test):
    return make_dataset(
        DatasetSplit("train", tuple(train)),
        DatasetSplit("dev", tuple(dev)),
        DatasetSplit("test", tuple(test)),
    )


class TestDedup:
    def test_cross_split_priority(self):
        dup_train = sent("tr:0", ["hello"], ["O"])
        dup_test = sent("te:0", ["hello"], ["O"])
        other = sent("tr:1", ["bye"], ["O"])
        ds = tiny_dataset([dup_train, other], [], [dup_test])
        out = dedup(ds)
        assert [s.id for s in out.train] == ["tr:1"]
        assert [s.id for s in out.test] == ["te:0"]

    def test_train_priority_order(self):
        dup_train = sent("tr:0", ["hello"], ["O"])
        dup_test = sent("te:0", ["hello"], ["O"])
        ds = tiny_dataset([dup_train], [], [dup_test])
        out = dedup(ds, priority=("train", "dev", "test"))
        assert [s.id for s in out.train] == ["tr:0"]
        assert len(out.test) == 0

    def test_no_duplicates_unchanged(self):
        ds = tiny_dataset(
            [sent("tr:0", ["a"], ["O"])], [sent("d:0", ["b"], ["O"])],
            [sent("te:0", ["c"], ["O"])],
        )
        out = dedup(ds)
        assert out.train.sentences == ds.train.sentences
        assert out.dev.sentences == ds.dev.sentences
        assert out.test.sentences == ds.test.sentences

    def test_within_split_collapse(self):
        ds = tiny_dataset(
            [sent("tr:0", ["x"], ["O"]), sent("tr:1", ["x"], ["O"])], [], []
        )
        out = dedup(ds)
        assert [s.id for s in out.train] == ["tr:0"]

    def test_label_conflicts_not_merged(self):
        ds = tiny_dataset(
            [sent("tr:0", ["x"], ["O"]), sent("tr:1", ["x"], ["A"])], [], []
        )
        out = dedup(ds)
        assert len(out.train) == 2

    def test_idempotent(self):
        ds = tiny_dataset(
            [sent("tr:0", ["x"], ["O"]), sent("tr:1", ["x"], ["O"]),
             sent("tr:2", ["y"], ["O"])],
            [sent("d:0", ["x"], ["O"])],
            [sent("te:0", ["y"], ["O"])],
        )
        once = dedup(ds)
        twice = dedup(once)
        for a, b in zip(once.splits(), twice.splits()):
            assert a.sentences == b.sentences

    def test_test_split_preserved_modulo_internal_dups(self):
        ds = tiny_dataset(
            [sent("tr:0", ["x"], ["O"])],
            [],
            [sent("te:0", ["x"], ["O"]), sent("te:1", ["x"], ["O"]),
             sent("te:2", ["z"], ["O"])],
        )
        out = dedup(ds)
        assert [s.id for s in out.test] == ["te:0", "te:2"]
        assert len(out.train) == 0

    def test_bad_priority(self):
        ds = tiny_dataset([], [], [])
        with pytest.raises(ValidationError):
            dedup(ds, priority=("test", "test", "train"))


class TestStats:
    def test_empty(self):
        ds = tiny_dataset([], [], [])
        assert stats(ds) == {"train": 0, "dev": 0, "test": 0, "tags": 0}

    def test_synthetic_counts(self):
        ds = generate_synthetic(1, (200, 50, 50), 3)
        s = stats(ds)
        assert (s["train"], s["dev"], s["test"]) == (200, 50, 50)
        assert s["tags"] == 3
        assert ds.tag_set.size == 5


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(11, (50, 10, 10), 4)
        b = generate_synthetic(11, (50, 10, 10), 4)
        for sa, sb in zip(a.train, b.train):
            assert sa.tokens == sb.tokens and sa.gold_tags == sb.gold_tags

    def test_different_seeds_differ(self):
        a = generate_synthetic(11, (50, 10, 10), 4)
        b = generate_synthetic(12, (50, 10, 10), 4)
        assert [s.tokens for s in a.train] != [s.tokens for s in b.train]

    def test_every_sentence_valid(self):
        ds = generate_synthetic(5, (300, 50, 50), 4)
        for split in ds.splits():
            for s in split:
                validate_sbio(s.gold_tags, ds.tag_set)
                assert len(s.gold_tags) == len(s.tokens)

    def test_tag_count_one(self):
        ds = generate_synthetic(2, (20, 5, 5), 1)
        assert ds.tag_set.labels == ("TRACK",)


DATA_DIR = os.environ.get("SEQLAB_DATA_DIR")

TABLE_COUNTS = {
    "atis": {"train": 4478, "dev": 500, "test": 893, "tags": 83},
    "snips": {"train": 13084, "dev": 700, "test": 700, "tags": 39},
    "movietrivia": {"train": 7005, "dev": 811, "test": 1953, "tags": 12},
    "movie": {"train": 8722, "dev": 1053, "test": 2443, "tags": 12},
    "restaurant": {"train": 6845, "dev": 815, "test": 1521, "tags": 8},
    "mtop": {"train": 15667, "dev": 2235, "test": 4386, "tags": 75},
    "mtod": {"train": 30521, "dev": 4181, "test": 8621, "tags": 16},
}


@pytest.mark.skipif(
    DATA_DIR is None, reason="set SEQLAB_DATA_DIR to check published corpus counts"
)
@pytest.mark.parametrize("name", sorted(TABLE_COUNTS))
def test_published_dataset_stats(name):
    root = os.path.join(DATA_DIR, name)
    if not os.path.isdir(root):
        pytest.skip(f"{name} not provided under {DATA_DIR}")
    ds = make_dataset(
        load_conll(os.path.join(root, "train.conll"), "train"),
        load_conll(os.path.join(root, "dev.conll"), "dev"),
        load_conll(os.path.join(root, "test.conll"), "test"),
    )
    assert stats(ds) == TABLE_COUNTS[name]
