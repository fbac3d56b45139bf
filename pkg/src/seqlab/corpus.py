"""Dataset loading, splitting, deduplication, and synthetic corpus generation.

CoNLL files are UTF-8, one ``token<TAB or spaces>tag`` per line, a blank
line between sentences.  Tags may be standard BIO (auto-detected via B-/I-
prefixes and converted) or already in the simplified scheme.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConllParseError, SizeError, ValidationError
from .formats import INSIDE, OUTSIDE, TagSet, bio_to_sbio, validate_sbio

_WS = re.compile(r"\s")

SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class Sentence:
    """Whitespace-pretokenized sentence with optional gold tags."""

    id: str
    tokens: tuple[str, ...]
    gold_tags: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValidationError(f"sentence {self.id!r} has no tokens")
        for tok in self.tokens:
            if not tok or _WS.search(tok):
                raise ValidationError(
                    f"sentence {self.id!r}: token {tok!r} is empty or has whitespace"
                )
        if self.gold_tags is not None:
            if len(self.gold_tags) != len(self.tokens):
                raise ValidationError(
                    f"sentence {self.id!r}: {len(self.gold_tags)} tags for "
                    f"{len(self.tokens)} tokens"
                )
            try:
                validate_sbio(self.gold_tags)
            except ValidationError as exc:
                raise ValidationError(f"sentence {self.id!r}: {exc}") from exc

    def key(self) -> tuple:
        """Duplicate key: exact (tokens, gold_tags) pair."""
        return (self.tokens, self.gold_tags)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValidationError(f"split name must be one of {SPLIT_NAMES}")
        ids = [s.id for s in self.sentences]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate sentence ids in split {self.name!r}")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass(frozen=True)
class Dataset:
    train: DatasetSplit
    dev: DatasetSplit
    test: DatasetSplit
    tag_set: TagSet

    def splits(self) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
        return (self.train, self.dev, self.test)

    def split(self, name: str) -> DatasetSplit:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]


@dataclass(frozen=True)
class SplitSpec:
    """Gold train/dev sizes for few-shot runs; the train remainder is the
    pool silver examples are drawn from."""

    gold_train_size: int
    gold_dev_size: int
    seed: int


def derive_tag_set(splits: Iterable[DatasetSplit]) -> TagSet:
    """Collect span labels from gold tags in first-occurrence order."""
    labels: dict[str, None] = {}
    for split in splits:
        for sent in split:
            if sent.gold_tags is None:
                continue
            for tag in sent.gold_tags:
                if tag not in (INSIDE, OUTSIDE):
                    labels.setdefault(tag, None)
    return TagSet(labels)


def make_dataset(train: DatasetSplit, dev: DatasetSplit, test: DatasetSplit) -> Dataset:
    return Dataset(train, dev, test, derive_tag_set((train, dev, test)))


def _looks_like_bio(tags: Sequence[str]) -> bool:
    return any(t.startswith(("B-", "I-")) for t in tags)


def load_conll(path: str | os.PathLike, name: str | None = None) -> DatasetSplit:
    """Read one CoNLL split; sentence ids are ``<filename>:<index>``.

    BIO files are detected by the presence of B-/I- prefixes and converted;
    ragged BIO (I-X not continuing B-X/I-X) raises naming the sentence.
    """
    path = os.fspath(path)
    fname = os.path.basename(path)
    if name is None:
        lowered = fname.lower()
        name = next((n for n in SPLIT_NAMES if n in lowered), "train")

    raw: list[tuple[list[str], list[str], int]] = []
    tokens: list[str] = []
    tags: list[str] = []
    start_line = 1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if tokens:
                    raw.append((tokens, tags, start_line))
                    tokens, tags = [], []
                start_line = lineno + 1
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ConllParseError(
                    f"expected 'token tag', got {len(fields)} fields",
                    path=fname,
                    line=lineno,
                )
            tokens.append(fields[0])
            tags.append(fields[1])
    if tokens:
        raw.append((tokens, tags, start_line))

    file_is_bio = any(_looks_like_bio(t) for _, t, _ in raw)
    sentences: list[Sentence] = []
    for index, (toks, tgs, line) in enumerate(raw):
        sid = f"{fname}:{index}"
        if file_is_bio:
            try:
                tgs = bio_to_sbio(tgs)
            except ValidationError as exc:
                raise ValidationError(f"sentence {sid} (line {line}): {exc}") from exc
        sentences.append(Sentence(id=sid, tokens=tuple(toks), gold_tags=tuple(tgs)))
    return DatasetSplit(name=name, sentences=tuple(sentences))


def save_conll(split: DatasetSplit, path: str | os.PathLike) -> None:
    """Write ``token<TAB>tag`` lines, one blank line between sentences."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, sent in enumerate(split):
            if i:
                fh.write("\n")
            assert sent.gold_tags is not None, "cannot save an untagged sentence"
            for tok, tag in zip(sent.tokens, sent.gold_tags):
                fh.write(f"{tok}\t{tag}\n")


def downsample(
    split: DatasetSplit, n: int, seed: int
) -> tuple[DatasetSplit, DatasetSplit]:
    """Sample n sentences uniformly without replacement; return (gold, rest).

    Ids are sorted before seeding so the draw does not depend on file
    ordering; both outputs preserve the split's original sentence order.
    """
    if n > len(split):
        raise SizeError(f"cannot sample {n} of {len(split)} sentences")
    rng = np.random.default_rng(seed)
    ids = sorted(s.id for s in split)
    chosen = set(rng.choice(np.array(ids, dtype=object), size=n, replace=False))
    gold = tuple(s for s in split if s.id in chosen)
    rest = tuple(s for s in split if s.id not in chosen)
    return (
        DatasetSplit(split.name, gold),
        DatasetSplit(split.name, rest),
    )


def dedup(dataset: Dataset, priority: Sequence[str] = ("test", "dev", "train")) -> Dataset:
    """Collapse duplicate sentences, keeping the highest-priority copy.

    ``priority`` lists split names from highest to lowest retention
    priority.  Sentences are keyed by the exact (tokens, gold_tags) pair;
    same tokens with different tags are distinct.  Within a split the first
    occurrence wins.
    """
    if sorted(priority) != sorted(SPLIT_NAMES):
        raise ValidationError(f"priority must permute {SPLIT_NAMES}, got {priority}")
    owner: dict[tuple, str] = {}
    for name in priority:
        for sent in dataset.split(name):
            owner.setdefault(sent.key(), name)
    new_splits = {}
    for name in SPLIT_NAMES:
        kept, seen = [], set()
        for sent in dataset.split(name):
            k = sent.key()
            if owner[k] != name or k in seen:
                continue
            seen.add(k)
            kept.append(sent)
        new_splits[name] = DatasetSplit(name, tuple(kept))
    return replace(
        dataset, train=new_splits["train"], dev=new_splits["dev"], test=new_splits["test"]
    )


def stats(dataset: Dataset) -> dict[str, int]:
    """Split sizes and the number of distinct span labels."""
    return {
        "train": len(dataset.train),
        "dev": len(dataset.dev),
        "test": len(dataset.test),
        "tags": dataset.tag_set.n_labels,
    }


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_ONSETS = "b d f g k l m n p r s t v z br dr gr kl pl st tr".split()
_VOWELS = "a e i o u".split()
_CODAS = ["", "", "", "n", "r", "s", "l"]

_LABEL_POOL = [
    "TRACK", "ARTIST", "ALBUM", "PLAYLIST", "GENRE", "SERVICE", "CITY",
    "VENUE", "DATE", "DISH", "TEAM", "DEVICE",
]

# Carrier templates: literal words plus slots.  "<1>" draws from label 1's
# lexicon; "<0|2>" picks one of the listed labels uniformly, so the slot's
# label is decided by lexicon membership alone, not by context.  Indices
# fold modulo the configured label count.  The mix matters: unambiguous
# templates let a model label unseen fillers from context; the ambiguous
# minority is only solvable with lexical knowledge, which is what
# teacher-annotated data spreads to the student.
_CONTEXT_TEMPLATES = [
    ("turn", "up", "<0>", "by", "<1>"),
    ("i", "want", "to", "hear", "<0>"),
    ("show", "songs", "by", "<1>"),
    ("follow", "<1>"),
    ("open", "the", "album", "<2>"),
    ("rate", "the", "album", "<2>", "five", "stars"),
    ("start", "my", "<3>", "mix"),
    ("shuffle", "the", "<3>", "playlist"),
    ("stream", "<4>", "radio"),
    ("tune", "to", "<5>"),
]
_LEXICAL_TEMPLATES = [
    ("play", "<0|2|3>"),
    ("play", "<0|2>", "by", "<1>"),
    ("queue", "<0|2>"),
    ("put", "on", "<1|3>"),
    ("add", "<0|2>", "to", "my", "<3>", "list"),
    ("skip", "this", "<0|2>"),
]
_TEMPLATES = _CONTEXT_TEMPLATES * 2 + _LEXICAL_TEMPLATES


def _pseudo_word(rng: np.random.Generator) -> str:
    n_syll = int(rng.integers(1, 3))
    parts = []
    for _ in range(n_syll):
        parts.append(_ONSETS[rng.integers(len(_ONSETS))])
        parts.append(_VOWELS[rng.integers(len(_VOWELS))])
    parts.append(_CODAS[rng.integers(len(_CODAS))])
    return "".join(parts)


def _build_lexicon(
    rng: np.random.Generator,
    n_entries: int,
    carrier_words: Sequence[str],
    max_filler_len: int,
    carrier_rate: float,
) -> list[tuple[str, ...]]:
    """Fillers of 1..max_filler_len tokens, shorter lengths more common.

    A fraction of multi-token fillers carry a function word ("the", "my")
    at a non-initial position, so exact span ends require lexicon
    knowledge while span starts stay inferable from the template context.
    """
    entries: dict[tuple[str, ...], None] = {}
    lengths = [min(n, max_filler_len) for n in (1, 1, 1, 2, 2, 3)]
    guard = 0
    while len(entries) < n_entries and guard < 50 * n_entries:
        guard += 1
        length = lengths[rng.integers(len(lengths))]
        words = [_pseudo_word(rng) for _ in range(length)]
        if length > 1 and rng.random() < carrier_rate:
            pos = int(rng.integers(1, length))
            words[pos] = str(rng.choice(carrier_words))
        entries.setdefault(tuple(words), None)
    return list(entries)


def generate_synthetic(
    grammar_seed: int,
    n_per_split: tuple[int, int, int],
    tag_count: int,
    lexicon_size: int = 60,
    max_filler_len: int = 3,
    carrier_rate: float = 0.15,
) -> Dataset:
    """Deterministic command-style corpus from a template grammar.

    Each sentence instantiates a carrier template, filling label slots from
    per-label filler lexicons; gold spans are exact by construction.
    Vocabulary and span lengths are bounded so a small word-level model can
    learn the task.
    """
    if tag_count < 1:
        raise ValidationError("tag_count must be >= 1")
    labels = [
        _LABEL_POOL[i] if i < len(_LABEL_POOL) else f"LABEL{i}"
        for i in range(tag_count)
    ]
    rng = np.random.default_rng(grammar_seed)
    carriers = ["the", "my", "some"]
    lexicons = [
        _build_lexicon(rng, lexicon_size, carriers, max_filler_len, carrier_rate)
        for _ in range(tag_count)
    ]

    def sample_sentence(sent_rng: np.random.Generator) -> tuple[list[str], list[str]]:
        template = _TEMPLATES[sent_rng.integers(len(_TEMPLATES))]
        tokens: list[str] = []
        tags: list[str] = []
        for piece in template:
            if piece.startswith("<"):
                choices = [int(c) % tag_count for c in piece[1:-1].split("|")]
                slot = choices[sent_rng.integers(len(choices))]
                lex = lexicons[slot]
                filler = lex[sent_rng.integers(len(lex))]
                tokens.extend(filler)
                tags.append(labels[slot])
                tags.extend(INSIDE for _ in filler[1:])
            else:
                tokens.append(piece)
                tags.append(OUTSIDE)
        return tokens, tags

    def build_split(name: str, count: int, offset: int) -> DatasetSplit:
        split_rng = np.random.default_rng(grammar_seed + 7919 * (offset + 1))
        sentences = []
        for i in range(count):
            toks, tags = sample_sentence(split_rng)
            sentences.append(
                Sentence(id=f"synth-{name}:{i}", tokens=tuple(toks), gold_tags=tuple(tags))
            )
        return DatasetSplit(name, tuple(sentences))

    n_train, n_dev, n_test = n_per_split
    train = build_split("train", n_train, 0)
    dev = build_split("dev", n_dev, 1)
    test = build_split("test", n_test, 2)
    return Dataset(train, dev, test, TagSet(labels))
