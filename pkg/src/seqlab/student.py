"""Compact BiLSTM sequence tagger (the distillation student).

Each token is represented by a word embedding concatenated with the final
hidden state of a character-level BiLSTM over the token's characters; a
word-level BiLSTM feeds a per-position linear projection to tag logits.
No structured output layer: well-formedness of predictions is imposed at
inference time by masked left-to-right argmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .formats import TagSet, valid_next_tags
from .nn import layers
from .nn import tensor as T
from .nn.store import ParamStore
from .nn.tensor import Tensor, no_grad
from .seeding import derive_seed

WORD_UNK = "<unk>"
CHAR_UNK = "\x00"


@dataclass
class StudentConfig:
    """Architecture and schedule; hidden sizes are per direction, so the
    concatenated character feature is 2*char_hidden and the tagger feature
    2*word_hidden."""

    word_emb_dim: int = 100
    char_emb_dim: int = 25
    char_hidden: int = 25
    word_hidden: int = 200
    pretrained_embedding_path: str | None = None
    freeze_pretrained: bool = False
    epochs: int = 100
    patience: int = 25
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    weight_decay: float = 0.01
    clip_norm: float = 5.0

    def __post_init__(self):
        for name in (
            "word_emb_dim", "char_emb_dim", "char_hidden", "word_hidden",
            "epochs", "patience", "learning_rate", "batch_size",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class StudentOutput:
    """Per-position logits (L x |tags|) and their softmax rows."""

    logits: np.ndarray
    q: np.ndarray = field(init=False)

    def __post_init__(self):
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        self.q = expd / expd.sum(axis=1, keepdims=True)


def load_word_vectors(path: str) -> dict[str, np.ndarray]:
    """Text-format vectors: one ``word v_1 ... v_d`` entry per line."""
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            table[parts[0]] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
    return table


class StudentModel:
    def __init__(
        self,
        words: Sequence[str],
        chars: Sequence[str],
        tag_set: TagSet,
        config: StudentConfig,
    ):
        self.config = config
        self.tag_set = tag_set
        self.words = [WORD_UNK] + sorted(set(words) - {WORD_UNK})
        self.chars = [CHAR_UNK] + sorted(set(chars) - {CHAR_UNK})
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.char_index = {c: i for i, c in enumerate(self.chars)}

        rng = np.random.default_rng(derive_seed(config.seed, "init"))
        word_emb = layers.init_matrix(rng, len(self.words), config.word_emb_dim)
        if config.pretrained_embedding_path:
            vectors = load_word_vectors(config.pretrained_embedding_path)
            for w, i in self.word_index.items():
                vec = vectors.get(w)
                if vec is not None:
                    if vec.shape[0] != config.word_emb_dim:
                        raise ConfigError(
                            f"pretrained vectors are {vec.shape[0]}-d, "
                            f"config wants {config.word_emb_dim}"
                        )
                    word_emb[i] = vec
        self.word_emb = Tensor(word_emb, requires_grad=not config.freeze_pretrained)
        self.char_emb = Tensor(
            layers.init_matrix(rng, len(self.chars), config.char_emb_dim),
            requires_grad=True,
        )
        self.char_fwd = layers.LstmParams.init(rng, config.char_emb_dim, config.char_hidden)
        self.char_bwd = layers.LstmParams.init(rng, config.char_emb_dim, config.char_hidden)
        feature_dim = config.word_emb_dim + 2 * config.char_hidden
        self.word_fwd = layers.LstmParams.init(rng, feature_dim, config.word_hidden)
        self.word_bwd = layers.LstmParams.init(rng, feature_dim, config.word_hidden)
        self.out = layers.LinearParams.init(rng, 2 * config.word_hidden, tag_set.size)

        self.params = ParamStore()
        self.params.add("word_emb", self.word_emb)
        self.params.add("char_emb", self.char_emb)
        self.params.update(self.char_fwd.named("char.fwd"))
        self.params.update(self.char_bwd.named("char.bwd"))
        self.params.update(self.word_fwd.named("word.fwd"))
        self.params.update(self.word_bwd.named("word.bwd"))
        self.params.update(self.out.named("out"))

    # -- forward -------------------------------------------------------------

    def _char_matrix(self, forms: Sequence[str]) -> Tensor:
        """Character-BiLSTM representation per unique word form, one row
        each, grouped by character length so every cell step is batched."""
        by_len: dict[int, list[int]] = {}
        for i, form in enumerate(forms):
            by_len.setdefault(len(form), []).append(i)
        chunks: list[Tensor] = []
        order: list[int] = []
        for length in sorted(by_len):
            members = by_len[length]
            ids = np.array(
                [
                    [self.char_index.get(ch, 0) for ch in forms[i]]
                    for i in members
                ],
                dtype=np.intp,
            )
            inputs = [T.take_rows(self.char_emb, ids[:, t]) for t in range(length)]
            chunks.append(layers.bilstm_final(inputs, self.char_fwd, self.char_bwd))
            order.extend(members)
        stacked = T.concat(chunks, axis=0)
        inverse = np.empty(len(forms), dtype=np.intp)
        inverse[np.asarray(order, dtype=np.intp)] = np.arange(len(forms))
        return T.take_rows(stacked, inverse)

    def forward_batch(self, batch_tokens: Sequence[Sequence[str]]) -> list[Tensor]:
        """Per-position logit tensors (B x |tags|) for same-length sentences."""
        if not batch_tokens:
            raise ContractError("empty batch")
        length = len(batch_tokens[0])
        if length == 0 or any(len(toks) != length for toks in batch_tokens):
            raise ContractError("batch sentences must share a non-zero length")
        forms: dict[str, int] = {}
        for toks in batch_tokens:
            for tok in toks:
                forms.setdefault(tok, len(forms))
        char_matrix = self._char_matrix(list(forms))
        word_ids = np.array(
            [[self.word_index.get(tok, 0) for tok in toks] for toks in batch_tokens],
            dtype=np.intp,
        )
        form_ids = np.array(
            [[forms[tok] for tok in toks] for toks in batch_tokens], dtype=np.intp
        )
        inputs = [
            T.concat(
                [
                    T.take_rows(self.word_emb, word_ids[:, t]),
                    T.take_rows(char_matrix, form_ids[:, t]),
                ],
                axis=1,
            )
            for t in range(length)
        ]
        states = layers.bilstm(inputs, self.word_fwd, self.word_bwd)
        return [self.out.apply(s) for s in states]

    def forward_tokens(self, tokens: Sequence[str]) -> StudentOutput:
        """Single-sentence inference output (no tape)."""
        if not tokens:
            raise ContractError("cannot tag an empty sentence")
        with no_grad():
            per_pos = self.forward_batch([list(tokens)])
        logits = np.stack([node.data[0] for node in per_pos])
        return StudentOutput(logits=logits)

    # -- prediction -----------------------------------------------------------

    def predict(self, tokens: Sequence[str], constrained: bool = True) -> list[str]:
        """Tags by left-to-right argmax; with ``constrained`` the continuation
        mask guarantees a well-formed sequence."""
        output = self.forward_tokens(tokens)
        tags: list[str] = []
        for row in output.logits:
            if constrained:
                mask = valid_next_tags(tags, self.tag_set)
                row = np.where(mask, row, -np.inf)
            tags.append(self.tag_set.full[int(np.argmax(row))])
        return tags

    # -- persistence ----------------------------------------------------------

    def save(self, path_prefix: str) -> None:
        self.params.save(f"{path_prefix}.npz")
        meta = {
            "words": self.words,
            "chars": self.chars,
            "labels": list(self.tag_set.labels),
            "config": {
                k: v
                for k, v in self.config.__dict__.items()
            },
        }
        with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path_prefix: str) -> "StudentModel":
        with open(f"{path_prefix}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        model = cls(
            words=meta["words"],
            chars=meta["chars"],
            tag_set=TagSet(meta["labels"]),
            config=StudentConfig(**meta["config"]),
        )
        store = ParamStore.load(f"{path_prefix}.npz")
        model.params.load_snapshot(store.snapshot())
        return model
