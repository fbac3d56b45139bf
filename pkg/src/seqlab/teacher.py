"""A small word-level encoder-decoder language model behind the scorer
contract.

The model treats sentinels, tag strings, and corpus words as atomic
symbols: a BiLSTM encodes the input string, an LSTM decoder with
dot-product attention assigns a conditional log-probability to every
candidate token, and the score of a candidate string is the sum of its
stepwise log-probabilities (teacher forcing).  Scoring is incremental and
cached per input string; the cache replays exactly the computation a cold
call would do, so cached and uncached scores are bitwise identical.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decoder import greedy_decode
from .errors import ConfigError
from .formats import (
    DEFAULT_SCHEME,
    FormattedPair,
    SentinelScheme,
    TagSet,
    parse_output,
    sbio_to_spans,
)
from .metrics import micro_f1
from .nn import layers
from .nn import tensor as T
from .nn.optim import AdamW, AdamWConfig, clip_grad_norm
from .nn.store import ParamStore
from .nn.tensor import Tensor, no_grad

BOS = "<s>"
UNK = "<unk>"


@dataclass
class TeacherTrainConfig:
    """Training schedule and model dimensions for the toy teacher.

    ``unk_dropout`` randomly maps corpus words to UNK during training so
    the model stays usable on unseen words.
    """

    epochs: int = 30
    patience: int = 8
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    embedding_dim: int = 32
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    unk_dropout: float = 0.1
    dropout: float = 0.0
    pretrain_epochs: int = 0
    pretrain_unk_dropout: float = 0.3
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    n_sentinels: int = 40

    def __post_init__(self):
        for name in (
            "epochs", "patience", "learning_rate", "batch_size",
            "embedding_dim", "encoder_hidden", "decoder_hidden", "n_sentinels",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("unk_dropout", "dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")


@dataclass
class TeacherTrainReport:
    initial_loss: float
    epoch_losses: list[float]
    dev_f1: list[float]
    best_epoch: int
    best_dev_f1: float


class ToyTeacher:
    """Scorer-contract implementation backed by the trainable seq2seq model."""

    def __init__(
        self,
        vocab: Sequence[str],
        embedding_dim: int,
        encoder_hidden: int,
        decoder_hidden: int,
        scheme: SentinelScheme = DEFAULT_SCHEME,
        init_seed: int = 0,
        n_words_offset: int | None = None,
        labels: Sequence[str] | None = None,
    ):
        self.vocab = list(vocab)
        self.vocab_index = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self.vocab_index) != len(self.vocab):
            raise ConfigError("vocabulary contains duplicates")
        if BOS not in self.vocab_index or UNK not in self.vocab_index:
            raise ConfigError("vocabulary must contain the start and unknown markers")
        self.scheme = scheme
        self.labels = list(labels) if labels is not None else None
        self.embedding_dim = embedding_dim
        self.encoder_hidden = encoder_hidden
        self.decoder_hidden = decoder_hidden
        # index of the first plain corpus word (symbols below it are never
        # replaced by UNK during training)
        self.words_offset = n_words_offset if n_words_offset is not None else len(self.vocab)

        rng = np.random.default_rng(init_seed)
        v = len(self.vocab)
        self.embedding = Tensor(
            layers.init_matrix(rng, v, embedding_dim), requires_grad=True
        )
        self.enc_fwd = layers.LstmParams.init(rng, embedding_dim, encoder_hidden)
        self.enc_bwd = layers.LstmParams.init(rng, embedding_dim, encoder_hidden)
        self.att_w = Tensor(
            layers.init_matrix(rng, 2 * encoder_hidden, decoder_hidden),
            requires_grad=True,
        )
        # input feeding: the previous step's attention context joins the
        # token embedding, so the recurrent state can track alignment
        self.dec = layers.LstmParams.init(
            rng, embedding_dim + 2 * encoder_hidden, decoder_hidden
        )
        self.out = layers.LinearParams.init(
            rng, decoder_hidden + 2 * encoder_hidden, v
        )

        self.params = ParamStore()
        self.params.add("embedding", self.embedding)
        self.params.update(self.enc_fwd.named("enc.fwd"))
        self.params.update(self.enc_bwd.named("enc.bwd"))
        self.params.add("att.w", self.att_w)
        self.params.update(self.dec.named("dec"))
        self.params.update(self.out.named("out"))

        self.bos_id = self.vocab_index[BOS]
        self.unk_id = self.vocab_index[UNK]
        self._cache: OrderedDict[str, dict] = OrderedDict()
        self._cache_limit = 16

    # -- vocabulary ---------------------------------------------------------

    def token_id(self, token: str) -> int:
        return self.vocab_index.get(token, self.unk_id)

    def token_ids(self, text: str) -> list[int]:
        return [self.token_id(tok) for tok in text.split()]

    # -- shared forward pieces ---------------------------------------------

    def _embed_column(self, ids) -> Tensor:
        return T.take_rows(self.embedding, ids)

    def _encode(self, enc_ids: np.ndarray, drop=None) -> tuple[Tensor, Tensor]:
        """Encoder states as attention (keys, values).

        ``enc_ids`` is (T,) for a single input or (B, T) batched; values
        are the stacked BiLSTM states, keys their projection to the decoder
        dimension.  ``drop`` is a (rate, rng) pair used only in training.
        """
        steps = enc_ids.shape[-1]
        if enc_ids.ndim == 1:
            inputs = [self._embed_column(int(enc_ids[t])) for t in range(steps)]
        else:
            inputs = [self._embed_column(enc_ids[:, t]) for t in range(steps)]
        if drop is not None:
            inputs = [T.dropout(x, drop[0], drop[1]) for x in inputs]
        states = layers.bilstm(inputs, self.enc_fwd, self.enc_bwd)
        values = T.stack_rows(states)
        keys = T.stack_rows([T.matmul(s, self.att_w) for s in states])
        return keys, values

    def _decoder_step(
        self, tok_ids, h: Tensor, c: Tensor, ctx: Tensor, keys: Tensor, values: Tensor,
        drop=None,
    ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        emb = self._embed_column(tok_ids)
        axis = 1 if emb.data.ndim == 2 else 0
        x = T.concat([emb, ctx], axis=axis)
        h2, c2 = layers.lstm_step(x, h, c, self.dec)
        ctx2 = T.attend(h2, keys, values)
        feature = T.concat([h2, ctx2], axis=axis)
        if drop is not None:
            feature = T.dropout(feature, drop[0], drop[1])
        logits = self.out.apply(feature)
        return h2, c2, ctx2, logits

    # -- incremental scoring --------------------------------------------------

    def clear_cache(self) -> None:
        self._cache.clear()

    def _input_cache(self, input_str: str) -> dict:
        cached = self._cache.get(input_str)
        if cached is not None:
            self._cache.move_to_end(input_str)
            return cached
        with no_grad():
            ids = np.asarray(self.token_ids(input_str), dtype=np.intp)
            keys, values = self._encode(ids)
            h = Tensor(np.zeros(self.decoder_hidden))
            c = Tensor(np.zeros(self.decoder_hidden))
            ctx = Tensor(np.zeros(2 * self.encoder_hidden))
            h, c, ctx, logits = self._decoder_step(self.bos_id, h, c, ctx, keys, values)
            logp = T.log_softmax(logits).data
        cached = {
            "keys": keys,
            "values": values,
            "prefixes": {(): (h.data, c.data, ctx.data, logp, 0.0)},
        }
        self._cache[input_str] = cached
        while len(self._cache) > self._cache_limit:
            self._cache.popitem(last=False)
        return cached

    def _entry(self, cache: dict, ids: tuple[int, ...]):
        """State/log-probs after consuming ``ids``; fills missing prefixes."""
        prefixes = cache["prefixes"]
        have = len(ids)
        j = have
        while j > 0 and ids[:j] not in prefixes:
            j -= 1
        h_arr, c_arr, ctx_arr, logp, cum = prefixes[ids[:j]]
        with no_grad():
            for m in range(j, have):
                cum += float(logp[ids[m]])
                h, c, ctx, logits = self._decoder_step(
                    int(ids[m]), Tensor(h_arr), Tensor(c_arr), Tensor(ctx_arr),
                    cache["keys"], cache["values"],
                )
                h_arr, c_arr, ctx_arr = h.data, c.data, ctx.data
                logp = T.log_softmax(logits).data
                prefixes[ids[: m + 1]] = (h_arr, c_arr, ctx_arr, logp, cum)
        return prefixes[ids]

    def score(self, input_str: str, candidate: str) -> float:
        """Sum of conditional token log-probabilities of ``candidate``."""
        ids = tuple(self.token_ids(candidate))
        if not ids:
            return 0.0
        cache = self._input_cache(input_str)
        entry = self._entry(cache, ids[:-1])
        logp, cum = entry[3], entry[4]
        return cum + float(logp[ids[-1]])

    def score_batch(self, input_str: str, candidates: Sequence[str]) -> list[float]:
        return [self.score(input_str, c) for c in candidates]

    def next_token_logprobs(self, input_str: str, prefix_tokens: Sequence[str]) -> np.ndarray:
        """Log-distribution over the vocabulary after consuming the prefix."""
        ids = tuple(self.token_id(tok) for tok in prefix_tokens)
        cache = self._input_cache(input_str)
        return self._entry(cache, ids)[3].copy()

    # -- persistence --------------------------------------------------------

    def save(self, path_prefix: str) -> None:
        self.params.save(f"{path_prefix}.npz")
        meta = {
            "vocab": self.vocab,
            "embedding_dim": self.embedding_dim,
            "encoder_hidden": self.encoder_hidden,
            "decoder_hidden": self.decoder_hidden,
            "scheme_pattern": self.scheme.pattern,
            "words_offset": self.words_offset,
            "labels": self.labels,
        }
        with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path_prefix: str) -> "ToyTeacher":
        with open(f"{path_prefix}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        teacher = cls(
            vocab=meta["vocab"],
            embedding_dim=meta["embedding_dim"],
            encoder_hidden=meta["encoder_hidden"],
            decoder_hidden=meta["decoder_hidden"],
            scheme=SentinelScheme(meta["scheme_pattern"]),
            n_words_offset=meta["words_offset"],
            labels=meta.get("labels"),
        )
        store = ParamStore.load(f"{path_prefix}.npz")
        teacher.params.load_snapshot(store.snapshot())
        teacher.clear_cache()
        return teacher


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _input_tokens(input_str: str) -> list[str]:
    """Corpus tokens of a formatted input string (every other piece)."""
    return input_str.split()[1::2]


def build_teacher(
    train_pairs: Sequence[FormattedPair],
    tag_set: TagSet,
    config: TeacherTrainConfig,
    scheme: SentinelScheme = DEFAULT_SCHEME,
    unlabeled_texts: Sequence[Sequence[str]] = (),
) -> ToyTeacher:
    """Assemble the vocabulary from the training inputs (plus any unlabeled
    pretraining sentences) and initialize."""
    symbols: dict[str, None] = {}
    symbols[BOS] = None
    symbols[UNK] = None
    for k in range(config.n_sentinels):
        symbols.setdefault(scheme.sentinel(k), None)
    for tag in tag_set.full:
        symbols.setdefault(tag, None)
    words_offset = len(symbols)
    words = {w for pair in train_pairs for w in _input_tokens(pair.input)}
    words.update(w for tokens in unlabeled_texts for w in tokens)
    for word in sorted(words):
        symbols.setdefault(word, None)
    return ToyTeacher(
        vocab=list(symbols),
        embedding_dim=config.embedding_dim,
        encoder_hidden=config.encoder_hidden,
        decoder_hidden=config.decoder_hidden,
        scheme=scheme,
        init_seed=config.seed,
        n_words_offset=words_offset,
        labels=tag_set.labels,
    )


def _pair_ids(teacher: ToyTeacher, pairs: Sequence[FormattedPair], n_sentinels: int):
    enc, dec = [], []
    for pair in pairs:
        n_tokens = len(_input_tokens(pair.input))
        if n_tokens + 1 > n_sentinels:
            raise ConfigError(
                f"sentence of {n_tokens} tokens exceeds the configured "
                f"sentinel budget {n_sentinels}"
            )
        enc.append(np.asarray(teacher.token_ids(pair.input), dtype=np.intp))
        dec.append(np.asarray(teacher.token_ids(pair.target), dtype=np.intp))
    return enc, dec


def _batched_loss(
    teacher: ToyTeacher,
    enc_ids: np.ndarray,
    dec_ids: np.ndarray,
    drop=None,
) -> T.Tensor:
    """Teacher-forced cross-entropy summed over positions, averaged over
    the batch; both id matrices are (B, T)."""
    batch = enc_ids.shape[0]
    keys, values = teacher._encode(enc_ids, drop=drop)
    h = Tensor(np.zeros((batch, teacher.decoder_hidden)))
    c = Tensor(np.zeros((batch, teacher.decoder_hidden)))
    ctx = Tensor(np.zeros((batch, 2 * teacher.encoder_hidden)))
    steps = dec_ids.shape[1]
    total = None
    prev = np.full(batch, teacher.bos_id, dtype=np.intp)
    for t in range(steps):
        h, c, ctx, logits = teacher._decoder_step(prev, h, c, ctx, keys, values, drop=drop)
        step_loss = T.cross_entropy_logits_sum(logits, dec_ids[:, t])
        total = step_loss if total is None else T.add(total, step_loss)
        prev = dec_ids[:, t]
    return T.scale(total, 1.0 / batch)


def _apply_unk_dropout(
    teacher: ToyTeacher, enc_ids: np.ndarray, rate: float, rng: np.random.Generator
) -> np.ndarray:
    if rate <= 0.0:
        return enc_ids
    out = enc_ids.copy()
    words = out >= teacher.words_offset
    drop = words & (rng.random(out.shape) < rate)
    out[drop] = teacher.unk_id
    return out


def _length_batches(
    lengths: list[int], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Shuffled batches of equal-length items (no padding anywhere)."""
    order = rng.permutation(len(lengths))
    by_len: dict[int, list[int]] = {}
    for idx in order:
        by_len.setdefault(lengths[idx], []).append(int(idx))
    batches = []
    for length in sorted(by_len):
        group = by_len[length]
        for i in range(0, len(group), batch_size):
            batches.append(group[i : i + batch_size])
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


def _dev_sentences(
    dev_pairs: Sequence[FormattedPair], tag_set: TagSet, scheme: SentinelScheme
) -> list[tuple[list[str], list[str]]]:
    out = []
    for pair in dev_pairs:
        tokens = _input_tokens(pair.input)
        tags = parse_output(pair.target, len(tokens), tag_set, scheme)
        out.append((tokens, tags))
    return out


def dev_micro_f1(
    teacher: ToyTeacher,
    dev: Sequence[tuple[list[str], list[str]]],
    tag_set: TagSet,
    scheme: SentinelScheme,
) -> float:
    gold_spans, pred_spans = {}, {}
    teacher.clear_cache()
    for i, (tokens, gold) in enumerate(dev):
        pred, _ = greedy_decode(teacher, tokens, tag_set, scheme)
        gold_spans[str(i)] = sbio_to_spans(gold)
        pred_spans[str(i)] = sbio_to_spans(list(pred))
    teacher.clear_cache()
    return micro_f1(gold_spans, pred_spans).f1


def _reconstruction_pair(tokens: Sequence[str], scheme: SentinelScheme) -> FormattedPair:
    """Pretraining pair: the input format with the sentence itself, rather
    than tags, as the decoder payload."""
    parts = []
    for k, tok in enumerate(tokens):
        parts.append(scheme.sentinel(k))
        parts.append(tok)
    parts.append(scheme.sentinel(len(tokens)))
    target = " ".join(parts)
    return FormattedPair(input=target, target=target)


def train_teacher(
    train_pairs: Sequence[FormattedPair],
    dev_pairs: Sequence[FormattedPair],
    tag_set: TagSet,
    config: TeacherTrainConfig,
    scheme: SentinelScheme = DEFAULT_SCHEME,
    unlabeled_texts: Sequence[Sequence[str]] = (),
) -> tuple[ToyTeacher, TeacherTrainReport]:
    """Fit the toy teacher on formatted pairs; the best checkpoint by dev
    micro-F1 of width-1 decoding is returned.

    With ``pretrain_epochs`` > 0 and unlabeled sentences given, the model
    first learns to reconstruct word-dropped sentences in the sentinel
    format (a denoising stage standing in for large-scale pretraining: it
    teaches sentinel alignment and which words share contexts, without
    ever seeing a label).
    """
    if not train_pairs:
        raise ConfigError("cannot train a teacher on an empty pair set")
    if not dev_pairs:
        raise ConfigError("teacher training needs a non-empty dev set")
    teacher = build_teacher(train_pairs, tag_set, config, scheme, unlabeled_texts)
    enc_list, dec_list = _pair_ids(teacher, train_pairs, config.n_sentinels)
    _pair_ids(teacher, dev_pairs, config.n_sentinels)  # length validation only
    dev = _dev_sentences(dev_pairs, tag_set, scheme)
    lengths = [len(e) for e in enc_list]

    rng = np.random.default_rng(config.seed)
    optim = AdamW(
        teacher.params.tensors(),
        AdamWConfig(
            learning_rate=config.learning_rate, weight_decay=config.weight_decay
        ),
    )

    if config.pretrain_epochs > 0 and unlabeled_texts:
        pre_pairs = [_reconstruction_pair(t, scheme) for t in unlabeled_texts]
        pre_enc, pre_dec = _pair_ids(teacher, pre_pairs, config.n_sentinels)
        pre_lengths = [len(e) for e in pre_enc]
        for _ in range(config.pretrain_epochs):
            for batch in _length_batches(pre_lengths, config.batch_size, rng):
                enc = np.stack([pre_enc[i] for i in batch])
                dec = np.stack([pre_dec[i] for i in batch])
                enc = _apply_unk_dropout(teacher, enc, config.pretrain_unk_dropout, rng)
                drop = (config.dropout, rng) if config.dropout > 0.0 else None
                loss = _batched_loss(teacher, enc, dec, drop=drop)
                loss.backward()
                clip_grad_norm(teacher.params.tensors(), config.clip_norm)
                optim.step()
                optim.zero_grad()

    def run_batches(train: bool) -> float:
        total, count = 0.0, 0
        for batch in _length_batches(lengths, config.batch_size, rng):
            enc = np.stack([enc_list[i] for i in batch])
            dec = np.stack([dec_list[i] for i in batch])
            if train:
                enc = _apply_unk_dropout(teacher, enc, config.unk_dropout, rng)
                drop = (config.dropout, rng) if config.dropout > 0.0 else None
                loss = _batched_loss(teacher, enc, dec, drop=drop)
                loss.backward()
                clip_grad_norm(teacher.params.tensors(), config.clip_norm)
                optim.step()
                optim.zero_grad()
                value = loss.item()
            else:
                with no_grad():
                    value = _batched_loss(teacher, enc, dec).item()
            total += value * len(batch)
            count += len(batch)
        return total / count

    initial_loss = run_batches(train=False)
    epoch_losses: list[float] = []
    dev_scores: list[float] = []
    best_f1, best_epoch, best_snap = -1.0, -1, None
    for epoch in range(config.epochs):
        epoch_losses.append(run_batches(train=True))
        f1 = dev_micro_f1(teacher, dev, tag_set, scheme)
        dev_scores.append(f1)
        if f1 > best_f1:
            best_f1, best_epoch = f1, epoch
            best_snap = teacher.params.snapshot()
        elif epoch - best_epoch >= config.patience:
            break
    assert best_snap is not None
    teacher.params.load_snapshot(best_snap)
    teacher.clear_cache()
    report = TeacherTrainReport(
        initial_loss=initial_loss,
        epoch_losses=epoch_losses,
        dev_f1=dev_scores,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
    )
    return teacher, report
