"""Silver-data generation, the distillation objective, and student training.

Per position the silver loss is

    CE(y*, q)  +  lambda_kl * KL(p* || q)

where y* is the teacher's hard pseudo-label, p* the temperature softmax of
the teacher's score row, and q the student's softmax output.  Note the
cross-entropy is taken against the *student* distribution: the objective
as sometimes written, with the teacher's own p* inside the CE term,
carries no student dependence and cannot train anything.  Gold sentences
contribute plain cross-entropy on their labels.

Temperature is applied to the teacher rows only by default; the variant
that also tempers the student and rescales the KL term by tau^2 is
available behind ``temper_student``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sentence
from .decoder import (
    greedy_decode,
    score_rows_from_jsonable,
    score_rows_to_jsonable,
    step_distribution,
)
from .errors import ConfigError, ContractError, ValidationError
from .formats import (
    DEFAULT_SCHEME,
    INSIDE,
    OUTSIDE,
    SentinelScheme,
    TagSet,
    sbio_to_spans,
)
from .metrics import EvalReport, micro_f1
from .nn import tensor as T
from .nn.optim import AdamW, AdamWConfig, clip_grad_norm
from .nn.tensor import Tensor, no_grad
from .scorer import Scorer
from .seeding import derive_seed
from .student import StudentConfig, StudentModel, StudentOutput


@dataclass(frozen=True)
class DistillConfig:
    lambda_kl: float = 1.0
    tau: float = 10.0
    temper_student: bool = False

    def __post_init__(self):
        if self.lambda_kl < 0.0:
            raise ConfigError("lambda_kl must be >= 0")
        if self.tau <= 0.0:
            raise ConfigError("tau must be positive")


@dataclass
class SilverExample:
    """Teacher-annotated sentence: hard pseudo-tags plus the per-step score
    rows they were read off of (masked entries are -inf)."""

    id: str
    tokens: tuple[str, ...]
    pseudo_tags: tuple[str, ...]
    score_rows: np.ndarray | None
    tag_order: tuple[str, ...]

    def teacher_distributions(self, tau: float) -> np.ndarray:
        """Temperature-softmaxed rows p*; structurally masked tags get 0."""
        if self.score_rows is None:
            raise ContractError(f"silver example {self.id!r} carries no score rows")
        return np.stack([step_distribution(row, tau=tau) for row in self.score_rows])


@dataclass
class TrainReport:
    initial_loss: float
    epoch_losses: list[float]
    dev_f1: list[float]
    best_epoch: int
    best_dev_f1: float
    epochs_run: int


def generate_silver(
    teacher: Scorer,
    sentences: Sequence[Sentence],
    tag_set: TagSet,
    scheme: SentinelScheme = DEFAULT_SCHEME,
) -> list[SilverExample]:
    """Width-1 decode per sentence; deterministic given the teacher."""
    out = []
    for sent in sentences:
        tags, rows = greedy_decode(teacher, sent.tokens, tag_set, scheme)
        out.append(
            SilverExample(
                id=sent.id,
                tokens=sent.tokens,
                pseudo_tags=tags,
                score_rows=rows,
                tag_order=tag_set.full,
            )
        )
    return out


def write_silver(path: str, examples: Sequence[SilverExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            doc = {
                "id": ex.id,
                "tokens": list(ex.tokens),
                "tags": list(ex.pseudo_tags),
                "scores": None
                if ex.score_rows is None
                else score_rows_to_jsonable(ex.score_rows),
                "tag_order": list(ex.tag_order),
            }
            fh.write(json.dumps(doc, ensure_ascii=False))
            fh.write("\n")


def read_silver(path: str) -> list[SilverExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            rows = doc.get("scores")
            out.append(
                SilverExample(
                    id=doc["id"],
                    tokens=tuple(doc["tokens"]),
                    pseudo_tags=tuple(doc["tags"]),
                    score_rows=None if rows is None else score_rows_from_jsonable(rows),
                    tag_order=tuple(doc["tag_order"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# The objective
# ---------------------------------------------------------------------------


def _example_targets(
    example: Sentence | SilverExample,
    tag_set: TagSet,
    config: DistillConfig,
) -> tuple[np.ndarray, np.ndarray | None]:
    """(hard target indices, soft teacher rows or None) for one example."""
    if isinstance(example, SilverExample):
        if tuple(example.tag_order) != tag_set.full:
            raise ContractError(
                f"silver example {example.id!r} was decoded under a different tag order"
            )
        hard = np.asarray([tag_set.index(t) for t in example.pseudo_tags], dtype=np.intp)
        if config.lambda_kl > 0.0:
            return hard, example.teacher_distributions(config.tau)
        return hard, None
    if example.gold_tags is None:
        raise ContractError(f"gold sentence {example.id!r} has no labels")
    hard = np.asarray([tag_set.index(t) for t in example.gold_tags], dtype=np.intp)
    return hard, None


def distill_loss(
    example: Sentence | SilverExample,
    student_output: StudentOutput,
    config: DistillConfig,
    tag_set: TagSet | None = None,
) -> float:
    """Loss of one example, summed over positions.

    Accepts a gold ``Sentence`` (plain label cross-entropy) or a
    ``SilverExample`` (pseudo-label cross-entropy plus the weighted KL
    term against the tempered teacher rows).
    """
    if tag_set is None:
        if not isinstance(example, SilverExample):
            raise ContractError("a tag set is required to evaluate a gold sentence")
        tag_set = TagSet(
            [t for t in example.tag_order if t not in (INSIDE, OUTSIDE)]
        )
    hard, soft = _example_targets(example, tag_set, config)
    logits = student_output.logits
    if logits.shape != (len(hard), tag_set.size):
        raise ContractError(
            f"student output shape {logits.shape} does not match "
            f"({len(hard)}, {tag_set.size})"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_q = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    total = float(-log_q[np.arange(len(hard)), hard].sum())
    if soft is not None and config.lambda_kl > 0.0:
        if config.temper_student:
            tempered = logits / config.tau
            shifted = tempered - tempered.max(axis=1, keepdims=True)
            log_q_kl = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            kl_weight = config.lambda_kl * config.tau**2
        else:
            log_q_kl = log_q
            kl_weight = config.lambda_kl
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.where(soft > 0.0, soft * (np.log(soft) - log_q_kl), 0.0).sum()
        total += kl_weight * float(kl)
    return total


# ---------------------------------------------------------------------------
# Student training
# ---------------------------------------------------------------------------


def _length_batches(
    lengths: list[int], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
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


def _batch_loss(
    model: StudentModel,
    items: list[tuple[tuple[str, ...], np.ndarray, np.ndarray | None]],
    config: DistillConfig,
    tag_size: int,
) -> Tensor:
    """Summed-over-positions, averaged-over-batch loss for same-length
    items of (tokens, hard indices, optional teacher rows)."""
    batch = len(items)
    length = len(items[0][0])
    logits_per_pos = model.forward_batch([it[0] for it in items])
    hard = np.stack([it[1] for it in items])  # (B, L)
    any_soft = any(it[2] is not None for it in items)
    if any_soft:
        # Row mass encodes the per-row KL weight; gold rows stay all-zero.
        soft = np.zeros((batch, length, tag_size))
        entropy_const = 0.0
        kl_weight = (
            config.lambda_kl * config.tau**2
            if config.temper_student
            else config.lambda_kl
        )
        for b, (_, _, rows) in enumerate(items):
            if rows is None:
                continue
            soft[b] = kl_weight * rows
            with np.errstate(divide="ignore", invalid="ignore"):
                entropy_const += kl_weight * float(
                    np.where(rows > 0.0, rows * np.log(rows), 0.0).sum()
                )
    total = None
    for t, logits in enumerate(logits_per_pos):
        step = T.cross_entropy_logits_sum(logits, hard[:, t])
        if any_soft:
            kl_logits = T.scale(logits, 1.0 / config.tau) if config.temper_student else logits
            step = T.add(step, T.soft_cross_entropy_logits_sum(kl_logits, soft[:, t]))
        total = step if total is None else T.add(total, step)
    if any_soft:
        total = T.add(total, Tensor(np.asarray(entropy_const)))
    return T.scale(total, 1.0 / batch)


def evaluate_student(
    model: StudentModel,
    sentences: Sequence[Sentence],
    constrained: bool = True,
) -> EvalReport:
    """Exact-match span report of masked-argmax predictions against gold."""
    gold_spans, pred_spans = {}, {}
    for sent in sentences:
        assert sent.gold_tags is not None
        pred = model.predict(sent.tokens, constrained=constrained)
        gold_spans[sent.id] = sbio_to_spans(sent.gold_tags)
        pred_spans[sent.id] = sbio_to_spans(pred)
    return micro_f1(gold_spans, pred_spans)


def train_student(
    gold: Sequence[Sentence],
    silver: Sequence[SilverExample],
    student_config: StudentConfig,
    distill_config: DistillConfig,
    dev: Sequence[Sentence],
    tag_set: TagSet,
) -> tuple[StudentModel, TrainReport]:
    """Train on the shuffled union of gold and silver; early stopping with
    patience on dev micro-F1; returns the best checkpoint."""
    if not gold:
        raise ConfigError("gold training set is empty")
    if not dev:
        raise ConfigError("dev set is empty")

    vocab_tokens = [t for s in gold for t in s.tokens]
    vocab_tokens += [t for ex in silver for t in ex.tokens]
    chars = [ch for tok in vocab_tokens for ch in tok]
    model = StudentModel(vocab_tokens, chars, tag_set, student_config)

    items: list[tuple[tuple[str, ...], np.ndarray, np.ndarray | None]] = []
    for sent in gold:
        hard, soft = _example_targets(sent, tag_set, distill_config)
        items.append((sent.tokens, hard, soft))
    for ex in silver:
        hard, soft = _example_targets(ex, tag_set, distill_config)
        items.append((ex.tokens, hard, soft))
    lengths = [len(it[0]) for it in items]

    batch_rng = np.random.default_rng(derive_seed(student_config.seed, "batch"))
    optim = AdamW(
        model.params.tensors(),
        AdamWConfig(
            learning_rate=student_config.learning_rate,
            weight_decay=student_config.weight_decay,
        ),
    )

    def run_epoch(train: bool) -> float:
        total, count = 0.0, 0
        for batch in _length_batches(lengths, student_config.batch_size, batch_rng):
            chosen = [items[i] for i in batch]
            if train:
                loss = _batch_loss(model, chosen, distill_config, tag_set.size)
                loss.backward()
                clip_grad_norm(model.params.tensors(), student_config.clip_norm)
                optim.step()
                optim.zero_grad()
                value = loss.item()
            else:
                with no_grad():
                    value = _batch_loss(model, chosen, distill_config, tag_set.size).item()
            total += value * len(batch)
            count += len(batch)
        return total / count

    initial_loss = run_epoch(train=False)
    epoch_losses: list[float] = []
    dev_scores: list[float] = []
    best_f1, best_epoch, best_snap = -1.0, -1, None
    for epoch in range(student_config.epochs):
        epoch_losses.append(run_epoch(train=True))
        f1 = evaluate_student(model, dev).f1
        dev_scores.append(f1)
        if f1 > best_f1:
            best_f1, best_epoch = f1, epoch
            best_snap = model.params.snapshot()
        elif epoch - best_epoch >= student_config.patience:
            break
    assert best_snap is not None
    model.params.load_snapshot(best_snap)
    report = TrainReport(
        initial_loss=initial_loss,
        epoch_losses=epoch_losses,
        dev_f1=dev_scores,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
        epochs_run=len(epoch_losses),
    )
    return model, report
