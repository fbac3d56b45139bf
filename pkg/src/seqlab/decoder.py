"""Likelihood-scored, tag-wise constrained beam search.

Decoding never generates free text: at step i every beam entry is extended
by each permitted tag followed by the next sentinel, the scorer rates the
resulting full strings, and the top-K survive.  The output is therefore a
well-formed sentinel/tag string by construction, for any scorer whatsoever.
Alongside the surviving texts, each entry keeps the full per-step score row
over the tag inventory; those rows are the teacher-side distributions that
make distillation with soft targets possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, SizeError, ValidationError
from .formats import (
    DEFAULT_SCHEME,
    VARIANT_CLOSED,
    SentinelScheme,
    TagSet,
    encode_input,
    encode_target,
    valid_next_tags,
)
from .scorer import Scorer

NEG_INF = float("-inf")


@dataclass(frozen=True)
class BeamConfig:
    k: int = 1
    constrain: bool = True
    tie_break: str = "tag_then_parent"  # lower tag index wins, then lower parent

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("beam width must be >= 1")
        if self.tie_break != "tag_then_parent":
            raise ContractError(f"unknown tie-break rule {self.tie_break!r}")


@dataclass
class DecodeResult:
    """Top-K tag sequences, their output strings, and score bookkeeping.

    ``score_matrices[k]`` has one row per step: the cumulative
    log-likelihood that the scorer assigned to extending sequence k's own
    prefix with each tag (masked continuations are -inf).  Sequences are
    ordered by final score, descending under the tie-break rule.
    """

    sequences: list[tuple[str, ...]]
    texts: list[str]
    score_matrices: list[np.ndarray]
    final_scores: list[float]
    tag_order: tuple[str, ...]

    def top(self) -> tuple[str, ...]:
        return self.sequences[0]


@dataclass
class _Entry:
    text: str
    tags: tuple[str, ...]
    rows: list[np.ndarray] = field(default_factory=list)
    total: float = 0.0


def beam_decode(
    scorer: Scorer,
    tokens: Sequence[str],
    tag_set: TagSet,
    config: BeamConfig = BeamConfig(),
    scheme: SentinelScheme = DEFAULT_SCHEME,
) -> DecodeResult:
    """Decode one sentence; the scorer rates (input string, candidate) pairs.

    The beam starts from the bare first sentinel and grows to at most K
    distinct prefixes; every surviving entry inherits its parent's row
    history plus the parent's full row from the current step.
    """
    if not tokens:
        raise ContractError("cannot decode an empty sentence")
    length = len(tokens)
    s_in = encode_input(tokens, scheme, VARIANT_CLOSED)
    size = tag_set.size
    beam = [_Entry(text=scheme.sentinel(0), tags=())]

    for i in range(1, length + 1):
        s_i = scheme.sentinel(i)
        hyp_texts: list[str] = []
        hyp_meta: list[tuple[int, int]] = []  # (parent, tag index)
        parent_rows = []
        for p, entry in enumerate(beam):
            if config.constrain:
                mask = valid_next_tags(entry.tags, tag_set)
            else:
                mask = np.ones(size, dtype=bool)
            parent_rows.append(np.full(size, NEG_INF))
            for ti in range(size):
                if not mask[ti]:
                    continue
                hyp_texts.append(f"{entry.text} {tag_set.full[ti]} {s_i}")
                hyp_meta.append((p, ti))
        scores = scorer.score_batch(s_in, hyp_texts)
        candidates = []
        for text, (p, ti), sc in zip(hyp_texts, hyp_meta, scores):
            sc = float(sc)
            parent_rows[p][ti] = sc
            candidates.append((sc, ti, p, text))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        beam = [
            _Entry(
                text=text,
                tags=beam[p].tags + (tag_set.full[ti],),
                rows=beam[p].rows + [parent_rows[p]],
                total=sc,
            )
            for sc, ti, p, text in candidates[: config.k]
        ]

    return DecodeResult(
        sequences=[e.tags for e in beam],
        texts=[e.text for e in beam],
        score_matrices=[np.array(e.rows) for e in beam],
        final_scores=[e.total for e in beam],
        tag_order=tag_set.full,
    )


def greedy_decode(
    scorer: Scorer,
    tokens: Sequence[str],
    tag_set: TagSet,
    scheme: SentinelScheme = DEFAULT_SCHEME,
    constrain: bool = True,
) -> tuple[tuple[str, ...], np.ndarray]:
    """Width-1 decode; returns the tag sequence and its L x |tags| score
    matrix."""
    result = beam_decode(
        scorer, tokens, tag_set, BeamConfig(k=1, constrain=constrain), scheme
    )
    return result.sequences[0], result.score_matrices[0]


def _enumerate_valid(length: int, tag_set: TagSet):
    """All well-formed tag-index sequences, lexicographic by tag index."""

    def rec(prefix: list[int]):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        mask = valid_next_tags([tag_set.full[i] for i in prefix], tag_set)
        for ti in range(tag_set.size):
            if mask[ti]:
                prefix.append(ti)
                yield from rec(prefix)
                prefix.pop()

    yield from rec([])


def exhaustive_decode(
    scorer: Scorer,
    tokens: Sequence[str],
    tag_set: TagSet,
    scheme: SentinelScheme = DEFAULT_SCHEME,
    cap: int = 10**6,
) -> tuple[tuple[str, ...], float]:
    """Score every well-formed sequence outright and return the argmax.

    Ties go to the first sequence in tag-index lexicographic order, which
    coincides with the beam's tie-break for the regimes tested.
    """
    length = len(tokens)
    if tag_set.size**length > cap:
        raise SizeError(
            f"{tag_set.size}^{length} exceeds the enumeration cap {cap}"
        )
    s_in = encode_input(tokens, scheme, VARIANT_CLOSED)
    sequences = [
        tuple(tag_set.full[i] for i in idx) for idx in _enumerate_valid(length, tag_set)
    ]
    texts = [encode_target(seq, scheme) for seq in sequences]
    scores = scorer.score_batch(s_in, texts)
    best = 0
    for j in range(1, len(scores)):
        if scores[j] > scores[best]:
            best = j
    return sequences[best], float(scores[best])


def step_distribution(
    score_row: np.ndarray,
    mask: np.ndarray | None = None,
    tau: float = 1.0,
) -> np.ndarray:
    """Temperature softmax of one score row; masked entries get exactly 0.

    Entries already at -inf (recorded for masked continuations during
    decoding) are equivalent to masking.
    """
    if tau <= 0.0:
        raise ContractError("temperature must be positive")
    row = np.asarray(score_row, dtype=np.float64) / tau
    if mask is not None:
        row = np.where(np.asarray(mask, dtype=bool), row, NEG_INF)
    peak = row.max()
    if peak == NEG_INF:
        raise ContractError("every tag is masked; no distribution exists")
    exps = np.exp(row - peak)
    return exps / exps.sum()


def score_rows_to_jsonable(matrix: np.ndarray) -> list[list[float | None]]:
    """Score rows for JSON: -inf (masked) becomes null."""
    return [
        [None if v == NEG_INF else float(v) for v in row] for row in np.asarray(matrix)
    ]


def score_rows_from_jsonable(rows: Sequence[Sequence[float | None]]) -> np.ndarray:
    out = np.array(
        [[NEG_INF if v is None else float(v) for v in row] for row in rows],
        dtype=np.float64,
    )
    if out.ndim != 2:
        raise ValidationError("score rows must form a rectangular matrix")
    return out
