"""Simplified-BIO tag codec and sentinel-interleaved string serialization.

The tag scheme: a span of label ``t`` is tagged ``t`` on its first token
and a single shared ``I`` on every continuation token; tokens outside any
span are tagged ``O``.  The full tag inventory over a label set T is
therefore T plus the two reserved tags, with a fixed canonical order
(labels in insertion order, then I, then O).

The string formats interleave sentinel placeholder strings with tokens
(model input) and with tags (model target).  The "closed" input variant
appends one extra trailing sentinel after the last token, so that during
scoring the *next* sentinel terminates every per-step continuation; the
"open" variant omits it.  Targets always carry the trailing sentinel.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import OutputParseError, ValidationError

INSIDE = "I"
OUTSIDE = "O"

VARIANT_OPEN = "open"
VARIANT_CLOSED = "closed"

_WS = re.compile(r"\s")


class TagSet:
    """Ordered label inventory plus the two reserved structural tags.

    ``labels`` holds the span labels T in insertion order; ``full`` is the
    complete tag order used for score rows and masks: labels, then I, then O.
    Indices are stable for the lifetime of the object.
    """

    __slots__ = ("labels", "full", "_index")

    def __init__(self, labels: Iterable[str]):
        seen: dict[str, None] = {}
        for lab in labels:
            if lab in (INSIDE, OUTSIDE):
                raise ValidationError(f"label {lab!r} collides with a reserved tag")
            if not lab or _WS.search(lab):
                raise ValidationError(f"label {lab!r} is empty or contains whitespace")
            seen.setdefault(lab, None)
        self.labels: tuple[str, ...] = tuple(seen)
        self.full: tuple[str, ...] = self.labels + (INSIDE, OUTSIDE)
        self._index = {t: i for i, t in enumerate(self.full)}

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        """Size of the full tag inventory (labels + I + O)."""
        return len(self.full)

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise ValidationError(f"unknown tag {tag!r}") from None

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, TagSet) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"TagSet({list(self.labels)!r})"


@dataclass(frozen=True)
class Span:
    """A labelled token span; ``start`` and ``end`` are inclusive 0-based."""

    label: str
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValidationError(f"bad span bounds [{self.start}, {self.end}]")


@dataclass(frozen=True)
class SentinelScheme:
    """Produces the placeholder strings interleaved with tokens and tags.

    ``pattern`` must contain ``{k}`` and expand to pairwise-distinct strings
    that never appear as corpus tokens or tag strings.
    """

    pattern: str = "<extra_id_{k}>"

    def __post_init__(self):
        if "{k}" not in self.pattern:
            raise ValidationError("sentinel pattern must contain '{k}'")
        if _WS.search(self.pattern):
            raise ValidationError("sentinel pattern must not contain whitespace")

    def sentinel(self, k: int) -> str:
        return self.pattern.format(k=k)

    def sentinels(self, count: int) -> list[str]:
        return [self.sentinel(k) for k in range(count)]


DEFAULT_SCHEME = SentinelScheme()


@dataclass(frozen=True)
class FormattedPair:
    """Model input string and expected target string for one sentence."""

    input: str
    target: str


def validate_sbio(tags: Sequence[str], tag_set: TagSet | None = None) -> None:
    """Raise ValidationError unless ``tags`` is a well-formed sequence.

    I may only continue a span: it is invalid at position 0 and directly
    after O.  With a tag set given, every non-reserved tag must be a label.
    """
    prev = None
    for i, tag in enumerate(tags):
        if tag == INSIDE and (prev is None or prev == OUTSIDE):
            raise ValidationError(f"tag I at position {i} does not continue a span")
        if tag_set is not None and tag not in tag_set:
            raise ValidationError(f"unknown tag {tag!r} at position {i}")
        prev = tag


def valid_next_tags(prefix: Sequence[str], tag_set: TagSet) -> np.ndarray:
    """Boolean mask over ``tag_set.full``: which tags may legally follow.

    Labels and O are always allowed; I only when the prefix is non-empty and
    does not end in O.
    """
    mask = np.ones(tag_set.size, dtype=bool)
    if len(prefix) == 0 or prefix[-1] == OUTSIDE:
        mask[tag_set.index(INSIDE)] = False
    return mask


def spans_to_sbio(token_count: int, spans: Sequence[Span]) -> list[str]:
    """Render labelled spans as a tag sequence of length ``token_count``."""
    tags = [OUTSIDE] * token_count
    last_end = -1
    for span in sorted(spans, key=lambda s: s.start):
        if span.start <= last_end:
            raise ValidationError(f"overlapping span {span}")
        if span.end >= token_count:
            raise ValidationError(f"span {span} exceeds length {token_count}")
        tags[span.start] = span.label
        for i in range(span.start + 1, span.end + 1):
            tags[i] = INSIDE
        last_end = span.end
    return tags

def sbio_to_spans(tags: Sequence[str]) -> list[Span]:
    """Inverse of spans_to_sbio: maximal label,I,...,I runs become spans."""
    validate_sbio(tags)
    spans: list[Span] = []
    for i, tag in enumerate(tags):
        if tag == OUTSIDE:
            continue
        if tag == INSIDE:
            spans[-1] = Span(spans[-1].label, spans[-1].start, i)
        else:
            spans.append(Span(tag, i, i))
    return spans


def bio_to_sbio(bio: Sequence[str]) -> list[str]:
    """Convert standard BIO tag strings (B-X / I-X / O) to the sBIO scheme."""
    out: list[str] = []
    open_label = None
    for i, tag in enumerate(bio):
        if tag == OUTSIDE:
            out.append(OUTSIDE)
            open_label = None
        elif tag.startswith("B-"):
            open_label = tag[2:]
            out.append(open_label)
        elif tag.startswith("I-"):
            if open_label != tag[2:]:
                raise ValidationError(
                    f"ragged BIO: {tag!r} at position {i} does not continue B-{tag[2:]}"
                )
            out.append(INSIDE)
        else:
            raise ValidationError(f"not a BIO tag: {tag!r} at position {i}")
    return out


def sbio_to_bio(tags: Sequence[str]) -> list[str]:
    """Inverse of bio_to_sbio; I is re-labelled from the open span."""
    validate_sbio(tags)
    out: list[str] = []
    open_label = None
    for tag in tags:
        if tag == OUTSIDE:
            out.append(OUTSIDE)
            open_label = None
        elif tag == INSIDE:
            out.append(f"I-{open_label}")
        else:
            open_label = tag
            out.append(f"B-{tag}")
    return out


def encode_input(
    tokens: Sequence[str],
    scheme: SentinelScheme = DEFAULT_SCHEME,
    variant: str = VARIANT_CLOSED,
) -> str:
    """Interleave sentinels with tokens into the model input string.

    closed: ``s_0 x_1 s_1 ... x_L s_L``; open: the same without the final
    sentinel.  Single-space joined.
    """
    if variant not in (VARIANT_OPEN, VARIANT_CLOSED):
        raise ValidationError(f"unknown input variant {variant!r}")
    if not tokens:
        raise ValidationError("cannot encode an empty token sequence")
    n = len(tokens)
    sentinels = set(scheme.sentinels(n + 1))
    parts: list[str] = []
    for k, tok in enumerate(tokens):
        if tok in sentinels:
            raise ValidationError(f"token {tok!r} collides with a sentinel string")
        parts.append(scheme.sentinel(k))
        parts.append(tok)
    if variant == VARIANT_CLOSED:
        parts.append(scheme.sentinel(n))
    return " ".join(parts)


def encode_target(tags: Sequence[str], scheme: SentinelScheme = DEFAULT_SCHEME) -> str:
    """Interleave sentinels with tags: ``s_0 t_1 s_1 ... t_L s_L``."""
    if not tags:
        raise ValidationError("cannot encode an empty tag sequence")
    validate_sbio(tags)
    parts: list[str] = []
    for k, tag in enumerate(tags):
        parts.append(scheme.sentinel(k))
        parts.append(tag)
    parts.append(scheme.sentinel(len(tags)))
    return " ".join(parts)


def parse_output(
    output: str,
    token_count: int,
    tag_set: TagSet,
    scheme: SentinelScheme = DEFAULT_SCHEME,
    require_valid: bool = True,
) -> list[str]:
    """Parse a decoder output string back into a tag sequence.

    Total on arbitrary strings: any deviation from the expected
    sentinel/tag alternation raises OutputParseError with a structured
    reason.  Repeated spaces are tolerated.  With ``require_valid`` the
    scheme constraint (no leading/post-O I) is also enforced.
    """
    pieces = output.split()
    expected = 2 * token_count + 1
    if len(pieces) != expected:
        raise OutputParseError(
            f"expected {expected} whitespace-separated pieces, got {len(pieces)}",
            reason="token_count",
        )
    tags: list[str] = []
    for j, piece in enumerate(pieces):
        if j % 2 == 0:
            want = scheme.sentinel(j // 2)
            if piece != want:
                raise OutputParseError(
                    f"expected sentinel {want!r} at piece {j}, got {piece!r}",
                    reason="sentinel",
                    position=j,
                )
        else:
            if piece not in tag_set:
                raise OutputParseError(
                    f"unknown tag {piece!r} at piece {j}", reason="tag", position=j
                )
            tags.append(piece)
    if require_valid:
        try:
            validate_sbio(tags)
        except ValidationError as exc:
            raise OutputParseError(str(exc), reason="scheme") from exc
    return tags


def make_pair(
    tokens: Sequence[str],
    tags: Sequence[str],
    scheme: SentinelScheme = DEFAULT_SCHEME,
    variant: str = VARIANT_CLOSED,
) -> FormattedPair:
    """Build the (input, target) string pair for one tagged sentence."""
    if len(tokens) != len(tags):
        raise ValidationError(
            f"{len(tokens)} tokens but {len(tags)} tags for one sentence"
        )
    return FormattedPair(
        input=encode_input(tokens, scheme, variant),
        target=encode_target(tags, scheme),
    )


def count_valid_sequences(length: int, n_labels: int) -> int:
    """Number of well-formed tag sequences of the given length.

    Recurrence over (sequences ending in O, sequences ending elsewhere):
    length 1 has 1 and n_labels respectively since I cannot start; each
    step allows O and every label after anything, I only after non-O.
    """
    if length < 1:
        return 0
    ending_o, ending_other = 1, n_labels
    for _ in range(length - 1):
        total = ending_o + ending_other
        ending_o, ending_other = total, n_labels * total + ending_other
    return ending_o + ending_other
