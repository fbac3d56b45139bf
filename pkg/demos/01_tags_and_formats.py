"""Tag scheme and string formats, end to end on one sentence.

Run: python demos/01_tags_and_formats.py
"""

from seqlab import (
    Span,
    TagSet,
    encode_input,
    encode_target,
    parse_output,
    sbio_to_spans,
    spans_to_sbio,
)

tokens = ["play", "wow", "by", "jon", "theodore"]
tag_set = TagSet(["TRACK", "ARTIST"])

# Spans use inclusive token indices; the scheme tags a span's first token
# with its label and every continuation with the shared I tag.
spans = [Span("TRACK", 1, 1), Span("ARTIST", 3, 4)]
tags = spans_to_sbio(len(tokens), spans)
print("tokens:", tokens)
print("tags:  ", tags)
assert sbio_to_spans(tags) == spans

# The model-facing strings interleave sentinels with tokens (input) and
# tags (target).  The closed variant appends one trailing sentinel, which
# is what lets the next sentinel act as a per-step end marker during
# scoring.
s_in = encode_input(tokens, variant="closed")
s_out = encode_target(tags)
print("\nencoder input: ", s_in)
print("decoder target:", s_out)

# Parsing is the exact inverse and is strict: wrong sentinels, unknown
# tags, or a wrong count raise a structured error.
assert parse_output(s_out, len(tokens), tag_set) == tags
print("\nround trip ok")
