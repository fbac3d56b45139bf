"""Scored, tag-wise beam search: rigged tables, the exhaustive oracle, and
why no scorer can make the decoder hallucinate.

Run: python demos/02_constrained_decoding.py
"""

import numpy as np

from seqlab import TagSet, encode_input, encode_target, parse_output
from seqlab.decoder import BeamConfig, beam_decode, exhaustive_decode, step_distribution
from seqlab.scorer import TableScorer

tag_set = TagSet(["TRACK", "ARTIST"])
tokens = ["play", "wow", "by", "jon", "theodore"]
target = ("O", "TRACK", "O", "ARTIST", "I")
s_in = encode_input(tokens)

# A table scorer is a pure lookup; rig it so every prefix of the intended
# sequence outscores everything else.
table = TableScorer(default_score=-100.0)
text = "<extra_id_0>"
for i, tag in enumerate(target, start=1):
    text = f"{text} {tag} <extra_id_{i}>"
    table.set(s_in, text, 0.0)

result = beam_decode(table, tokens, tag_set, BeamConfig(k=4))
print("top-1:", result.sequences[0])
print("its score matrix, one row per step (masked continuations are -inf):")
print(np.round(result.score_matrices[0], 1))
print("tag order:", result.tag_order)

# Rows softmax into per-step distributions over tags; the temperature
# softens them for distillation.
row = result.score_matrices[0][1]
print("\nstep-2 distribution, tau=1: ", np.round(step_distribution(row), 3))
print("step-2 distribution, tau=10:", np.round(step_distribution(row, tau=10.0), 3))

# The exhaustive oracle scores every well-formed sequence outright.
oracle_tags, oracle_score = exhaustive_decode(table, tokens, tag_set)
assert oracle_tags == result.sequences[0]

# Hallucination-freeness: feed the decoder pure noise; the output is still
# a well-formed string over valid tags of exactly the right length.
rng = np.random.default_rng(0)
for trial in range(200):
    noise = TableScorer(default_score=float(rng.normal()))
    length = int(rng.integers(1, 10))
    toks = [f"w{rng.integers(30)}" for _ in range(length)]
    res = beam_decode(noise, toks, tag_set, BeamConfig(k=int(rng.choice([1, 4]))))
    parsed = parse_output(res.texts[0], length, tag_set)
    assert len(parsed) == length
print("\n200 noise decodes, all parsed clean")
