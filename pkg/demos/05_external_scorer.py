"""Serve a scorer over the newline-delimited-JSON wire protocol and decode
through it.

Run: python demos/05_external_scorer.py
"""

from seqlab import TagSet, encode_input
from seqlab.decoder import BeamConfig, beam_decode
from seqlab.scorer import ExternalScorer, TableScorer, serve_tcp

tag_set = TagSet(["CITY"])
tokens = ["fly", "to", "boston"]
s_in = encode_input(tokens)

table = TableScorer(default_score=-50.0)
table.set(s_in, "<extra_id_0> O <extra_id_1>", -1.0)
table.set(s_in, "<extra_id_0> O <extra_id_1> O <extra_id_2>", -2.0)
table.set(s_in, "<extra_id_0> O <extra_id_1> O <extra_id_2> CITY <extra_id_3>", -2.5)

# One process would normally be a real model server; here the reference
# peer wraps the table and answers on a local TCP port.
port, stop = serve_tcp(table)
client = ExternalScorer.connect("127.0.0.1", port)
try:
    print("request/response:", client.score_batch(s_in, [
        "<extra_id_0> O <extra_id_1>",
        "<extra_id_0> CITY <extra_id_1>",
    ]))
    result = beam_decode(client, tokens, tag_set, BeamConfig(k=1))
    print("decoded through the wire:", result.sequences[0])
finally:
    client.close()
    stop()
