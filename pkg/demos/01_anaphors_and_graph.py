"""
Anaphors and the document graph
===============================

Two sentences, two annotated mentions, a hand-tagged parse. The rules pick out
the pronoun and the definite phrase; the graph links them to every mention.
"""

import numpy as np

from anaphor_re.corpus import Document, Entity, Mention, ParseAnnotation
from anaphor_re.graph import build_graph, extract_anaphors

s1 = ["There", "is", "a", "Walmart", "next", "to", "Tom", "'s", "house", "."]
s2 = ["He", "works", "at", "the", "market", "."]
pos = ["ADV", "VERB", "DET", "PROPN", "ADV", "ADP", "PROPN", "PART", "NOUN", "PUNCT",
       "PRON", "VERB", "ADP", "DET", "NOUN", "PUNCT"]
dep = ["expl", "ROOT", "det", "nsubj", "advmod", "prep", "poss", "case", "pobj", "punct",
       "nsubj", "ROOT", "prep", "det", "pobj", "punct"]
# heads index the flattened token list
head = [1, 1, 3, 1, 1, 4, 8, 6, 5, 1, 11, 11, 11, 14, 12, 11]

doc = Document(
    "walmart", (tuple(s1), tuple(s2)),
    (Entity(0, (Mention(0, 3, 4, "Walmart", "Walmart"),), "ORG"),
     Entity(1, (Mention(0, 6, 7, "Tom", "Tom"),), "PER")),
    (), ParseAnnotation(tuple(pos), tuple(dep), tuple(head), tuple(t.lower() for t in s1 + s2)))

anaphors = extract_anaphors(doc)
for a in anaphors:
    print(f"{a.kind:<18} sentence {a.sent_id} [{a.start},{a.end})  {a.surface!r}")

# nodes: mentions first (entity order), then anaphors
g = build_graph(doc, anaphors)
print("\nnodes:", [(v.kind, v.sent_id, v.start) for v in g.nodes])
for i, j, kind in g.edges():
    print(f"  {i} -- {j}  {kind}")

# the two ablation variants
print("\nno-anaphor nodes:", build_graph(doc, anaphors, "no-anaphor").n)
rr = build_graph(doc, anaphors, "random-replace", np.random.default_rng(0))
print("random-replace spans:", [(v.sent_id, v.start, v.end) for v in rr.anaphor_nodes])
