"""Rule-based anaphor extraction and the three-edge-type document graph."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

PRONOUN = "pronoun"
DEFINITE = "definite-referent"

EDGE_TYPES = ("mention-anaphor", "coreference", "inter-entity")
VARIANTS = ("full", "no-anaphor", "random-replace")


@dataclass(frozen=True, order=True)
class Anaphor:
    sent_id: int
    start: int
    end: int
    kind: str = PRONOUN
    surface: str = ""

    @property
    def span(self):
        return (self.sent_id, self.start, self.end)


def _mention_mask(doc):
    covered = np.zeros(doc.n_tokens, dtype=bool)
    offs = doc.sentence_offsets()
    for _, m in doc.mentions():
        covered[offs[m.sent_id] + m.start:offs[m.sent_id] + m.end] = True
    return covered


def extract_anaphors(doc, exclude_mention_overlap=True, diagnostics=None):
    """Pronouns (coarse POS ``PRON``) and ``the ... head`` definite referents.

    A definite referent runs from a ``det`` token reading "the" through its
    syntactic head, inclusive. Candidates whose head precedes (or is) the
    determiner, or whose span leaves the sentence, are skipped and tallied in
    ``diagnostics`` (a Counter) when one is passed.
    """
    if doc.parse is None:
        raise ValueError(f"{doc.doc_id}: no parse annotation attached")
    parse = doc.parse
    if len(parse) != doc.n_tokens:
        raise ValueError(f"{doc.doc_id}: parse length {len(parse)} != {doc.n_tokens} tokens")
    tally = diagnostics if diagnostics is not None else Counter()
    offs = doc.sentence_offsets()
    sent_of = np.repeat(np.arange(len(doc.sentences)), [len(s) for s in doc.sentences])
    covered = _mention_mask(doc) if exclude_mention_overlap else None
    flat = doc.tokens()
    spans = set()
    for i in range(len(parse)):
        if parse.pos[i] == "PRON":
            spans.add((i, i + 1, PRONOUN))
        if parse.dep[i] == "det" and parse.lower[i] == "the":
            h = parse.head[i]
            if h < i:
                tally["backward_head"] += 1
                continue
            if h == i:
                tally["self_head"] += 1
                continue
            if sent_of[h] != sent_of[i]:
                tally["cross_sentence"] += 1
                continue
            spans.add((i, h + 1, DEFINITE))
    out = set()
    for a, b, kind in spans:
        if covered is not None and covered[a:b].any():
            tally["mention_overlap"] += 1
            continue
        s = int(sent_of[a])
        out.add(Anaphor(s, a - int(offs[s]), b - int(offs[s]), kind, " ".join(flat[a:b])))
    return sorted(out)


@dataclass(frozen=True)
class Node:
    kind: str  # "mention" or "anaphor"
    sent_id: int
    start: int
    end: int
    entity_id: int | None = None


@dataclass
class DocumentGraph:
    nodes: list
    A_MA: np.ndarray
    A_CO: np.ndarray
    A_IE: np.ndarray

    @property
    def n(self):
        return len(self.nodes)

    @property
    def n_mentions(self):
        return sum(1 for v in self.nodes if v.kind == "mention")

    @property
    def entity_of(self):
        return {i: v.entity_id for i, v in enumerate(self.nodes) if v.kind == "mention"}

    @property
    def anaphor_nodes(self):
        return [v for v in self.nodes if v.kind == "anaphor"]

    def matrices(self):
        return [self.A_MA, self.A_CO, self.A_IE]

    def support(self):
        return (self.A_MA + self.A_CO + self.A_IE) > 0

    def edges(self):
        """Undirected (i, j, type) triples with i < j."""
        out = []
        for name, m in zip(EDGE_TYPES, self.matrices()):
            ii, jj = np.nonzero(np.triu(m, 1))
            out.extend((int(i), int(j), name) for i, j in zip(ii, jj))
        return sorted(out)

    def to_json(self):
        return {
            "nodes": [{"kind": v.kind, "span": [v.sent_id, v.start, v.end], "entity_id": v.entity_id}
                      for v in self.nodes],
            "edges": [[i, j, t] for i, j, t in self.edges()],
        }


def random_replacement_spans(doc, anaphors, rng):
    """Same-width spans drawn uniformly from tokens that are neither mentions nor anaphors."""
    taken = _mention_mask(doc)
    offs = doc.sentence_offsets()
    for a in anaphors:
        taken[offs[a.sent_id] + a.start:offs[a.sent_id] + a.end] = True
    flat = doc.tokens()
    out = []
    for a in anaphors:
        width = a.end - a.start
        cands = [(s, k) for s, sent in enumerate(doc.sentences) for k in range(len(sent) - width + 1)
                 if not taken[offs[s] + k:offs[s] + k + width].any()]
        if not cands:
            continue
        s, k = cands[rng.integers(len(cands))]
        taken[offs[s] + k:offs[s] + k + width] = True
        g = offs[s] + k
        out.append(Anaphor(s, k, k + width, a.kind, " ".join(flat[g:g + width])))
    return sorted(out)


def build_graph(doc, anaphors=(), variant="full", rng=None):
    """Mention nodes (entity order) followed by anaphor nodes, with three edge families."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown graph variant {variant!r}")
    if variant == "no-anaphor":
        anaphors = []
    elif variant == "random-replace":
        anaphors = random_replacement_spans(doc, anaphors, rng if rng is not None else np.random.default_rng(0))
    nodes = [Node("mention", m.sent_id, m.start, m.end, ei) for ei, m in doc.mentions()]
    n_m = len(nodes)
    nodes += [Node("anaphor", a.sent_id, a.start, a.end, None) for a in sorted(anaphors)]
    n = len(nodes)
    ent = np.array([v.entity_id for v in nodes[:n_m]], dtype=int)
    ma = np.zeros((n, n), dtype=np.int8)
    ma[:n_m, n_m:] = 1
    ma[n_m:, :n_m] = 1
    same = np.zeros((n, n), dtype=bool)
    same[:n_m, :n_m] = ent[:, None] == ent[None, :]
    co = (same & ~np.eye(n, dtype=bool)).astype(np.int8)
    ie = np.zeros((n, n), dtype=np.int8)
    ie[:n_m, :n_m] = ent[:, None] != ent[None, :]
    return DocumentGraph(nodes, ma, co, ie)


def dump_graph(graph, path):
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)
