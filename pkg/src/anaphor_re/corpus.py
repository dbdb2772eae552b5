"""DocRED-format corpora, parse sidecars, entity markers and vocabularies."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np


class CorpusFormatError(ValueError):
    """Input does not follow the DocRED JSON schema."""

    def __init__(self, doc_id, field_path, message):
        super().__init__(f"document {doc_id!r}, field {field_path}: {message}")
        self.doc_id = doc_id
        self.field_path = field_path


class ValidationError(ValueError):
    """A structurally valid document violates a content invariant."""


class EmptyCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Mention:
    sent_id: int
    start: int
    end: int  # exclusive
    surface: str
    name: str = ""  # surface form as written in the source file


@dataclass(frozen=True)
class Entity:
    entity_id: int
    mentions: tuple
    type: str = ""


@dataclass(frozen=True)
class RelationFact:
    head: int
    tail: int
    relation: int
    evidence: frozenset = frozenset()


@dataclass(frozen=True)
class ParseAnnotation:
    pos: tuple
    dep: tuple
    head: tuple
    lower: tuple

    def __len__(self):
        return len(self.pos)


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple  # tuple of token tuples
    entities: tuple
    facts: tuple = ()
    parse: ParseAnnotation | None = None

    @property
    def n_tokens(self):
        return sum(len(s) for s in self.sentences)

    def sentence_offsets(self):
        """Flattened start offset of every sentence."""
        return np.concatenate([[0], np.cumsum([len(s) for s in self.sentences])[:-1]]).astype(int)

    def tokens(self):
        return [t for s in self.sentences for t in s]

    def mentions(self):
        """All (entity index, mention) pairs in corpus order."""
        return [(ei, m) for ei, e in enumerate(self.entities) for m in e.mentions]


@dataclass
class Corpus:
    documents: list
    relations: list  # relation id -> relation string

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, i):
        return self.documents[i]


def validate_document(doc):
    n_sent = len(doc.sentences)
    for ei, ent in enumerate(doc.entities):
        if not ent.mentions:
            raise ValidationError(f"{doc.doc_id}: entity {ei} has no mentions")
        for m in ent.mentions:
            if not 0 <= m.sent_id < n_sent:
                raise ValidationError(f"{doc.doc_id}: entity {ei} mention sentence {m.sent_id} out of range")
            if not 0 <= m.start < m.end <= len(doc.sentences[m.sent_id]):
                raise ValidationError(
                    f"{doc.doc_id}: entity {ei} mention span [{m.start},{m.end}) outside sentence "
                    f"{m.sent_id} of length {len(doc.sentences[m.sent_id])}")
    n_ent = len(doc.entities)
    for f in doc.facts:
        if not (0 <= f.head < n_ent and 0 <= f.tail < n_ent):
            raise ValidationError(f"{doc.doc_id}: fact ({f.head},{f.tail}) references a missing entity")
        if f.head == f.tail:
            raise ValidationError(f"{doc.doc_id}: fact with head == tail == {f.head}")
        if any(not 0 <= s < n_sent for s in f.evidence):
            raise ValidationError(f"{doc.doc_id}: evidence {sorted(f.evidence)} out of range")
    if doc.parse is not None and len(doc.parse) != doc.n_tokens:
        raise ValidationError(
            f"{doc.doc_id}: parse has {len(doc.parse)} tokens, document has {doc.n_tokens}")
    return doc


def _require(cond, doc_id, path, msg):
    if not cond:
        raise CorpusFormatError(doc_id, path, msg)


def _parse_doc(raw, i, rel_index, grow_vocab):
    doc_id = raw.get("title", str(i)) if isinstance(raw, dict) else str(i)
    _require(isinstance(raw, dict), doc_id, f"[{i}]", "document must be an object")
    sents = raw.get("sents")
    _require(isinstance(sents, list), doc_id, "sents", "missing or not an array")
    for si, s in enumerate(sents):
        _require(isinstance(s, list) and all(isinstance(t, str) for t in s),
                 doc_id, f"sents[{si}]", "sentence must be an array of strings")
    sentences = tuple(tuple(s) for s in sents)
    vs = raw.get("vertexSet")
    _require(isinstance(vs, list), doc_id, "vertexSet", "missing or not an array")
    entities = []
    for ei, mentions in enumerate(vs):
        _require(isinstance(mentions, list), doc_id, f"vertexSet[{ei}]", "not an array")
        ms, etype = [], ""
        for mi, m in enumerate(mentions):
            p = f"vertexSet[{ei}][{mi}]"
            _require(isinstance(m, dict), doc_id, p, "mention must be an object")
            _require(isinstance(m.get("sent_id"), int), doc_id, p + ".sent_id", "missing integer")
            pos = m.get("pos")
            _require(isinstance(pos, list) and len(pos) == 2 and all(isinstance(x, int) for x in pos),
                     doc_id, p + ".pos", "must be [start, end]")
            sid, (a, b) = m["sent_id"], pos
            surface = " ".join(sentences[sid][a:b]) if 0 <= sid < len(sentences) else ""
            ms.append(Mention(sid, a, b, surface, m.get("name", surface)))
            etype = etype or m.get("type", "")
        ms.sort(key=lambda m: (m.sent_id, m.start, m.end))
        entities.append(Entity(ei, tuple(ms), etype))
    facts = []
    for li, lab in enumerate(raw.get("labels", [])):
        p = f"labels[{li}]"
        _require(isinstance(lab, dict), doc_id, p, "label must be an object")
        for k in ("h", "t", "r"):
            _require(k in lab, doc_id, f"{p}.{k}", "missing")
        r = lab["r"]
        if r not in rel_index:
            _require(grow_vocab, doc_id, f"{p}.r", f"unknown relation {r!r}")
            rel_index[r] = len(rel_index)
        facts.append(RelationFact(lab["h"], lab["t"], rel_index[r], frozenset(lab.get("evidence", []))))
    return Document(doc_id, sentences, tuple(entities), tuple(facts))


def parse_corpus(raw_docs, relations=None):
    """Build a validated Corpus from decoded DocRED JSON.

    With ``relations`` given the relation vocabulary is fixed (dev/test files);
    otherwise it is derived from the data in sorted order.
    """
    if not isinstance(raw_docs, list):
        raise CorpusFormatError(None, "$", "corpus must be a JSON array")
    grow = relations is None
    if grow:
        names = sorted({lab.get("r") for d in raw_docs if isinstance(d, dict)
                        for lab in d.get("labels", []) if isinstance(lab, dict) and "r" in lab})
        rel_index = {r: i for i, r in enumerate(names)}
    else:
        rel_index = {r: i for i, r in enumerate(relations)}
    docs = [validate_document(_parse_doc(d, i, rel_index, grow)) for i, d in enumerate(raw_docs)]
    rels = [None] * len(rel_index)
    for r, i in rel_index.items():
        rels[i] = r
    return Corpus(docs, rels)


def load_corpus(path, relations=None, parses=None):
    with open(path) as fh:
        corpus = parse_corpus(json.load(fh), relations)
    if parses is not None:
        corpus = attach_parses(corpus, load_parses(parses))
    return corpus


def document_to_json(doc, relations):
    vertex = [[{"name": m.name or m.surface, "sent_id": m.sent_id, "pos": [m.start, m.end], "type": e.type}
               for m in e.mentions] for e in doc.entities]
    labels = [{"h": f.head, "t": f.tail, "r": relations[f.relation], "evidence": sorted(f.evidence)}
              for f in doc.facts]
    return {"title": doc.doc_id, "sents": [list(s) for s in doc.sentences],
            "vertexSet": vertex, "labels": labels}


def dump_corpus(corpus, path):
    with open(path, "w") as fh:
        json.dump([document_to_json(d, corpus.relations) for d in corpus], fh)


# parse sidecar ------------------------------------------------------------------

def load_parses(path):
    """Read a line-delimited parse sidecar into ``{doc_id: ParseAnnotation}``."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            toks = rec["tokens"]
            out[rec["doc_id"]] = ParseAnnotation(
                tuple(t["pos"] for t in toks), tuple(t["dep"] for t in toks),
                tuple(int(t["head"]) for t in toks), tuple(t["lower"] for t in toks))
    return out


def dump_parses(parses, path):
    with open(path, "w") as fh:
        for doc_id, p in parses.items():
            toks = [{"pos": a, "dep": b, "head": c, "lower": d}
                    for a, b, c, d in zip(p.pos, p.dep, p.head, p.lower)]
            fh.write(json.dumps({"doc_id": doc_id, "tokens": toks}) + "\n")


def attach_parses(corpus, parses):
    docs = []
    for d in corpus:
        p = parses.get(d.doc_id)
        if p is not None:
            n = d.n_tokens
            if len(p) != n:
                raise ValidationError(f"{d.doc_id}: parse has {len(p)} tokens, document has {n}")
            if any(not 0 <= h < n for h in p.head):
                raise ValidationError(f"{d.doc_id}: parse head index out of range")
        docs.append(replace(d, parse=p))
    return Corpus(docs, corpus.relations)


# statistics ------------------------------------------------------------------------

@dataclass(frozen=True)
class Stats:
    docs: int
    anaphors: float
    mentions: float
    entities: float
    triples: float
    sentences: float


def corpus_stats(corpus, anaphors=None):
    """Per-document averages; ``anaphors`` is one anaphor list per document (or None)."""
    docs = list(corpus)
    if not docs:
        raise EmptyCorpusError("corpus_stats on an empty corpus")
    n = len(docs)
    n_ana = 0 if anaphors is None else sum(len(a) for a in anaphors)
    return Stats(
        docs=n,
        anaphors=n_ana / n,
        mentions=sum(len(e.mentions) for d in docs for e in d.entities) / n,
        entities=sum(len(d.entities) for d in docs) / n,
        triples=sum(len(d.facts) for d in docs) / n,
        sentences=sum(len(d.sentences) for d in docs) / n,
    )


def format_stats(named_stats):
    """Plain-text table, one column per (name, Stats)."""
    rows = [("#Docs", "docs", "{:,}"), ("Avg. #Anaphors", "anaphors", "{:.1f}"),
            ("Avg. #Mentions", "mentions", "{:.1f}"), ("Avg. #Entities", "entities", "{:.1f}"),
            ("Avg. #Triples", "triples", "{:.1f}"), ("Avg. #Sentences", "sentences", "{:.1f}")]
    names = [n for n, _ in named_stats]
    width = max(16, *(len(n) + 2 for n in names))
    lines = ["Dataset".ljust(16) + "".join(n.rjust(width) for n in names)]
    for label, attr, fmt in rows:
        lines.append(label.ljust(16) + "".join(fmt.format(getattr(s, attr)).rjust(width)
                                              for _, s in named_stats))
    return "\n".join(lines)


# entity markers ---------------------------------------------------------------------

MARKER = "*"


@dataclass
class MarkedDocument:
    tokens: list
    is_marker: np.ndarray
    mention_start_index: dict  # (entity index, mention index) -> opening marker position
    mention_end_index: dict  # (entity index, mention index) -> closing marker position
    orig_to_marked: np.ndarray
    marked_to_orig: np.ndarray  # -1 at markers
    sent_of: np.ndarray  # sentence id of every marked position
    n_sentences: int = 0
    doc_id: str = ""

    def __len__(self):
        return len(self.tokens)

    def sentence_matrix(self):
        """(marked length, n_sentences) 0/1 assignment of positions to sentences."""
        m = np.zeros((len(self.tokens), self.n_sentences))
        m[np.arange(len(self.tokens)), self.sent_of] = 1.0
        return m

    def strip(self):
        return [t for t, mk in zip(self.tokens, self.is_marker) if not mk]


def mark_entities(doc):
    """Insert a marker before and after every mention.

    Markers at the same boundary are ordered: closings before openings;
    closings innermost first; openings outermost first (earlier start, then
    longer span), so nested spans stay properly bracketed.
    """
    opens, closes = {}, {}
    offsets = doc.sentence_offsets()
    for ei, ent in enumerate(doc.entities):
        for mi, m in enumerate(ent.mentions):
            key = (ei, mi)
            a, b = offsets[m.sent_id] + m.start, offsets[m.sent_id] + m.end
            opens.setdefault(a, []).append((a, b, key))
            closes.setdefault(b, []).append((a, b, key))
    flat = doc.tokens()
    sent_ids = np.repeat(np.arange(len(doc.sentences)), [len(s) for s in doc.sentences])
    tokens, is_marker, back, sent_of = [], [], [], []
    start_index, end_index = {}, {}
    o2m = np.zeros(len(flat), dtype=int)

    def emit_boundary(pos):
        for a, b, key in sorted(closes.get(pos, []), key=lambda x: (-x[0], -x[2][0], -x[2][1])):
            end_index[key] = len(tokens)
            tokens.append(MARKER), is_marker.append(True), back.append(-1)
            sent_of.append(doc.entities[key[0]].mentions[key[1]].sent_id)
        for a, b, key in sorted(opens.get(pos, []), key=lambda x: (x[0], -x[1], x[2])):
            start_index[key] = len(tokens)
            tokens.append(MARKER), is_marker.append(True), back.append(-1)
            sent_of.append(doc.entities[key[0]].mentions[key[1]].sent_id)

    for i, tok in enumerate(flat):
        emit_boundary(i)
        o2m[i] = len(tokens)
        tokens.append(tok), is_marker.append(False), back.append(i), sent_of.append(sent_ids[i])
    emit_boundary(len(flat))
    return MarkedDocument(tokens, np.array(is_marker, dtype=bool), start_index, end_index, o2m,
                          np.array(back, dtype=int), np.array(sent_of, dtype=int),
                          len(doc.sentences), doc.doc_id)


# vocabulary --------------------------------------------------------------------------

PAD, UNK, MARK = "<pad>", "<unk>", "<marker>"


@dataclass
class Vocabulary:
    itos: list
    stoi: dict = field(init=False)

    def __post_init__(self):
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    @property
    def marker_id(self):
        return self.stoi[MARK]

    def id(self, token):
        return self.stoi.get(token, self.stoi[UNK])

    def encode(self, marked):
        """Token ids for a MarkedDocument; markers get the reserved id, never a text id."""
        return np.array([self.marker_id if mk else self.id(t)
                         for t, mk in zip(marked.tokens, marked.is_marker)], dtype=np.int64)


def build_vocab(corpus, min_count=1):
    counts = Counter(t for d in corpus for s in d.sentences for t in s)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD, UNK, MARK] + kept)
