"""Generated corpora with parse annotations, for experiments and tests.

``relation_corpus`` mixes intra-sentence facts ("X founded Y .") with
pronoun-bridged ones ("X arrived early ." ... "she founded Y ."), evidence
annotated. ``bridge_corpus`` expresses every fact only through a sentence
made of pronouns ("he praised her ."), so entity mentions and the relation
cue never share a sentence. ``random_document`` builds structure-only
documents for graph and marker checks.
"""

from __future__ import annotations

import itertools

import numpy as np

from .corpus import Corpus, Document, Entity, Mention, ParseAnnotation, RelationFact, validate_document
from .rng import stream

_ONSETS = ["b", "d", "k", "l", "m", "n", "r", "s", "t", "v"]
_VOWELS = ["a", "e", "i", "o", "u"]

TYPES = ("male", "female", "org", "place")
SUBJECT = {"male": "he", "female": "she", "org": "it"}
OBJECT = {"male": "him", "female": "her", "org": "it"}
TRIGGERS = ["founded", "married", "joined", "visited", "owns", "praised", "funded", "hired"]
FILLER_VERBS = ["arrived", "waited", "spoke", "rested", "smiled", "returned", "slept", "left", "laughed",
                "travelled", "paused", "sang", "worked", "danced"]
FILLER_WORDS = ["early", "late", "quietly", "again", "today", "there", "briefly", "alone",
                "outside", "twice", "slowly", "often", "inside", "yesterday", "calmly", "abroad", "soon", "later"]
NOUNS = ["market", "show", "river", "station", "garden", "bridge", "hall", "museum", "harbor", "tower",
         "road", "forest", "library", "square", "theater", "airport", "castle", "valley", "school", "chapel",
         "stadium", "lake", "temple", "bakery", "factory", "island", "canal", "palace"]
ADJ = ["was", "seemed", "looked", "became"]
STATES = ["busy", "quiet", "old", "new", "crowded", "empty", "closed", "famous", "large", "small", "dark",
          "bright", "cold", "warm", "narrow", "modern"]


def name_pool(kind, n, seed=0):
    """Distinct capitalised pseudo-names; disjoint across ``kind``."""
    rng = stream(seed, "names-" + kind)
    suffix = {"male": "o", "female": "a", "org": "corp", "place": "ville"}[kind]
    out, seen = [], set()
    while len(out) < n:
        syl = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(2))
        name = (syl + suffix).capitalize()
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def _parse_sentence(tokens, tags, offset):
    """Heads: 'the' -> following noun, everything else -> the sentence root."""
    pos, dep, head = [], [], []
    root = next((i for i, t in enumerate(tags) if t == "VERB"), 0)
    for i, (tok, tag) in enumerate(zip(tokens, tags)):
        pos.append(tag)
        if tag == "DET":
            dep.append("det")
            head.append(offset + i + 1)
        elif i == root:
            dep.append("ROOT")
            head.append(offset + i)
        else:
            dep.append({"PRON": "nsubj", "PROPN": "nsubj", "PUNCT": "punct"}.get(tag, "dep"))
            head.append(offset + root)
    return pos, dep, head


class _DocBuilder:
    def __init__(self, doc_id):
        self.doc_id = doc_id
        self.sentences, self.tags = [], []
        self.mentions = {}  # entity key -> list of Mention
        self.facts = []

    def add(self, parts):
        """``parts``: list of (token, tag, entity key or None)."""
        sid = len(self.sentences)
        toks, tags = [], []
        for k, (tok, tag, ent) in enumerate(parts):
            if ent is not None:
                self.mentions.setdefault(ent, []).append(Mention(sid, k, k + 1, tok, tok))
            toks.append(tok)
            tags.append(tag)
        self.sentences.append(toks)
        self.tags.append(tags)
        return sid

    def build(self, entity_order, types, relations):
        index = {e: i for i, e in enumerate(entity_order)}
        entities = tuple(Entity(i, tuple(sorted(self.mentions[e], key=lambda m: (m.sent_id, m.start))),
                                types[e]) for i, e in enumerate(entity_order))
        facts = tuple(RelationFact(index[h], index[t], r, frozenset(ev)) for h, t, r, ev in self.facts)
        pos, dep, head = [], [], []
        off = 0
        for toks, tags in zip(self.sentences, self.tags):
            a, b, c = _parse_sentence(toks, tags, off)
            pos += a
            dep += b
            head += c
            off += len(toks)
        lower = tuple(t.lower() for s in self.sentences for t in s)
        parse = ParseAnnotation(tuple(pos), tuple(dep), tuple(head), lower)
        return validate_document(Document(self.doc_id, tuple(tuple(s) for s in self.sentences), entities,
                                          facts, parse))


TITLES = {"male": "Mr", "female": "Ms", "org": "Firm", "place": "City"}


def _filler(rng, name=None, ent=None, title=False):
    if name is not None:
        head = [(TITLES[ent[0]], "PROPN", None)] if title else []
        return head + [(name, "PROPN", ent), (str(rng.choice(FILLER_VERBS)), "VERB", None),
                       (str(rng.choice(FILLER_WORDS)), "ADV", None), (".", "PUNCT", None)]
    if rng.random() < 0.5:
        return [("the", "DET", None), (str(rng.choice(NOUNS)), "NOUN", None),
                (str(rng.choice(ADJ)), "VERB", None), (str(rng.choice(STATES)), "ADJ", None), (".", "PUNCT", None)]
    return [(str(rng.choice(FILLER_WORDS)).capitalize(), "ADV", None), ("the", "DET", None),
            (str(rng.choice(NOUNS)), "NOUN", None), (str(rng.choice(ADJ)), "VERB", None),
            (str(rng.choice(STATES)), "ADJ", None), (".", "PUNCT", None)]


def relation_corpus(n_docs=32, n_relations=5, seed=0, names_per_type=60, bridge_prob=0.4):
    """Mixed intra-sentence and pronoun-bridged facts; about 200 word types at 32 documents."""
    rng = stream(seed, "synth", n_docs, n_relations)
    pools = {t: name_pool(t, names_per_type) for t in TYPES}
    rel_names = [f"R{i}:{TRIGGERS[i]}" for i in range(n_relations)]
    docs = []
    for di in range(n_docs):
        b = _DocBuilder(f"synth-{seed}-{di}")
        # one entity per pronoun class plus 1-2 places keeps every pronoun unambiguous
        kinds = ["male", "female", "org"] + ["place"] * int(rng.integers(1, 3))
        ents = [(k, str(rng.choice(pools[k]))) for k in kinds]
        ents = list(dict.fromkeys(ents))
        types = {e: e[0] for e in ents}
        intro = {}
        for e in rng.permutation(len(ents)):
            e = ents[e]
            if e[0] != "place" or rng.random() < 0.5:
                intro[e] = b.add(_filler(rng, e[1], e))
        agents = [e for e in ents if e[0] != "place"]
        pairs = [(h, t) for h in agents for t in ents if h != t]
        n_facts = int(rng.integers(1, 4))
        chosen = [pairs[i] for i in rng.choice(len(pairs), size=min(n_facts, len(pairs)), replace=False)]
        for h, t in chosen:
            r = int(rng.integers(n_relations))
            trig = TRIGGERS[r]
            if rng.random() < 0.3:
                b.add(_filler(rng))
            if h in intro and rng.random() < bridge_prob:
                s = b.add([(SUBJECT[h[0]], "PRON", None), (trig, "VERB", None), (t[1], "PROPN", t),
                           (".", "PUNCT", None)])
                ev = {intro[h], s}
            else:
                s = b.add([(h[1], "PROPN", h), (trig, "VERB", None), (t[1], "PROPN", t), (".", "PUNCT", None)])
                ev = {s}
            b.facts.append((h, t, r, ev))
        b.add(_filler(rng))
        order = [e for e in ents if e in b.mentions]
        docs.append(b.build(order, types, rel_names))
    return Corpus(docs, rel_names)


def bridge_corpus(n_docs=64, n_relations=4, seed=0, names_per_type=30, n_fillers=(1, 3), titles=True):
    """Every fact is stated only by a pronoun sentence: "<subj pronoun> <trigger> <obj pronoun> ."

    Each document has one male, one female and one organisation entity, each
    introduced in its own sentence (behind a type word such as "Ms" when
    ``titles``); gold evidence is the two intro sentences
    plus the pronoun sentence. No sentence holds mentions of two entities, so
    every gold triple is inter-sentence.
    """
    rng = stream(seed, "bridge", n_docs, n_relations)
    pools = {t: name_pool(t, names_per_type) for t in ("male", "female", "org")}
    rel_names = [f"R{i}:{TRIGGERS[i]}" for i in range(n_relations)]
    docs = []
    for di in range(n_docs):
        b = _DocBuilder(f"bridge-{seed}-{di}")
        ents = [(k, str(rng.choice(pools[k]))) for k in ("male", "female", "org")]
        types = {e: e[0] for e in ents}
        intro = {}
        for i in rng.permutation(3):
            intro[ents[i]] = b.add(_filler(rng, ents[i][1], ents[i], titles))
        for _ in range(int(rng.integers(n_fillers[0], n_fillers[1] + 1))):
            b.add(_filler(rng))
        pairs = [(h, t) for h, t in itertools.permutations(ents, 2) if not (h[0] == t[0] == "org")]
        pairs = [p for p in pairs if not (p[0][0] == "org" and p[1][0] == "org")]
        # "it ... it" would be ambiguous, so the org appears on at most one side of a fact
        n_facts = int(rng.integers(1, 3))
        chosen = [pairs[i] for i in rng.choice(len(pairs), size=n_facts, replace=False)]
        for h, t in chosen:
            r = int(rng.integers(n_relations))
            s = b.add([(SUBJECT[h[0]], "PRON", None), (TRIGGERS[r], "VERB", None),
                       (OBJECT[t[0]], "PRON", None), (".", "PUNCT", None)])
            b.facts.append((h, t, r, {intro[h], intro[t], s}))
            if rng.random() < 0.5:
                b.add(_filler(rng))
        docs.append(b.build(ents, types, rel_names))
    return Corpus(docs, rel_names)


def random_document(rng, max_entities=8, max_mentions=20, max_anaphors=6, doc_id="rand"):
    """Structure-only document: random sentences, non-overlapping mentions and anaphor spans.

    Returns ``(document, anaphors)``; anaphors are width-1 or width-2 spans
    disjoint from every mention.
    """
    from .graph import DEFINITE, PRONOUN, Anaphor

    n_ent = int(rng.integers(1, max_entities + 1))
    n_ment = int(rng.integers(n_ent, max(n_ent, max_mentions) + 1))
    n_sent = int(rng.integers(1, 6))
    lengths = rng.integers(4, 14, size=n_sent)
    sentences = [[f"w{int(rng.integers(50))}" for _ in range(int(n))] for n in lengths]
    free = [(s, k) for s in range(n_sent) for k in range(int(lengths[s]))]
    order = rng.permutation(len(free))
    taken = set()
    slots = []
    for i in order:
        s, k = free[i]
        if (s, k) not in taken:
            taken.add((s, k))
            slots.append((s, k))
        if len(slots) == n_ment:
            break
    n_ment = len(slots)
    n_ent = min(n_ent, n_ment)
    owner = np.concatenate([np.arange(n_ent), rng.integers(0, n_ent, size=n_ment - n_ent)])
    mentions = [[] for _ in range(n_ent)]
    for (s, k), e in zip(slots, owner):
        mentions[e].append(Mention(s, k, k + 1, sentences[s][k], sentences[s][k]))
    entities = tuple(Entity(i, tuple(sorted(ms, key=lambda m: (m.sent_id, m.start))), "T")
                     for i, ms in enumerate(mentions))
    anaphors = []
    remaining = [(s, k) for s in range(n_sent) for k in range(int(lengths[s])) if (s, k) not in taken]
    rng.shuffle(remaining)
    for s, k in remaining[:int(rng.integers(0, max_anaphors + 1))]:
        if (s, k) in taken:
            continue
        wide = k + 1 < lengths[s] and (s, k + 1) not in taken and rng.random() < 0.3
        taken.add((s, k))
        if wide:
            taken.add((s, k + 1))
        anaphors.append(Anaphor(s, k, k + 2 if wide else k + 1, DEFINITE if wide else PRONOUN,
                                " ".join(sentences[s][k:k + (2 if wide else 1)])))
    doc = Document(doc_id, tuple(tuple(s) for s in sentences), entities, ())
    return validate_document(doc), sorted(anaphors)
