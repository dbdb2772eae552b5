"""Shared hand-built fixtures."""

from anaphor_re.corpus import Corpus, Document, Entity, Mention, ParseAnnotation, dump_corpus, dump_parses


def walmart_doc():
    """Two-sentence example; "There" is tagged ADV (an expletive, not a referring pronoun)."""
    s1 = ["There", "is", "a", "Walmart", "next", "to", "Tom", "'s", "house", "."]
    s2 = ["He", "works", "at", "the", "market", "."]
    pos = ["ADV", "VERB", "DET", "PROPN", "ADV", "ADP", "PROPN", "PART", "NOUN", "PUNCT",
           "PRON", "VERB", "ADP", "DET", "NOUN", "PUNCT"]
    dep = ["expl", "ROOT", "det", "nsubj", "advmod", "prep", "poss", "case", "pobj", "punct",
           "nsubj", "ROOT", "prep", "det", "pobj", "punct"]
    head = [1, 1, 3, 1, 1, 4, 8, 6, 5, 1, 11, 11, 11, 14, 12, 11]
    flat = s1 + s2
    ents = (Entity(0, (Mention(0, 3, 4, "Walmart", "Walmart"),), "ORG"),
            Entity(1, (Mention(0, 6, 7, "Tom", "Tom"),), "PER"))
    return Document("walmart", (tuple(s1), tuple(s2)), ents, (),
                    ParseAnnotation(tuple(pos), tuple(dep), tuple(head), tuple(t.lower() for t in flat)))


def write_corpus(corpus, directory, stem):
    """Dump corpus JSON and parse sidecar; returns (corpus path, parses path)."""
    c, p = directory / f"{stem}.json", directory / f"{stem}.parses.jsonl"
    dump_corpus(corpus, c)
    dump_parses({d.doc_id: d.parse for d in corpus if d.parse is not None}, p)
    return c, p


def walmart_corpus():
    return Corpus([walmart_doc()], [])


# randomized hand-tagged sentences and a literal reading of the two anaphor rules ---------

POS = ["PRON", "DET", "NOUN", "VERB", "ADJ", "PROPN", "PUNCT"]


def random_tagged_doc(rng):
    n_sent = int(rng.integers(1, 4))
    sents, pos, dep, lower = [], [], [], []
    for _ in range(n_sent):
        n = int(rng.integers(2, 9))
        s = []
        for _ in range(n):
            p = POS[rng.integers(len(POS))]
            word = "the" if p == "DET" and rng.random() < 0.8 else ("a" if p == "DET" else f"w{rng.integers(9)}")
            s.append(word.capitalize() if rng.random() < 0.2 else word)
            pos.append(p)
            dep.append("det" if p == "DET" and rng.random() < 0.9 else "dep")
            lower.append(s[-1].lower())
        sents.append(tuple(s))
    total = len(pos)
    head = [int(rng.integers(total)) for _ in range(total)]
    # a random mention on a random token, sometimes
    ents = ()
    if rng.random() < 0.5:
        si = int(rng.integers(n_sent))
        k = int(rng.integers(len(sents[si])))
        ents = (Entity(0, (Mention(si, k, k + 1, sents[si][k], sents[si][k]),), "T"),)
    return Document("r", tuple(sents), ents, (), ParseAnnotation(tuple(pos), tuple(dep), tuple(head), tuple(lower)))


def oracle_anaphors(doc, exclude=True):
    sid, local = [], []
    for s, sent in enumerate(doc.sentences):
        for k in range(len(sent)):
            sid.append(s)
            local.append(k)
    mention_tokens = set()
    for e in doc.entities:
        for m in e.mentions:
            mention_tokens |= {(m.sent_id, k) for k in range(m.start, m.end)}
    out = set()
    for i in range(len(sid)):
        cands = []
        if doc.parse.pos[i] == "PRON":
            cands.append((i, i))
        h = doc.parse.head[i]
        if doc.parse.dep[i] == "det" and doc.parse.lower[i] == "the" and h > i and sid[h] == sid[i]:
            cands.append((i, h))
        for a, b in cands:
            toks = {(sid[j], local[j]) for j in range(a, b + 1)}
            if exclude and toks & mention_tokens:
                continue
            out.add((sid[a], local[a], local[b] + 1))
    return out
