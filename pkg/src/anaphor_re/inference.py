"""Threshold prediction, evidence selection, pseudo documents, score fusion and metrics."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .corpus import Document, Entity, ParseAnnotation, RelationFact
from .model import prepare

FUSION_MODES = ("none", "ISF", "ISCF")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class DocPrediction:
    doc_id: str
    pairs: np.ndarray  # (P, 2)
    logits: np.ndarray  # (P, |R|+1)
    sentence_dist: np.ndarray  # (P, |S|)

    @property
    def margins(self):
        return self.logits[:, :-1] - self.logits[:, -1:]

    def scores(self):
        """Centred class scores sigmoid(o_r - o_TH) - 1/2; positive iff o_r > o_TH."""
        # tanh form keeps the sign exact for tiny margins
        return 0.5 * np.tanh(0.5 * self.margins)

    def triples(self):
        hit = self.logits[:, :-1] > self.logits[:, -1:]
        return {(self.doc_id, int(self.pairs[i, 0]), int(self.pairs[i, 1]), int(r))
                for i, r in zip(*np.nonzero(hit))}


def predict(doc, model, anaphor_mode="full", rng=None, feats=None):
    """Logits and sentence-importance distributions for every ordered entity pair."""
    if feats is None:
        feats = prepare(doc, model.vocab, model.n_relations, anaphor_mode, rng)
    if len(feats.pairs) == 0:
        return DocPrediction(doc.doc_id, feats.pairs, np.zeros((0, model.n_relations + 1)),
                             np.zeros((0, len(doc.sentences))))
    with ag.no_grad():
        _, out = model.forward(feats)
    p = out.token_weights.values @ feats.sentence_matrix
    return DocPrediction(doc.doc_id, feats.pairs, out.logits.values, p)


def predict_corpus(corpus, model, anaphor_mode="full", threads=1, features=None):
    docs = list(corpus)
    feats = features or [None] * len(docs)
    if threads <= 1:
        return [predict(d, model, anaphor_mode, feats=f) for d, f in zip(docs, feats)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: predict(a[0], model, anaphor_mode, feats=a[1]), zip(docs, feats)))


def all_triples(preds):
    out = set()
    for p in preds:
        out |= p.triples()
    return out


# evidence and pseudo documents ----------------------------------------------------------

def select_evidence(p, threshold=0.2):
    p = np.asarray(p, dtype=np.float64)
    chosen = {int(i) for i in np.nonzero(p >= threshold)[0]}
    return chosen or {int(np.argmax(p))}


def pseudo_document(doc, sentence_ids):
    """Keep the given sentences in document order and re-index everything onto them.

    Entities without a surviving mention are dropped; surviving entities keep
    their original index in ``Entity.entity_id``.
    """
    keep = sorted(set(sentence_ids))
    if not keep or keep[0] < 0 or keep[-1] >= len(doc.sentences):
        raise ValueError(f"sentence ids {sentence_ids} invalid for {len(doc.sentences)} sentences")
    new_sid = {s: i for i, s in enumerate(keep)}
    entities, ent_map = [], {}
    for ei, e in enumerate(doc.entities):
        ms = tuple(replace(m, sent_id=new_sid[m.sent_id]) for m in e.mentions if m.sent_id in new_sid)
        if ms:
            ent_map[ei] = len(entities)
            entities.append(Entity(e.entity_id, ms, e.type))
    facts = tuple(RelationFact(ent_map[f.head], ent_map[f.tail], f.relation,
                               frozenset(new_sid[s] for s in f.evidence if s in new_sid))
                  for f in doc.facts if f.head in ent_map and f.tail in ent_map)
    parse = None
    if doc.parse is not None:
        offs = doc.sentence_offsets()
        old = [offs[s] + k for s in keep for k in range(len(doc.sentences[s]))]
        pos_map = {o: i for i, o in enumerate(old)}
        pr = doc.parse
        parse = ParseAnnotation(tuple(pr.pos[o] for o in old), tuple(pr.dep[o] for o in old),
                                tuple(pos_map.get(pr.head[o], i) for i, o in enumerate(old)),
                                tuple(pr.lower[o] for o in old))
    return Document(doc.doc_id, tuple(doc.sentences[s] for s in keep), tuple(entities), facts, parse)


# fusion --------------------------------------------------------------------------------

def fuse(p_orig, p_pseudo=None, tau=0.0):
    """Blend two score arrays (or scalars): p + p' - tau; missing p' counts as 0."""
    p_orig = np.asarray(p_orig, dtype=np.float64)
    p_pseudo = np.zeros_like(p_orig) if p_pseudo is None else np.asarray(p_pseudo, dtype=np.float64)
    return p_orig + p_pseudo - tau


@dataclass
class FusionScores:
    doc_id: str
    pairs: np.ndarray
    orig: np.ndarray  # (P, |R|) centred scores on D
    pseudo: np.ndarray  # (P, |R|) centred scores on D', 0 when a pair did not survive
    evidence: list  # per pair: selected sentence ids

    def fused(self, tau):
        return fuse(self.orig, self.pseudo, tau)

    def triples(self, tau):
        hit = self.fused(tau) > 0
        return {(self.doc_id, int(self.pairs[i, 0]), int(self.pairs[i, 1]), int(r))
                for i, r in zip(*np.nonzero(hit))}


def fusion_scores(doc, primary, secondary=None, mode="ISF", evidence_threshold=0.2,
                  anaphor_mode="full", pseudo=True):
    """Original-document scores plus per-pair pseudo-document scores.

    ISF scores the pseudo documents with ``primary``; ISCF with ``secondary``.
    Pairs sharing the same selected evidence share one pseudo pass.
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    if mode == "ISCF" and secondary is None:
        raise ValueError("ISCF needs a secondary checkpoint trained without evidence loss")
    base = predict(doc, primary, anaphor_mode)
    orig = base.scores()
    pseudo_scores = np.zeros_like(orig)
    evidence = [select_evidence(p, evidence_threshold) for p in base.sentence_dist]
    if mode != "none" and pseudo and len(base.pairs):
        scorer = secondary if mode == "ISCF" else primary
        groups = {}
        for i, ev in enumerate(evidence):
            groups.setdefault(tuple(sorted(ev)), []).append(i)
        for ev, rows in sorted(groups.items()):
            sub = pseudo_document(doc, ev)
            back = {e.entity_id: k for k, e in enumerate(sub.entities)}
            if len(sub.entities) < 2:
                continue
            sp = predict(sub, scorer, anaphor_mode)
            pos = {(int(h), int(t)): j for j, (h, t) in enumerate(sp.pairs)}
            s_scores = sp.scores()
            for i in rows:
                h, t = int(base.pairs[i, 0]), int(base.pairs[i, 1])
                if h in back and t in back:
                    pseudo_scores[i] = s_scores[pos[(back[h], back[t])]]
    return FusionScores(doc.doc_id, base.pairs, orig, pseudo_scores, [sorted(e) for e in evidence])


def tune_tau(scores, gold, grid=None, train_facts=()):
    """Grid value with the best dev F1; ties go to the smallest tau."""
    grid = np.round(np.arange(-1.0, 1.0 + 1e-9, 0.05), 10) if grid is None else np.asarray(grid, float)
    if len(grid) == 0:
        raise ValueError("tau grid is empty")
    best, best_f1 = None, -1.0
    for tau in sorted(grid):
        triples = set().union(*(s.triples(tau) for s in scores)) if scores else set()
        f1 = evaluate(triples, gold, train_facts)["F1"]
        if f1 > best_f1:
            best, best_f1 = float(tau), f1
    return best


# metrics ---------------------------------------------------------------------------------

def train_fact_names(corpus):
    """(head name, tail name, relation string) for every mention-name combination of every fact."""
    out = set()
    for d in corpus:
        for f in d.facts:
            r = corpus.relations[f.relation]
            for mh in d.entities[f.head].mentions:
                for mt in d.entities[f.tail].mentions:
                    out.add((mh.name or mh.surface, mt.name or mt.surface, r))
    return out


def _prf(n_correct, n_pred, n_gold):
    p = n_correct / n_pred if n_pred else 0.0
    r = n_correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def is_intra(doc, h, t):
    return bool({m.sent_id for m in doc.entities[h].mentions} & {m.sent_id for m in doc.entities[t].mentions})


def evaluate(preds, gold, train_facts=()):
    """Micro P/R/F1, Ign-F1, Intra-F1 and Inter-F1 over (doc_id, h, t, r) triples."""
    docs = {d.doc_id: d for d in gold}
    preds = set(preds)
    unknown = {p[0] for p in preds} - docs.keys()
    if unknown:
        raise ValueError(f"predictions reference documents not in gold: {sorted(unknown)[:5]}")
    gold_t = {(d.doc_id, f.head, f.tail, f.relation) for d in gold for f in d.facts}
    rels = gold.relations
    train_facts = set(train_facts)

    def seen_in_train(tr):
        d = docs[tr[0]]
        r = rels[tr[3]]
        return any((mh.name or mh.surface, mt.name or mt.surface, r) in train_facts
                   for mh in d.entities[tr[1]].mentions for mt in d.entities[tr[2]].mentions)

    p, r, f = _prf(len(preds & gold_t), len(preds), len(gold_t))
    ign_p = {t for t in preds if not seen_in_train(t)}
    ign_g = {t for t in gold_t if not seen_in_train(t)}
    _, _, ign = _prf(len(ign_p & ign_g), len(ign_p), len(ign_g))
    intra_p = {t for t in preds if is_intra(docs[t[0]], t[1], t[2])}
    intra_g = {t for t in gold_t if is_intra(docs[t[0]], t[1], t[2])}
    _, _, f_intra = _prf(len(intra_p & intra_g), len(intra_p), len(intra_g))
    inter_p, inter_g = preds - intra_p, gold_t - intra_g
    _, _, f_inter = _prf(len(inter_p & inter_g), len(inter_p), len(inter_g))
    return {"F1": f, "Ign_F1": ign, "Intra_F1": f_intra, "Inter_F1": f_inter, "P": p, "R": r,
            "n_pred": len(preds), "n_gold": len(gold_t)}


# files -------------------------------------------------------------------------------------

def write_predictions(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def prediction_records(preds, corpus):
    """Leaderboard-style rows for raw (un-fused) predictions."""
    out = []
    for p in preds:
        margins = p.margins
        for i, (h, t) in enumerate(p.pairs):
            ev = sorted(select_evidence(p.sentence_dist[i])) if p.sentence_dist.shape[1] else []
            for r in np.nonzero(margins[i] > 0)[0]:
                out.append({"title": p.doc_id, "h_idx": int(h), "t_idx": int(t),
                            "r": corpus.relations[r], "score": round(float(sigmoid(margins[i, r])), 12),
                            "evidence": ev})
    return out


def fusion_records(scores, tau, corpus):
    out = []
    for s in scores:
        fused = s.fused(tau)
        for i, (h, t) in enumerate(s.pairs):
            for r in np.nonzero(fused[i] > 0)[0]:
                out.append({"title": s.doc_id, "h_idx": int(h), "t_idx": int(t),
                            "r": corpus.relations[r], "score": round(float(fused[i, r]), 12),
                            "evidence": s.evidence[i]})
    return out


def read_predictions(path, corpus):
    """Triples from a predictions file, relation strings mapped through ``corpus.relations``."""
    index = {r: i for i, r in enumerate(corpus.relations)}
    out = set()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.add((rec["title"], int(rec["h_idx"]), int(rec["t_idx"]), index[rec["r"]]))
    return out
