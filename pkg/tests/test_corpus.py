import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anaphor_re import synthetic
from anaphor_re.corpus import (MARKER, Corpus, CorpusFormatError, Document, EmptyCorpusError, Entity, Mention,
                               ValidationError, build_vocab, corpus_stats, document_to_json, dump_corpus,
                               dump_parses, format_stats, load_corpus, mark_entities, parse_corpus)


def raw_doc(title="d", sents=(("A", "b", "C", "."),), vertex=None, labels=()):
    vertex = vertex if vertex is not None else [[{"name": "A", "sent_id": 0, "pos": [0, 1], "type": "X"}],
                                                [{"name": "C", "sent_id": 0, "pos": [2, 3], "type": "Y"}]]
    return {"title": title, "sents": [list(s) for s in sents], "vertexSet": vertex, "labels": list(labels)}


def test_empty_array_gives_empty_corpus():
    assert len(parse_corpus([])) == 0


def test_mention_past_sentence_end_is_rejected():
    bad = raw_doc(vertex=[[{"sent_id": 0, "pos": [2, 9]}]])
    with pytest.raises(ValidationError):
        parse_corpus([bad])


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("sents"), "sents"),
    (lambda d: d["vertexSet"][0][0].pop("pos"), "vertexSet[0][0].pos"),
    (lambda d: d["labels"].append({"h": 0, "t": 1}), "labels[0].r"),
])
def test_format_errors_name_the_field(mutate, field):
    d = raw_doc()
    mutate(d)
    with pytest.raises(CorpusFormatError) as e:
        parse_corpus([d])
    assert field in str(e.value) and "d" in str(e.value)


@pytest.mark.parametrize("label", [{"h": 0, "t": 0, "r": "P1"}, {"h": 0, "t": 5, "r": "P1"},
                                   {"h": 0, "t": 1, "r": "P1", "evidence": [3]}])
def test_fact_invariants(label):
    with pytest.raises(ValidationError):
        parse_corpus([raw_doc(labels=[label])])


def test_fixed_relation_vocab_rejects_unknown():
    with pytest.raises(CorpusFormatError):
        parse_corpus([raw_doc(labels=[{"h": 0, "t": 1, "r": "P9"}])], relations=["P1"])


def test_relation_vocab_sorted():
    c = parse_corpus([raw_doc(labels=[{"h": 0, "t": 1, "r": "P7"}, {"h": 1, "t": 0, "r": "P2"}])])
    assert c.relations == ["P2", "P7"]


def test_mentions_sorted_within_entity():
    d = raw_doc(sents=(("A", "x", "A"), ("A",)),
                vertex=[[{"sent_id": 1, "pos": [0, 1]}, {"sent_id": 0, "pos": [2, 3]}, {"sent_id": 0, "pos": [0, 1]}]])
    ms = parse_corpus([d])[0].entities[0].mentions
    assert [(m.sent_id, m.start) for m in ms] == [(0, 0), (0, 2), (1, 0)]


def test_round_trip_with_parses(tmp_path):
    corpus = synthetic.relation_corpus(12, seed=3)
    dump_corpus(corpus, tmp_path / "c.json")
    dump_parses({d.doc_id: d.parse for d in corpus}, tmp_path / "p.jsonl")
    again = load_corpus(tmp_path / "c.json", parses=tmp_path / "p.jsonl")
    assert again.relations == sorted(again.relations)
    # relation ids may be re-sorted; compare through names
    as_json = lambda c: [document_to_json(d, c.relations) for d in c]
    assert as_json(again) == as_json(corpus)
    assert [d.parse for d in again] == [d.parse for d in corpus]
    dump_corpus(again, tmp_path / "c2.json")
    assert load_corpus(tmp_path / "c2.json").documents == load_corpus(tmp_path / "c.json").documents


def test_parse_length_mismatch(tmp_path):
    corpus = synthetic.relation_corpus(2, seed=1)
    dump_corpus(corpus, tmp_path / "c.json")
    d0 = corpus[0]
    p = d0.parse
    short = type(p)(p.pos[:-1], p.dep[:-1], p.head[:-1], p.lower[:-1])
    dump_parses({d0.doc_id: short}, tmp_path / "p.jsonl")
    with pytest.raises(ValidationError):
        load_corpus(tmp_path / "c.json", parses=tmp_path / "p.jsonl")


def _doc(sentences, spans, facts=()):
    ents = tuple(Entity(i, tuple(Mention(s, a, b, "", "") for s, a, b in ms), "T") for i, ms in enumerate(spans))
    return Document("x", tuple(tuple(s) for s in sentences), ents, tuple(facts))


def test_stats_hand_computed():
    d1 = _doc([["a", "b"], ["c"]], [[(0, 0, 1)], [(0, 1, 2), (1, 0, 1)]])
    d2 = _doc([["a", "b", "c"]], [[(0, 0, 1)], [(0, 2, 3)], [(0, 1, 2)]])
    s = corpus_stats(Corpus([d1, d2], []), anaphors=[[1, 2, 3], [4]])
    assert (s.docs, s.anaphors, s.mentions, s.entities, s.sentences) == (2, 2.0, 3.0, 2.5, 1.5)
    one = corpus_stats(Corpus([_doc([["a", "b"]], [[(0, 0, 1)], [(0, 1, 2)]])], []))
    assert one.mentions == 2.0
    assert "Avg. #Mentions" in format_stats([("toy", s)])


def test_stats_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        corpus_stats(Corpus([], []))


# markers ----------------------------------------------------------------------------

def test_marker_examples():
    m = mark_entities(_doc([["w", "x", "y"]], [[(0, 0, 1)]]))
    assert m.tokens[:3] == [MARKER, "w", MARKER] and m.mention_start_index[(0, 0)] == 0
    m = mark_entities(_doc([["a", "b", "c", "d"]], [[(0, 0, 1)], [(0, 2, 4)]]))
    assert m.tokens == ["*", "a", "*", "b", "*", "c", "d", "*"]


def _check_marked(doc):
    m = mark_entities(doc)
    n_mentions = sum(len(e.mentions) for e in doc.entities)
    assert int(m.is_marker.sum()) == 2 * n_mentions
    assert m.strip() == doc.tokens()
    # orig <-> marked maps are mutually inverse on text positions
    assert np.array_equal(m.marked_to_orig[m.orig_to_marked], np.arange(doc.n_tokens))
    assert np.all(m.is_marker == (m.marked_to_orig < 0))
    offs = doc.sentence_offsets()
    for (ei, mi), s in m.mention_start_index.items():
        mm = doc.entities[ei].mentions[mi]
        e = m.mention_end_index[(ei, mi)]
        a, b = offs[mm.sent_id] + mm.start, offs[mm.sent_id] + mm.end
        assert list(m.marked_to_orig[s + 1:e][~m.is_marker[s + 1:e]]) == list(range(a, b))
    return m


def test_markers_exhaustive_two_mentions_on_six_tokens():
    spans = [(a, b) for a in range(6) for b in range(a + 1, 7)]
    toks = [f"t{i}" for i in range(6)]
    for s1, s2 in itertools.product(spans, repeat=2):
        for same_entity in (False, True):
            ents = [[(0, *s1), (0, *s2)]] if same_entity else [[(0, *s1)], [(0, *s2)]]
            if same_entity and s1 == s2:
                continue
            m = _check_marked(_doc([toks], ents))
            (a1, b1), (a2, b2) = s1, s2
            crossing = a1 < a2 < b1 < b2 or a2 < a1 < b2 < b1
            if crossing:
                continue
            # nested or disjoint spans must come out properly bracketed
            events = sorted([(p, "o", k) for k, p in m.mention_start_index.items()] +
                            [(p, "c", k) for k, p in m.mention_end_index.items()])
            stack = []
            for _, kind, key in events:
                if kind == "o":
                    stack.append(key)
                else:
                    assert stack.pop() == key, (s1, s2, m.tokens)
            assert not stack


def test_nested_shared_start_outer_first():
    m = mark_entities(_doc([["a", "b", "c"]], [[(0, 0, 1)], [(0, 0, 3)]]))
    assert m.mention_start_index[(1, 0)] < m.mention_start_index[(0, 0)]
    assert m.mention_end_index[(0, 0)] < m.mention_end_index[(1, 0)]
    assert m.tokens == ["*", "*", "a", "*", "b", "c", "*"]


def test_marker_is_deterministic():
    d = synthetic.relation_corpus(1, seed=9)[0]
    assert mark_entities(d).tokens == mark_entities(d).tokens


@given(st.integers(0, 10_000))
def test_marker_invariants_random_docs(seed):
    doc, _ = synthetic.random_document(np.random.default_rng(seed))
    _check_marked(doc)


# vocabulary -------------------------------------------------------------------------

def test_vocab_examples():
    c = Corpus([_doc([["a", "a", "b"]], [[(0, 0, 1)]])], [])
    v = build_vocab(c, 1)
    assert len(v) == 5 and v.id("a") != v.id("b") and v.id("zzz") == v.id("<unk>")
    assert build_vocab(c, 2).id("b") == v.id("<unk>")


def test_vocab_independent_of_doc_order():
    c = synthetic.relation_corpus(8, seed=4)
    rev = Corpus(list(reversed(c.documents)), c.relations)
    assert build_vocab(c).itos == build_vocab(rev).itos


def test_literal_asterisk_not_confused_with_marker():
    c = Corpus([_doc([["*", "x"]], [[(0, 1, 2)]])], [])
    v = build_vocab(c)
    ids = v.encode(mark_entities(c[0]))
    assert ids[0] == v.id("*") != v.marker_id
    assert list(ids[1:]) == [v.marker_id, v.id("x"), v.marker_id]
