"""Finite-difference gradient suite over every differentiable operation and the full loss."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .corpus import Corpus, Document, Entity, Mention, ParseAnnotation, RelationFact, build_vocab
from .model import Model, ModelConfig, prepare
from .network import dynamic_adjacency, gcn_layer
from .objectives import atl_loss_batch, document_losses, evidence_loss
from .rng import stream

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    seeds: int

    @property
    def passed(self):
        return self.max_error < TOLERANCE


def _weighted(y, rng):
    """Scalar probe: random-weighted sum, so every output coordinate matters."""
    return ag.sum(y * rng.normal(size=y.shape))


def _unary_cases():
    """(name, input shape, fn(x, rng) -> scalar)."""
    return [
        ("add", (3, 4), lambda x, r: _weighted(x + ag.Tensor(r.normal(size=(4,))), r)),
        ("sub", (3, 4), lambda x, r: _weighted(ag.Tensor(r.normal(size=(3, 1))) - x, r)),
        ("mul", (3, 4), lambda x, r: _weighted(x * x, r)),
        ("div", (3, 4), lambda x, r: _weighted(x / (ag.exp(x) + 1.0), r)),
        ("scale", (5,), lambda x, r: _weighted(ag.scale(x, 2.5), r)),
        ("tanh", (3, 4), lambda x, r: _weighted(ag.tanh(x), r)),
        ("relu", (3, 4), lambda x, r: _weighted(ag.relu(x), r)),
        ("exp", (3, 4), lambda x, r: _weighted(ag.exp(x), r)),
        ("log", (3, 4), lambda x, r: _weighted(ag.log(ag.exp(x) + 0.5), r)),
        ("sqrt", (3, 4), lambda x, r: _weighted(ag.sqrt(x * x + 1.0), r)),
        ("clamp_min", (3, 4), lambda x, r: _weighted(ag.clamp_min(x, 0.05), r)),
        ("matmul", (3, 4), lambda x, r: _weighted(x @ ag.Tensor(r.normal(size=(4, 2))), r)),
        ("matmul_rhs", (4, 2), lambda x, r: _weighted(ag.Tensor(r.normal(size=(3, 4))) @ x, r)),
        ("matmul_batched", (2, 3, 4), lambda x, r: _weighted(x @ ag.transpose(x, (0, 2, 1)), r)),
        ("transpose", (3, 4), lambda x, r: _weighted(ag.transpose(x), r)),
        ("reshape", (3, 4), lambda x, r: _weighted(ag.reshape(x, (2, 6)), r)),
        ("concat", (3, 4), lambda x, r: _weighted(ag.concat([x, ag.tanh(x)], axis=-1), r)),
        ("stack", (3, 4), lambda x, r: _weighted(ag.stack([x, x * x]), r)),
        ("slice_rows", (5, 3), lambda x, r: _weighted(ag.slice_rows(x, 1, 4), r)),
        ("slice_cols", (3, 5), lambda x, r: _weighted(ag.slice_cols(x, 2, 5), r)),
        ("take_rows", (5, 3), lambda x, r: _weighted(ag.take_rows(x, [[0, 2], [2, 4]]), r)),
        ("embedding", (6, 3), lambda x, r: _weighted(ag.embedding(x, np.array([1, 1, 5, 0])), r)),
        ("sum", (3, 4), lambda x, r: _weighted(ag.sum(x, axis=0), r)),
        ("mean", (3, 4), lambda x, r: _weighted(ag.mean(x, axis=1, keepdims=True), r)),
        ("softmax", (3, 5), lambda x, r: _weighted(ag.softmax(x, axis=-1), r)),
        ("softmax_masked", (3, 5), lambda x, r: _weighted(
            ag.softmax(x + np.where(np.arange(5) % 2, 0.0, -np.inf), axis=1), r)),
        ("logsumexp", (3, 5), lambda x, r: _weighted(ag.logsumexp(x, axis=0), r)),
        ("layer_norm", (3, 6), lambda x, r: _weighted(
            ag.layer_norm(x, ag.Tensor(r.normal(size=6)), ag.Tensor(r.normal(size=6))), r)),
        ("layer_norm_gamma", (6,), lambda x, r: _weighted(
            ag.layer_norm(ag.Tensor(r.normal(size=(3, 6))), x, ag.Tensor(np.zeros(6))), r)),
    ]


def _graph_case(name, rng):
    n, d, U, heads = 5, 4, 3, 2
    mats = [(rng.random((n, n)) < 0.4).astype(float) for _ in range(U)]
    mats = [np.triu(m, 1) + np.triu(m, 1).T for m in mats]
    wq = ag.Tensor(rng.normal(size=(d, U * heads * d)))
    wk = ag.Tensor(rng.normal(size=(d, U * heads * d)))
    w = ag.Tensor(rng.normal(size=(d, d)) * 0.5)
    b = ag.Tensor(rng.normal(size=d))
    probe = rng.normal(size=(n, d))
    if name == "dynamic_adjacency":
        return (n, d), lambda x, r: ag.sum(dynamic_adjacency(x, mats, wq, wk, heads) @ ag.Tensor(probe))
    return (n, d), lambda x, r: ag.sum(gcn_layer(x, dynamic_adjacency(x, mats, wq, wk, heads), w, b) * probe)


def _loss_case(name, rng):
    if name == "atl_loss":
        labels = (rng.random((4, 5)) < 0.3).astype(float)
        labels[:, -1] = 0
        return (4, 5), lambda x, r: ag.sum(atl_loss_batch(x, labels))
    v = rng.dirichlet(np.ones(4), size=3)
    return (3, 4), lambda x, r: evidence_loss(ag.softmax(x, axis=-1), v)


def op_checks(seeds=20, step=STEP):
    results = []
    for name, shape, fn in _unary_cases():
        worst = 0.0
        for s in range(seeds):
            r = stream(s, "gradcheck", len(results))
            x = ag.Tensor(r.normal(size=shape))
            probe_seed = int(r.integers(2 ** 31))
            worst = max(worst, ag.grad_check(lambda t: fn(t, np.random.default_rng(probe_seed)), x, step))
        results.append(CheckResult(name, worst, seeds))
    for name, builder in (("dynamic_adjacency", _graph_case), ("gcn_layer", _graph_case),
                          ("atl_loss", _loss_case), ("evidence_loss", _loss_case)):
        worst = 0.0
        for s in range(seeds):
            r = stream(s, "gradcheck-" + name)
            shape, fn = builder(name, r)
            worst = max(worst, ag.grad_check(lambda t: fn(t, r), ag.Tensor(r.normal(size=shape)), step))
        results.append(CheckResult(name, worst, seeds))
    return results


def toy_corpus():
    """Two short documents, two and three entities, with parses and evidence."""
    def doc(doc_id, sents, ents, facts, pos):
        flat = [t for s in sents for t in s]
        heads = list(range(len(flat)))
        dep = ["dep"] * len(flat)
        for i, t in enumerate(flat):
            if t == "the":
                dep[i], heads[i] = "det", i + 1
        return Document(doc_id, tuple(tuple(s) for s in sents),
                        tuple(Entity(i, tuple(Mention(s, a, b, " ".join(sents[s][a:b]), " ".join(sents[s][a:b]))
                                              for s, a, b in ms), "T") for i, ms in enumerate(ents)),
                        tuple(RelationFact(h, t, r, frozenset(ev)) for h, t, r, ev in facts),
                        ParseAnnotation(tuple(pos), tuple(dep), tuple(heads), tuple(t.lower() for t in flat)))

    d1 = doc("toy-1", [["Lena", "founded", "Arco", "."], ["She", "visited", "the", "market", "."]],
             [[(0, 0, 1)], [(0, 2, 3)]], [(0, 1, 0, {0})],
             ["PROPN", "VERB", "PROPN", "PUNCT", "PRON", "VERB", "DET", "NOUN", "PUNCT"])
    d2 = doc("toy-2", [["Tomas", "slept", "."], ["He", "joined", "Brix", "in", "Vela", "."]],
             [[(0, 0, 1)], [(1, 2, 3)], [(1, 4, 5)]], [(0, 1, 1, {0, 1}), (1, 2, 0, {1})],
             ["PROPN", "VERB", "PUNCT", "PRON", "VERB", "PROPN", "ADP", "PROPN", "PUNCT"])
    return Corpus([d1, d2], ["R0", "R1"])


def tiny_model(corpus, seed=0, **overrides):
    cfg = dict(hidden=8, layers=2, heads=2, max_len=32, ffn=12, dropout=0.0, k_att=3,
               gcn_layers=2, iterations=2, graph_heads=2, groups=2)
    cfg.update(overrides)
    return Model(ModelConfig(**cfg), build_vocab(corpus), corpus.relations, rng=stream(seed, "init"))


def end_to_end_check(seed, beta=0.1, coords_per_tensor=3, step=STEP, **overrides):
    """Max relative error of d(total batch loss)/d(parameters) on the toy batch."""
    corpus = toy_corpus()
    model = tiny_model(corpus, seed, **overrides)
    feats = [prepare(d, model.vocab, model.n_relations) for d in corpus]

    def loss():
        total = None
        for f in feats:
            _, out = model.forward(f)
            term = ag.scale(document_losses(out, f, beta)[2], 1.0 / len(feats))
            total = term if total is None else total + term
        return total

    names = list(model.params)
    params = [model.params[k] for k in names]
    # attention is invariant to the key bias, so its exact gradient is zero and
    # finite differences only see roundoff (~1e-11); leave those coordinates out
    d = model.cfg.hidden
    exclude = {i: range(d, 2 * d) for i, k in enumerate(names) if k.endswith(".qkv.b")}
    return ag.params_grad_check(loss, params, step, coords_per_tensor, stream(seed, "gradcheck-coords"), exclude)


def run_suite(seeds=20, end_to_end_seeds=None, log=print):
    t0 = time.time()
    results = op_checks(seeds)
    n_e2e = seeds if end_to_end_seeds is None else end_to_end_seeds
    worst = max(end_to_end_check(s) for s in range(n_e2e))
    results.append(CheckResult("end_to_end_loss", worst, n_e2e))
    worst = max(end_to_end_check(s, use_graph=False) for s in range(max(1, n_e2e // 4)))
    results.append(CheckResult("end_to_end_loss_no_graph", worst, max(1, n_e2e // 4)))
    for r in results:
        log(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<26} max_rel_err={r.max_error:.3e}  seeds={r.seeds}")
    log(f"gradcheck finished in {time.time() - t0:.1f}s")
    return results
