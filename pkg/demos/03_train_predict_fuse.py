"""
Train, predict, fuse
====================

A small generated corpus, a few epochs of training, then threshold predictions
and inference-stage fusion over predicted evidence sentences. Tiny data, so
the numbers are only a smoke signal.
"""

from anaphor_re import synthetic
from anaphor_re.inference import all_triples, evaluate, fusion_scores, predict_corpus, tune_tau
from anaphor_re.train import TrainConfig, train

train_set = synthetic.relation_corpus(32, seed=0)
dev = synthetic.relation_corpus(16, seed=1)
print(train_set.relations)
d = train_set[0]
for s in d.sentences:
    print("  ", " ".join(s))

cfg = TrainConfig(epochs=30, lr_encoder=1e-3, lr_classifier=2e-3, dropout=0.0, eval_every=5)
res = train(train_set, cfg, dev=dev)
print("best dev F1", res.best_dev_f1, "at epoch", res.best_epoch)

preds = predict_corpus(dev, res.model)
print(evaluate(all_triples(preds), dev))

# ISF: the same model scores a pseudo document made of its own evidence sentences
scores = [fusion_scores(doc, res.model, mode="ISF") for doc in dev]
tau = tune_tau(scores, dev)
fused = set().union(*(s.triples(tau) for s in scores))
print("tau", tau, evaluate(fused, dev))
