"""AdamW training loop with warmup/decay schedule, clipping and best-dev retention."""

from __future__ import annotations

import configparser
import json
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autograd as ag
from .corpus import build_vocab
from .inference import all_triples, evaluate, predict_corpus
from .model import Model, ModelConfig, prepare, save_checkpoint
from .objectives import document_losses
from .rng import stream

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    lr_encoder: float = 5e-5
    lr_classifier: float = 1e-4
    batch_size: int = 4
    warmup_ratio: float = 0.06
    beta: float = 0.1
    seed: int = 42
    use_graph: bool = True
    use_esm: bool = True
    anaphor_mode: str = "full"
    exclude_mention_overlap: bool = True
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    min_count: int = 1
    eval_every: int = 1
    # encoder / network shape
    hidden: int = 64
    layers: int = 2
    heads: int = 2
    max_len: int = 512
    ffn: int = 128
    dropout: float = 0.1
    k_att: int = 3
    gcn_layers: int = 2
    iterations: int = 2
    graph_heads: int = 2
    groups: int = 2
    shared_bias: bool = True

    def __post_init__(self):
        if self.lr_encoder < 0 or self.lr_classifier < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.anaphor_mode not in ("full", "no-anaphor", "random-replace"):
            raise ValueError(f"unknown anaphor_mode {self.anaphor_mode!r}")

    @property
    def effective_beta(self):
        return self.beta if self.use_esm else 0.0

    def model_config(self):
        return ModelConfig(self.hidden, self.layers, self.heads, self.max_len, self.ffn, self.dropout,
                           self.k_att, self.gcn_layers, self.iterations, self.graph_heads, self.groups,
                           self.use_graph, self.shared_bias)


def coerce_config(values, cls=TrainConfig):
    """Build ``cls`` from string/JSON values, converting to each field's declared type."""
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for k, v in values.items():
        if k not in types:
            raise ValueError(f"unknown config key {k!r}")
        t = types[k]
        if isinstance(v, str):
            if t in ("bool", bool):
                if v.strip().lower() not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                    raise ValueError(f"config key {k!r}: not a boolean: {v!r}")
                v = v.strip().lower() in ("true", "1", "yes", "on")
            elif t in ("int", int):
                v = int(v)
            elif t in ("float", float):
                v = float(v)
        out[k] = v
    return cls(**out)


def read_config_file(path):
    """Flat ``key = value`` file (an optional ``[section]`` header is ignored)."""
    with open(path) as fh:
        text = fh.read()
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text if text.lstrip().startswith("[") else "[config]\n" + text)
    out = {}
    for sec in cp.sections():
        out.update(dict(cp[sec]))
    return out


def lr_multiplier(step, total, warmup_ratio):
    warm = int(total * warmup_ratio)
    if warm and step < warm:
        return (step + 1) / warm
    return max(0.0, (total - step) / max(1, total - warm))


class AdamW:
    """Adam moments with decoupled weight decay, two learning-rate groups."""

    def __init__(self, params, lr_groups, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr_groups = lr_groups  # name -> base learning rate
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.m = {k: np.zeros(p.shape) for k, p in params.items()}
        self.v = {k: np.zeros(p.shape) for k, p in params.items()}
        self.t = 0

    def step(self, scale=1.0):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            lr = self.lr_groups[k] * scale
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad ** 2
            if lr == 0.0:
                continue
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if p.ndim >= 2 and self.wd:
                update = update + self.wd * p.values
            p.values -= lr * update


def clip_grad_norm(params, max_norm):
    total = math.sqrt(sum(float((p.grad ** 2).sum()) for p in params.values() if p.grad is not None))
    if max_norm and total > max_norm:
        f = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= f
    return total


@dataclass
class TrainResult:
    model: Model
    history: list
    best_dev_f1: float | None
    best_epoch: int


def prepare_corpus(corpus, model, cfg):
    feats = []
    for i, d in enumerate(corpus):
        feats.append(prepare(d, model.vocab, model.n_relations, cfg.anaphor_mode, stream(cfg.seed, "graph", i),
                             exclude_mention_overlap=cfg.exclude_mention_overlap))
    return feats


def train(corpus, cfg, dev=None, log_path=None, checkpoint_path=None, vocab=None, eval_corpus=None):
    """Optimise a fresh model on ``corpus``; keeps the parameters with the best dev F1.

    ``eval_corpus`` overrides what is scored each evaluation epoch (defaults to
    ``dev``); without either, the final parameters are kept.
    """
    vocab = vocab or build_vocab(corpus, cfg.min_count)
    model = Model(cfg.model_config(), vocab, corpus.relations, rng=stream(cfg.seed, "init"))
    feats = prepare_corpus(corpus, model, cfg)
    scored = eval_corpus if eval_corpus is not None else dev
    scored_feats = None
    if scored is not None:
        scored_feats = [prepare(d, vocab, model.n_relations, cfg.anaphor_mode, stream(cfg.seed, "graph-dev", i),
                                exclude_mention_overlap=cfg.exclude_mention_overlap)
                        for i, d in enumerate(scored)]
    lr_groups = {k: (cfg.lr_encoder if k.startswith("enc.") else cfg.lr_classifier) for k in model.params}
    opt = AdamW(model.params, lr_groups, weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(len(feats) / cfg.batch_size) if feats else 0
    total = steps_per_epoch * cfg.epochs
    beta = cfg.effective_beta
    history, best_f1, best_epoch, best_state = [], None, -1, None
    log_fh = open(log_path, "w") if log_path else None
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = stream(cfg.seed, "shuffle", epoch).permutation(len(feats))
            sums = np.zeros(3)
            for b0 in range(0, len(order), cfg.batch_size):
                batch = order[b0:b0 + cfg.batch_size]
                model.zero_grad()
                drop = stream(cfg.seed, "dropout", step)
                terms = np.zeros(3)
                for j in batch:
                    if len(feats[j].pairs) == 0:
                        continue
                    _, out = model.forward(feats[j], train=True, rng=drop)
                    l_re, l_evi, loss = document_losses(out, feats[j], beta)
                    vals = np.array([l_re.item(), l_evi.item(), loss.item()])
                    if not np.all(np.isfinite(vals)):
                        raise TrainingDivergedError(
                            f"non-finite loss at epoch {epoch} step {step} on document "
                            f"{feats[j].doc.doc_id!r}: L_re={vals[0]}, L_evi={vals[1]}, L={vals[2]}")
                    ag.backward(ag.scale(loss, 1.0 / len(batch)))
                    terms += vals / len(batch)
                clip_grad_norm(model.params, cfg.grad_clip)
                mult = lr_multiplier(step, total, cfg.warmup_ratio)
                opt.step(mult)
                sums += terms * len(batch)
                if log_fh:
                    log_fh.write(json.dumps({"epoch": epoch, "step": step, "L_re": terms[0], "L_evi": terms[1],
                                             "L_total": terms[2], "lr": cfg.lr_classifier * mult,
                                             "dev_F1": None}) + "\n")
                step += 1
            mean = sums / max(1, len(feats))
            rec = {"epoch": epoch, "step": step, "L_re": mean[0], "L_evi": mean[1], "L_total": mean[2],
                   "lr": cfg.lr_classifier * lr_multiplier(max(0, step - 1), total, cfg.warmup_ratio),
                   "dev_F1": None}
            last = epoch == cfg.epochs - 1
            if scored is not None and ((epoch + 1) % cfg.eval_every == 0 or last):
                preds = predict_corpus(scored, model, cfg.anaphor_mode, features=scored_feats)
                f1 = evaluate(all_triples(preds), scored)["F1"]
                rec["dev_F1"] = f1
                if best_f1 is None or f1 > best_f1:
                    best_f1, best_epoch, best_state = f1, epoch, model.state()
            history.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            log.info("epoch %d  L=%.4f  L_re=%.4f  L_evi=%.4f  dev_F1=%s", epoch, mean[2], mean[0], mean[1],
                     rec["dev_F1"])
    finally:
        if log_fh:
            log_fh.close()
    if best_state is not None:
        for k, v in best_state.items():
            model.params[k].values = v
    else:
        best_epoch = cfg.epochs - 1
    if checkpoint_path:
        save_checkpoint(model, checkpoint_path, extra={"train_config": asdict(cfg), "best_epoch": best_epoch,
                                                       "best_dev_f1": best_f1})
    return TrainResult(model, history, best_f1, best_epoch)
