"""Small pre-norm transformer producing token states H and aggregated attention A."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag


class DocumentTooLongError(ValueError):
    pass


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden: int = 64
    layers: int = 2
    heads: int = 2
    max_len: int = 512
    ffn: int = 128
    dropout: float = 0.1
    k_att: int = 3

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden size {self.hidden} not divisible by {self.heads} heads")
        if self.k_att < 1:
            raise ValueError("k_att must be positive")


@dataclass
class EncoderOutput:
    H: ag.Tensor  # (l, d)
    A: ag.Tensor  # (l, l), row-stochastic


def init_encoder(cfg, rng):
    d, f = cfg.hidden, cfg.ffn
    p = {
        "enc.tok": rng.normal(0.0, 1.0, (cfg.vocab_size, d)) * d ** -0.5,
        "enc.pos": rng.normal(0.0, 1.0, (cfg.max_len, d)) * d ** -0.5,
    }
    for i in range(cfg.layers):
        p |= {
            f"enc.{i}.ln1.g": np.ones(d), f"enc.{i}.ln1.b": np.zeros(d),
            f"enc.{i}.qkv.w": rng.normal(0.0, d ** -0.5, (d, 3 * d)), f"enc.{i}.qkv.b": np.zeros(3 * d),
            f"enc.{i}.out.w": rng.normal(0.0, d ** -0.5, (d, d)), f"enc.{i}.out.b": np.zeros(d),
            f"enc.{i}.ln2.g": np.ones(d), f"enc.{i}.ln2.b": np.zeros(d),
            f"enc.{i}.ff1.w": rng.normal(0.0, d ** -0.5, (d, f)), f"enc.{i}.ff1.b": np.zeros(f),
            f"enc.{i}.ff2.w": rng.normal(0.0, f ** -0.5, (f, d)), f"enc.{i}.ff2.b": np.zeros(d),
        }
    p |= {"enc.lnf.g": np.ones(d), "enc.lnf.b": np.zeros(d)}
    return p


def encode(params, cfg, ids, train=False, rng=None):
    """Run the encoder over marked token ids.

    H averages the (final-normed) hidden states of the last ``min(k_att, L)``
    layers; A averages post-softmax attention over heads and the same layers.
    """
    ids = np.asarray(ids, dtype=np.int64)
    n = len(ids)
    if n > cfg.max_len:
        raise DocumentTooLongError(f"document has {n} marked tokens, encoder max_len is {cfg.max_len}")
    d, nh = cfg.hidden, cfg.heads
    dk = d // nh
    rate = cfg.dropout if train else 0.0
    x = ag.embedding(params["enc.tok"], ids) + ag.slice_rows(params["enc.pos"], 0, n)
    x = ag.dropout(x, rate, rng)
    states, attns = [], []
    for i in range(cfg.layers):
        h = ag.layer_norm(x, params[f"enc.{i}.ln1.g"], params[f"enc.{i}.ln1.b"])
        qkv = h @ params[f"enc.{i}.qkv.w"] + params[f"enc.{i}.qkv.b"]
        qkv = ag.transpose(ag.reshape(qkv, (n, 3, nh, dk)), (1, 2, 0, 3))  # (3, heads, l, dk)
        q, k, v = qkv[0], qkv[1], qkv[2]
        probs = ag.softmax(ag.scale(q @ ag.transpose(k, (0, 2, 1)), dk ** -0.5), axis=-1)
        ctx = ag.reshape(ag.transpose(ag.dropout(probs, rate, rng) @ v, (1, 0, 2)), (n, d))
        x = x + ag.dropout(ctx @ params[f"enc.{i}.out.w"] + params[f"enc.{i}.out.b"], rate, rng)
        h = ag.layer_norm(x, params[f"enc.{i}.ln2.g"], params[f"enc.{i}.ln2.b"])
        ff = ag.relu(h @ params[f"enc.{i}.ff1.w"] + params[f"enc.{i}.ff1.b"])
        x = x + ag.dropout(ff @ params[f"enc.{i}.ff2.w"] + params[f"enc.{i}.ff2.b"], rate, rng)
        states.append(x)
        attns.append(probs)
    k_used = min(cfg.k_att, cfg.layers)
    last = states[-k_used:]
    H = last[0] if k_used == 1 else ag.mean(ag.stack(last), axis=0)
    H = ag.layer_norm(H, params["enc.lnf.g"], params["enc.lnf.b"])
    A = ag.mean(attns[-1], axis=0) if k_used == 1 else ag.mean(
        ag.reshape(ag.stack(attns[-k_used:]), (k_used * nh, n, n)), axis=0)
    return EncoderOutput(H, A)


def mention_embedding(out, marked, mention_key):
    """Row of H at the mention's opening marker; ``mention_key`` is (entity, mention) index."""
    if mention_key not in marked.mention_start_index:
        raise KeyError(f"mention {mention_key} not registered in marked document")
    return out.H[marked.mention_start_index[mention_key]]


def anaphor_span_positions(doc, marked, anaphor):
    offs = doc.sentence_offsets()
    a = offs[anaphor.sent_id] + anaphor.start
    b = offs[anaphor.sent_id] + anaphor.end
    return marked.orig_to_marked[a:b]


def anaphor_embedding(out, doc, marked, anaphor):
    """Mean of H over the anaphor's tokens, in marked coordinates."""
    rows = anaphor_span_positions(doc, marked, anaphor)
    if len(rows) == 0:
        raise ValueError(f"anaphor {anaphor} maps to an empty span")
    return ag.mean(ag.take_rows(out.H, rows), axis=0)
