"""Entity/context pooling, dynamic adjacency, residual GCN and the bilinear relation head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag

EPS = 1e-10
MASKED = -np.inf


@dataclass
class NetworkConfig:
    hidden: int = 64
    n_relations: int = 1  # |R|; logits carry one extra threshold column
    gcn_layers: int = 2
    iterations: int = 2
    graph_heads: int = 2
    groups: int = 2
    use_graph: bool = True
    shared_bias: bool = True
    n_edge_types: int = 3

    def __post_init__(self):
        if self.hidden % self.groups:
            raise ValueError(f"hidden size {self.hidden} not divisible into {self.groups} bilinear groups")


def init_network(cfg, rng):
    d, U, nh = cfg.hidden, cfg.n_edge_types, cfg.graph_heads
    k = d // cfg.groups
    width = 3 * d if cfg.use_graph else 2 * d
    p = {}
    if cfg.use_graph:
        p["aa.adj.q"] = rng.normal(0.0, d ** -0.5, (d, U * nh * d))
        p["aa.adj.k"] = rng.normal(0.0, d ** -0.5, (d, U * nh * d))
        for i in range(cfg.gcn_layers):
            p[f"aa.gcn.{i}.w"] = rng.normal(0.0, d ** -0.5, (d, d))
            p[f"aa.gcn.{i}.b"] = np.zeros(d)
    p["aa.head.w"] = rng.normal(0.0, width ** -0.5, (width, d))
    p["aa.tail.w"] = rng.normal(0.0, width ** -0.5, (width, d))
    p["aa.head.b"] = np.zeros(d)
    if not cfg.shared_bias:
        p["aa.tail.b"] = np.zeros(d)
    p["aa.bil.w"] = rng.normal(0.0, (d * k) ** -0.5, (d * k, cfg.n_relations + 1))
    p["aa.bil.b"] = np.zeros(cfg.n_relations + 1)
    return p


# pooling ---------------------------------------------------------------------------

def entity_pool(mention_embs):
    """Coordinate-wise logsumexp over a list of mention vectors."""
    if len(mention_embs) == 0:
        raise ValueError("entity_pool needs at least one mention embedding")
    return ag.logsumexp(ag.stack(mention_embs), axis=0)


def group_index(groups):
    """Padded gather index and additive -inf mask for ragged row groups."""
    width = max(len(g) for g in groups)
    idx = np.zeros((len(groups), width), dtype=np.int64)
    mask = np.full((len(groups), width, 1), MASKED)
    for i, g in enumerate(groups):
        idx[i, :len(g)] = g
        mask[i, :len(g)] = 0.0
    return idx, mask


def grouped_logsumexp(x, groups):
    """logsumexp over each group of rows of ``x``; one output row per group."""
    if any(len(g) == 0 for g in groups):
        raise ValueError("entity with zero mention nodes")
    idx, mask = group_index(groups)
    return ag.logsumexp(ag.take_rows(x, idx) + mask, axis=1)


def entity_attention(out, marked, entity_index, n_mentions):
    """Mean of the A rows at the entity's opening-marker positions."""
    rows = [marked.mention_start_index[(entity_index, mi)] for mi in range(n_mentions)]
    return ag.mean(ag.take_rows(out.A, rows), axis=0)


def context_pool(H, A_head, A_tail, eps=EPS):
    """H^T (A_head * A_tail) / (A_head . A_tail); rows of A_* may be batched pairs."""
    q = pair_token_weights(A_head, A_tail, eps)
    return q @ H if q.ndim == 2 else ag.reshape(ag.reshape(q, (1, -1)) @ H, (H.shape[1],))


def pair_token_weights(A_head, A_tail, eps=EPS):
    w = A_head * A_tail
    denom = ag.clamp_min(ag.sum(w, axis=-1, keepdims=True), eps)
    return w / denom


# graph ------------------------------------------------------------------------------

def _adjacency_masks(edge_matrices):
    support = np.sum([np.asarray(m) for m in edge_matrices], axis=0) > 0
    has_nb = support.any(axis=1)
    # isolated rows get a finite dummy row, zeroed after the softmax
    additive = np.where(support | ~has_nb[:, None], 0.0, MASKED)
    return support, has_nb, additive


def dynamic_adjacency(H_V, edge_matrices, wq, wk, heads):
    """Masked row-softmax of type-gated multi-head attention scores."""
    n, d = H_V.shape
    U = len(edge_matrices)
    if any(np.shape(m) != (n, n) for m in edge_matrices):
        raise ag.ShapeError(f"edge matrices must be {n}x{n} to match H_V {H_V.shape}")
    if wq.shape != (d, U * heads * d) or wk.shape != (d, U * heads * d):
        raise ag.ShapeError(f"query/key maps {wq.shape}, {wk.shape} do not fit d={d}, U={U}, heads={heads}")
    if n == 0:
        return ag.Tensor(np.zeros((0, 0)))
    support, has_nb, additive = _adjacency_masks(edge_matrices)
    Q = ag.transpose(ag.reshape(H_V @ wq, (n, U * heads, d)), (1, 0, 2))
    K = ag.transpose(ag.reshape(H_V @ wk, (n, U * heads, d)), (1, 2, 0))
    S = ag.reshape(ag.scale(Q @ K, d ** -0.5), (U, heads, n, n))
    gate = np.stack([np.asarray(m, dtype=np.float64) for m in edge_matrices])[:, None]
    raw = ag.mean(ag.sum(S * gate, axis=0), axis=0)
    att = ag.softmax(raw + additive, axis=-1)
    return att * has_nb[:, None].astype(np.float64)


def gcn_layer(g_prev, adj, w, b):
    """relu(adj @ g_prev @ w + b) + g_prev (node-wise residual)."""
    return ag.relu(adj @ (g_prev @ w) + b) + g_prev


# forward --------------------------------------------------------------------------

def bilinear(z_head, z_tail, w, b, groups):
    P, d = z_head.shape
    k = d // groups
    outer = ag.reshape(z_head, (P, groups, k, 1)) * ag.reshape(z_tail, (P, groups, 1, k))
    return ag.reshape(outer, (P, groups * k * k)) @ w + b


@dataclass
class PairOutput:
    pairs: np.ndarray  # (P, 2) entity indices
    logits: ag.Tensor  # (P, |R|+1), threshold class last
    token_weights: ag.Tensor  # (P, l) pair attention q
    adjacency: list  # dynamic adjacency per iteration


def aa_forward(params, cfg, feats, out):
    """Pair logits for every ordered entity pair of one prepared document.

    ``feats`` is a :class:`anaphor_re.model.DocFeatures`; ``out`` the encoder output.
    """
    H, A = out.H, out.A
    h_ent = grouped_logsumexp(H, feats.entity_marker_rows)
    A_ent = ag.matmul(feats.entity_attention_weights, A)  # (E, l)
    hi, ti = feats.pairs[:, 0], feats.pairs[:, 1]
    A_h, A_t = ag.take_rows(A_ent, hi), ag.take_rows(A_ent, ti)
    q = pair_token_weights(A_h, A_t)
    c = q @ H
    adjs = []
    parts_h = [ag.take_rows(h_ent, hi), c]
    parts_t = [ag.take_rows(h_ent, ti), c]
    if cfg.use_graph:
        g = ag.matmul(feats.node_select, H)  # (n, d) initial node states
        mats = feats.edge_matrices
        for _ in range(cfg.iterations):
            adj = dynamic_adjacency(g, mats, params["aa.adj.q"], params["aa.adj.k"], cfg.graph_heads)
            adjs.append(adj)
            for k in range(cfg.gcn_layers):
                g = gcn_layer(g, adj, params[f"aa.gcn.{k}.w"], params[f"aa.gcn.{k}.b"])
        g_ent = grouped_logsumexp(g, feats.entity_node_rows)
        parts_h.append(ag.take_rows(g_ent, hi))
        parts_t.append(ag.take_rows(g_ent, ti))
    b_tail = params["aa.head.b"] if cfg.shared_bias else params["aa.tail.b"]
    z_h = ag.tanh(ag.concat(parts_h, axis=-1) @ params["aa.head.w"] + params["aa.head.b"])
    z_t = ag.tanh(ag.concat(parts_t, axis=-1) @ params["aa.tail.w"] + b_tail)
    logits = bilinear(z_h, z_t, params["aa.bil.w"], params["aa.bil.b"], cfg.groups)
    return PairOutput(feats.pairs, logits, q, adjs)
