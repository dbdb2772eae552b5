"""Parameter container, per-document feature preparation and checkpoints."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .corpus import Vocabulary, mark_entities
from .encoder import EncoderConfig, anaphor_span_positions, encode, init_encoder
from .graph import build_graph, extract_anaphors
from .network import NetworkConfig, aa_forward, init_network


@dataclass
class DocFeatures:
    doc: object
    marked: object
    ids: np.ndarray
    graph: object
    pairs: np.ndarray  # (P, 2)
    labels: np.ndarray  # (P, |R|+1) multi-hot, threshold column last (never set)
    evidence: list  # per pair: sorted gold evidence sentence ids (empty if none)
    entity_marker_rows: list  # per entity: opening-marker positions
    entity_attention_weights: np.ndarray  # (E, l) averaging weights over marker rows
    entity_node_rows: list  # per entity: graph node indices of its mentions
    node_select: np.ndarray  # (n, l) node initialisation weights over H rows
    edge_matrices: list
    sentence_matrix: np.ndarray  # (l, |S|)


def prepare(doc, vocab, n_relations, anaphor_mode="full", rng=None, anaphors=None,
            exclude_mention_overlap=True, diagnostics=None):
    """Everything the forward pass needs for ``doc`` that does not depend on parameters."""
    marked = mark_entities(doc)
    if anaphors is None:
        anaphors = (extract_anaphors(doc, exclude_mention_overlap, diagnostics)
                    if doc.parse is not None else [])
    graph = build_graph(doc, anaphors, anaphor_mode, rng)
    l = len(marked)
    E = len(doc.entities)
    ent_rows = [[marked.mention_start_index[(ei, mi)] for mi in range(len(e.mentions))]
                for ei, e in enumerate(doc.entities)]
    att_w = np.zeros((E, l))
    for ei, rows in enumerate(ent_rows):
        att_w[ei, rows] += 1.0 / len(rows)
    node_rows = [[] for _ in range(E)]
    select = np.zeros((graph.n, l))
    mention_iter = iter([(ei, mi) for ei, e in enumerate(doc.entities) for mi in range(len(e.mentions))])
    for i, v in enumerate(graph.nodes):
        if v.kind == "mention":
            key = next(mention_iter)
            node_rows[key[0]].append(i)
            select[i, marked.mention_start_index[key]] = 1.0
        else:
            rows = anaphor_span_positions(doc, marked, v)
            select[i, rows] = 1.0 / len(rows)
    pairs = np.array([(h, t) for h in range(E) for t in range(E) if h != t], dtype=np.int64).reshape(-1, 2)
    pair_pos = {(int(h), int(t)): i for i, (h, t) in enumerate(pairs)}
    labels = np.zeros((len(pairs), n_relations + 1))
    evidence = [set() for _ in range(len(pairs))]
    for f in doc.facts:
        i = pair_pos[(f.head, f.tail)]
        labels[i, f.relation] = 1.0
        evidence[i] |= set(f.evidence)
    return DocFeatures(doc, marked, vocab.encode(marked), graph, pairs, labels,
                       [sorted(e) for e in evidence], ent_rows, att_w, node_rows, select,
                       [m.astype(np.float64) for m in graph.matrices()], marked.sentence_matrix())


@dataclass
class ModelConfig:
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
    use_graph: bool = True
    shared_bias: bool = True


class Model:
    """Encoder plus relational core, parameters held as named leaf tensors."""

    def __init__(self, cfg, vocab, relations, rng=None, params=None):
        self.cfg = cfg
        self.vocab = vocab
        self.relations = list(relations)
        self.enc_cfg = EncoderConfig(len(vocab), cfg.hidden, cfg.layers, cfg.heads, cfg.max_len,
                                     cfg.ffn, cfg.dropout, cfg.k_att)
        self.net_cfg = NetworkConfig(cfg.hidden, len(self.relations), cfg.gcn_layers, cfg.iterations,
                                     cfg.graph_heads, cfg.groups, cfg.use_graph, cfg.shared_bias)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            raw = init_encoder(self.enc_cfg, rng) | init_network(self.net_cfg, rng)
            params = {k: ag.Tensor(v, requires_grad=True, name=k) for k, v in raw.items()}
        self.params = params
        self.extra = {}

    @property
    def n_relations(self):
        return len(self.relations)

    def forward(self, feats, train=False, rng=None):
        out = encode(self.params, self.enc_cfg, feats.ids, train=train, rng=rng)
        return out, aa_forward(self.params, self.net_cfg, feats, out)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self):
        return {k: v.values.copy() for k, v in self.params.items()}


# checkpoint -----------------------------------------------------------------------------

MAGIC = b"AARECKPT"
FORMAT_VERSION = 1


def relation_hash(relations):
    return hashlib.sha256("\n".join(relations).encode()).hexdigest()[:16]


def save_checkpoint(model, path, extra=None):
    """Header (magic, version, JSON echo) then float64 little-endian tensors in fixed order."""
    names = list(model.params)
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.cfg),
        "relations": model.relations,
        "relation_hash": relation_hash(model.relations),
        "vocab": model.vocab.itos,
        "tensors": [[n, list(model.params[n].shape)] for n in names],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].values, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, n = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        header = json.loads(fh.read(n))
        params = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointError(f"{path}: truncated at tensor {name!r}")
            arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            params[name] = ag.Tensor(arr, requires_grad=True, name=name)
    if relation_hash(header["relations"]) != header["relation_hash"]:
        raise CheckpointError(f"{path}: relation vocabulary hash mismatch")
    model = Model(ModelConfig(**header["config"]), Vocabulary(header["vocab"]), header["relations"],
                  params=params)
    model.extra = header.get("extra", {})
    return model
