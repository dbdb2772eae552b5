"""Adaptive-threshold relation loss, evidence KL supervision and their combination."""

from __future__ import annotations

import numpy as np

from . import autograd as ag

# finite stand-in for -inf inside the losses: exp underflows to exactly 0 and 0 * mask stays 0
_NEG = -1e30
SMOOTH = 1e-8


def atl_loss_batch(logits, labels):
    """Per-pair adaptive-threshold loss, shape (P,). Threshold class is the last column."""
    labels = np.asarray(labels, dtype=np.float64)
    if np.any(labels[:, -1] != 0):
        raise ValueError("the threshold class cannot be a positive label")
    th = np.zeros_like(labels)
    th[:, -1] = 1.0
    keep_pos = labels + th  # P ∪ {TH}
    keep_neg = 1.0 - labels  # N ∪ {TH}
    logp_pos = _masked_log_softmax(logits, keep_pos)
    logp_neg = _masked_log_softmax(logits, keep_neg)
    term1 = -ag.sum(logp_pos * labels, axis=-1)
    term2 = -ag.sum(logp_neg * th, axis=-1)
    return term1 + term2


def _masked_log_softmax(logits, keep):
    x = logits * keep + (1.0 - keep) * _NEG
    return x - ag.logsumexp(x, axis=-1, keepdims=True)


def atl_loss(logits, positives):
    """Adaptive-threshold loss of one pair; ``logits`` has |R|+1 entries, TH last."""
    logits = ag.tensor(logits)
    n = logits.shape[-1]
    positives = set(positives)
    if n - 1 in positives:
        raise ValueError("TH cannot be listed among the positive relations")
    labels = np.zeros((1, n))
    labels[0, sorted(positives)] = 1.0
    return ag.reshape(atl_loss_batch(ag.reshape(logits, (1, n)), labels), ())


def evidence_distribution(A_head, A_tail, sentence_matrix, eps=1e-10):
    """Token weights q and sentence importance p = q summed within each sentence.

    ``sentence_matrix`` is (l, |S|) with exactly one 1 per row.
    """
    S = np.asarray(sentence_matrix)
    if S.ndim != 2 or not np.all(S.sum(axis=1) == 1) or not np.all((S == 0) | (S == 1)):
        raise ValueError("sentence spans must partition the token positions")
    w = ag.tensor(A_head) * ag.tensor(A_tail)
    q = w / ag.clamp_min(ag.sum(w, axis=-1, keepdims=True), eps)
    if q.ndim == 1:
        return q, ag.reshape(ag.reshape(q, (1, -1)) @ S, (S.shape[1],))
    return q, q @ S


def gold_evidence_distribution(evidence, n_sentences):
    v = np.zeros(n_sentences)
    if evidence:
        v[list(evidence)] = 1.0 / len(evidence)
    return v


def _smooth(x, eps=SMOOTH):
    x = ag.tensor(x) + eps
    return x / ag.sum(x, axis=-1, keepdims=True)


def evidence_loss(p, v, eps=SMOOTH):
    """KL(v || p) with p eps-smoothed; summed over rows when batched.

    Zero entries of v contribute nothing (0 ln 0 = 0), so v needs no smoothing.
    """
    p_s = _smooth(p, eps)
    v = np.asarray(v, dtype=np.float64)
    v_log_v = np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
    return ag.sum(ag.tensor(v_log_v) - ag.log(p_s) * v)


def total_loss(l_re, l_evi, beta):
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return ag.add(l_re, ag.scale(l_evi, beta))


def document_losses(pair_out, feats, beta):
    """(L_re, L_evi, L) for one document.

    L_re averages the pair losses; L_evi sums KL over pairs holding a gold
    relation with at least one evidence sentence.
    """
    l_re = ag.mean(atl_loss_batch(pair_out.logits, feats.labels))
    rows = [i for i, ev in enumerate(feats.evidence) if ev and feats.labels[i].any()]
    if beta > 0 and rows:
        p = pair_out.token_weights[np.array(rows)] @ feats.sentence_matrix
        v = np.stack([gold_evidence_distribution(feats.evidence[i], feats.sentence_matrix.shape[1])
                      for i in rows])
        l_evi = evidence_loss(p, v)
    else:
        l_evi = ag.Tensor(0.0)
    return l_re, l_evi, total_loss(l_re, l_evi, beta)
