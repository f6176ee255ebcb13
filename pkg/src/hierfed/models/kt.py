"""Knowledge-tracing model: LSTM over item one-hots, 2-way softmax head.

The hidden state after consuming item t produces the probability of a
correct response to item t+1; the first response is never a target and the
last hidden state is never scored, so a length-L sequence has L-1 scored
steps.
"""

from __future__ import annotations

import numpy as np

from ..nn.layers import PROB_CLAMP, lstm_forward, lstm_backward, softmax_probs
from ..nn.params import ParamSet, ShapeError, as_grads
from .encoding import InteractionSeq, ModelSpec, Vocab, encode_kt_student, pad_batch


def kt_init(model: ModelSpec, rng: np.random.Generator) -> ParamSet:
    """Uniform(-1/sqrt(fan_in)) weights, zero biases."""
    if model.task != "KT":
        raise ValueError(f"expected a KT model spec, got {model.task}")
    d, k = model.input_dim, model.hidden_dim
    s_in = 1.0 / np.sqrt(d + k)
    s_out = 1.0 / np.sqrt(k)
    return ParamSet({
        "lstm.W": rng.uniform(-s_in, s_in, (d + k, 4 * k)),
        "lstm.b": np.zeros(4 * k),
        "out.W": rng.uniform(-s_out, s_out, (k, 2)),
        "out.b": np.zeros(2),
    })


def _head(params: ParamSet, k: int):
    W = params["out.W"]
    b = params["out.b"]
    if W.shape != (k, 2):
        raise ShapeError(f"out.W must be ({k}, 2), got {W.shape}")
    if b.shape != (2,):
        raise ShapeError(f"out.b must be (2,), got {b.shape}")
    return W, b


def kt_loss_grad(x, lengths, targets, params: ParamSet):
    """Loss, gradient, and per-step probabilities on an encoded padded batch.

    x: (B, T, D); lengths: scored steps per student; targets: (B, T) int
    responses, only entries before each length are read. Returns
    (loss, grads, probs) with probs (B, T, 2); rows past a student's length
    are meaningless and must be ignored by callers.
    """
    x = np.asarray(x, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    B, T, _ = x.shape
    k = params["lstm.b"].size // 4
    W, b = _head(params, k)

    h_seq, cache = lstm_forward(x, lengths, params)
    logits = h_seq @ W + b
    probs = softmax_probs(logits)
    valid = np.arange(T)[None, :] < lengths[:, None]

    safe_t = np.where(valid, targets, 0)
    onehot = np.zeros((B, T, 2))
    np.put_along_axis(onehot, safe_t[:, :, None], 1.0, axis=2)

    picked = np.take_along_axis(probs, safe_t[:, :, None], axis=2)[:, :, 0]
    picked = np.clip(picked, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-(np.log(picked) * valid).sum())

    dlogits = (probs - onehot) * valid[:, :, None]
    dW = np.einsum("btk,btj->kj", h_seq, dlogits)
    db = dlogits.sum(axis=(0, 1))
    dh_seq = dlogits @ W.T
    g_lstm, _, _ = lstm_backward(dh_seq, cache, params)

    grads = as_grads({
        "lstm.W": g_lstm["lstm.W"], "lstm.b": g_lstm["lstm.b"],
        "out.W": dW, "out.b": db,
    })
    return loss, grads, probs


def kt_forward(seq: InteractionSeq, params: ParamSet, vocab: Vocab):
    """Single-student forward pass.

    Returns (probs (L-1, 2), h_seq (L-1, k), cache); probs[t] is the
    distribution over the response at step t+1.
    """
    x, _ = encode_kt_student(seq, vocab)
    k = params["lstm.b"].size // 4
    W, b = _head(params, k)
    h_seq, cache = lstm_forward(x[None, :, :], np.array([x.shape[0]]), params)
    probs = softmax_probs(h_seq @ W + b)
    return probs[0], h_seq[0], cache


def kt_loss(seqs, params: ParamSet, vocab: Vocab):
    """Loss and gradient over a batch of InteractionSeq (encodes on the fly)."""
    if not seqs:
        raise ValueError("kt_loss: empty batch")
    encoded = [encode_kt_student(s, vocab)[0] for s in seqs]
    targets = [encode_kt_student(s, vocab)[1] for s in seqs]
    x, lengths = pad_batch(encoded)
    T = x.shape[1]
    tpad = np.zeros((len(seqs), T), dtype=np.int64)
    for i, t in enumerate(targets):
        tpad[i, :t.size] = t
    loss, grads, _ = kt_loss_grad(x, lengths, tpad, params)
    return loss, grads


def kt_predict(x, lengths, targets, params: ParamSet):
    """Scores and labels for AUC: P(correct) per valid step, flattened.

    Returns (scores, labels) in batch-major, step-minor order.
    """
    x = np.asarray(x, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    k = params["lstm.b"].size // 4
    W, b = _head(params, k)
    h_seq, _ = lstm_forward(x, lengths, params)
    probs = softmax_probs(h_seq @ W + b)
    T = x.shape[1]
    valid = np.arange(T)[None, :] < lengths[:, None]
    return probs[:, :, 1][valid], targets[valid]
